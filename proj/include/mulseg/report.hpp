// Copyright 2026 The Mulseg Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <cstdint>
#include <vector>

namespace mulseg {

// Outcome of one active-learning round.
struct RoundReport {
  int round = 0;  // 1-based
  std::int64_t clicks = 0;
  std::int64_t cum_clicks = 0;
  std::int64_t overshoot = 0;
  double miou = 0.0;
  std::vector<double> per_class_iou;  // NaN for classes absent from pred and gt
  double stage1_loss = 0.0;
  double stage2_loss = 0.0;
  std::int64_t localized_pixels = 0;
  std::int64_t expanded_pixels = 0;
};

}  // namespace mulseg
