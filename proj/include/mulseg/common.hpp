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

#include <compare>
#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace mulseg {

using ClassId = std::uint8_t;

// Reserved mask value for pixels outside the semantic classes.
inline constexpr ClassId kUndef = 255;

// Row-major RGB image with channels in [0, 1].
struct Image {
  int width = 0;
  int height = 0;
  std::vector<double> data;

  Image() = default;
  Image(int w, int h) : width(w), height(h), data(std::size_t(w) * h * 3, 0.0) {}

  std::size_t pixel_count() const { return std::size_t(width) * height; }
  double& at(int x, int y, int ch) { return data[(std::size_t(y) * width + x) * 3 + ch]; }
  double at(int x, int y, int ch) const { return data[(std::size_t(y) * width + x) * 3 + ch]; }

  bool operator==(const Image&) const = default;
};

// Row-major class-id mask. Values are < class_count or kUndef.
struct Mask {
  int width = 0;
  int height = 0;
  int class_count = 0;
  std::vector<ClassId> data;

  Mask() = default;
  Mask(int w, int h, int classes, ClassId fill = 0)
      : width(w), height(h), class_count(classes), data(std::size_t(w) * h, fill) {}

  std::size_t pixel_count() const { return std::size_t(width) * height; }
  ClassId& at(int x, int y) { return data[std::size_t(y) * width + x]; }
  ClassId at(int x, int y) const { return data[std::size_t(y) * width + x]; }

  bool operator==(const Mask&) const = default;
};

// Model-side class index: semantic classes keep their id, kUndef maps to
// the extra last slot.
inline int class_index(ClassId id, int class_count) {
  return id == kUndef ? class_count : int(id);
}
inline ClassId class_id(int index, int class_count) {
  return index == class_count ? kUndef : ClassId(index);
}

// A region of one training image.
struct RegionRef {
  int image = 0;
  int region = 0;

  auto operator<=>(const RegionRef&) const = default;
};

// Raised on malformed input files or datasets.
class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised on invalid configuration values or inconsistent dimensions.
class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Raised when a numerical routine cannot produce a finite result.
class NumericError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

}  // namespace mulseg
