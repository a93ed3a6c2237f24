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
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "mulseg/model.hpp"
#include "mulseg/oracle.hpp"
#include "mulseg/superpixel.hpp"

namespace mulseg::acquisition {

using model::Matrix;
using model::Vector;

enum class Sampler { kRandom, kMargin, kBvsb, kClassBal, kPixBal };

const char* to_string(Sampler sampler);
Sampler parse_sampler(const std::string& text);

// P(second best) / P(best); argmax ties go to the lowest class.
double bvsb(std::span<const double> probs);
double bvsb(const Matrix& probs, Eigen::Index column);

// Mean predictive distribution over the columns of `probs`.
Vector estimate_class_distribution(const Matrix& probs);

// Running mean of predictive distributions across images.
class ClassDistributionEstimate {
 public:
  explicit ClassDistributionEstimate(Eigen::Index classes) : sum_(Vector::Zero(classes)) {}
  void add(const Matrix& probs);
  void add_column(const Matrix& probs, Eigen::Index column);
  Vector mean() const;

 private:
  Vector sum_;
  std::int64_t count_ = 0;
};

// (1/|s|) sum_x u(x) / (1 + nu * P(c_b(x)))^2.
double score_pixbal(const Matrix& probs, std::span<const int> region, const Vector& dist, double nu);
// mean_x u(x) / (1 + nu * P(mode of argmax over s))^2.
double score_classbal(const Matrix& probs, std::span<const int> region, const Vector& dist, double nu);
// Mean BvSB over the region.
double score_bvsb(const Matrix& probs, std::span<const int> region);
// mean_x 1 - (P(c_b) - P(c_sb)).
double score_margin(const Matrix& probs, std::span<const int> region);
// Hash-derived uniform score in [0, 1).
double score_random(RegionRef ref, int round, std::uint64_t seed);

// Most frequent per-pixel argmax class; ties to the lowest index.
int predicted_dominant_class(const Matrix& probs, std::span<const int> region);

struct AcquisitionScore {
  RegionRef ref;
  double score = 0.0;
  int dominant_class = -1;  // model class index; -1 when no model prediction
};

struct ScoringInputs {
  Sampler sampler = Sampler::kPixBal;
  double nu = 6.0;
  int round = 1;
  std::uint64_t seed = 0;
  // 0 uses every training pixel for the class distribution; otherwise a
  // seeded uniform subsample of this many pixels.
  std::int64_t distribution_sample = 0;
};

// Scores every unlabeled region. `params` may be null (random scores only).
std::vector<AcquisitionScore> score_regions(const ScoringInputs& inputs, const model::ModelParams* params,
                                            std::span<const model::FeatureMap> features,
                                            std::span<const superpixel::Partition> partitions,
                                            const oracle::LabeledPool& pool);

struct Selection {
  std::vector<std::pair<RegionRef, oracle::MultiClassLabel>> entries;
  std::int64_t clicks = 0;
  std::int64_t overshoot = 0;
  std::int64_t skipped_undefined = 0;
};

// Visits unlabeled regions by descending score (ties by ref), skips those
// predicted to be dominated by `undefined_index`, and queries the oracle
// until the clicks reach the budget; the crossing region is kept.
// Throws std::runtime_error("pool exhausted") when nothing is eligible.
Selection select_batch(std::vector<AcquisitionScore> scores, const oracle::LabeledPool& pool,
                       std::int64_t budget_clicks, oracle::LabelMode mode, oracle::Oracle& oracle,
                       int undefined_index);

// CSV `image,region,score,dominant_class` in descending score order.
void write_scores_csv(std::span<const AcquisitionScore> scores, const std::filesystem::path& path);

}  // namespace mulseg::acquisition
