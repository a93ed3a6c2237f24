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
#include <span>
#include <utility>
#include <vector>

#include "mulseg/dataio.hpp"
#include "mulseg/model.hpp"
#include "mulseg/oracle.hpp"
#include "mulseg/rng.hpp"
#include "mulseg/superpixel.hpp"

namespace mulseg::training {

using model::Matrix;
using model::Vector;

// A labeled region inside a batch: `pixels` index columns of the batch's
// feature/probability matrices, `classes` are sorted model class indices.
struct RegionSample {
  std::vector<int> pixels;
  std::vector<int> classes;
};

// (class index, pixel column) pairs, one per candidate class.
using Prototypes = std::vector<std::pair<int, int>>;

struct LossWeights {
  double lambda_ce = 16.0;
  double lambda_mp = 8.0;
  bool use_mp = true;
  bool use_pp = true;
};

struct LossBreakdown {
  double l_ce = 0.0;
  double l_mp = 0.0;
  double l_pp = 0.0;
  double total = 0.0;
  double lambda_ce = 0.0;
  double lambda_mp = 0.0;
};

// Mean over regions of the mean pixel -log P(c|x); every region must carry
// exactly one class. Empty input gives 0.
double loss_ce(const Matrix& probs, std::span<const RegionSample> regions);

// Mean over regions of the mean pixel -log sum_{c in Y} P(c|x).
double loss_mp(const Matrix& probs, std::span<const RegionSample> regions);

// For each candidate class, the region pixel with the highest P(c|x);
// ties go to the lowest column.
Prototypes prototypical_pixels(const Matrix& probs, std::span<const int> pixels, std::span<const int> classes);

// Mean over regions of (1/|Y|) sum_c -log P(c | prototypical pixel of c).
double loss_pp(const Matrix& probs, std::span<const RegionSample> regions);
double loss_pp(const Matrix& probs, std::span<const RegionSample> regions, std::span<const Prototypes> prototypes);

// Composes total = lambda_ce * l_ce + lambda_mp * l_mp + l_pp; disabled
// terms contribute 0. Throws NumericError naming the first non-finite term.
LossBreakdown combine(double l_ce, double l_mp, double l_pp, const LossWeights& weights);

struct Batch {
  Matrix features;  // F x N
  std::vector<RegionSample> single;
  std::vector<RegionSample> multi;
};

struct LossAndGrad {
  LossBreakdown loss;
  Vector grad;  // aligned with ModelParams::flatten()
};

// Prototype choice for every multi-class region of the batch under `params`.
std::vector<Prototypes> batch_prototypes(const model::ModelParams& params, const Batch& batch);

// Loss with prototype selection optionally frozen (used as the
// differentiable objective by gradient checks).
LossBreakdown total_loss(const model::ModelParams& params, const Batch& batch, const LossWeights& weights,
                         const std::vector<Prototypes>* frozen = nullptr);

// Exact reverse-mode gradient of total_loss; prototype selection is held
// constant during differentiation.
LossAndGrad total_loss_and_grad(const model::ModelParams& params, const Batch& batch, const LossWeights& weights);

// Per-pixel targets for plain cross-entropy training.
struct PixelTarget {
  int image = 0;
  int pixel = 0;
  int class_index = 0;
};

// Mean over columns of -log P(targets[j] | column j), with its gradient.
LossAndGrad pixel_ce_loss_and_grad(const model::ModelParams& params, const Matrix& features,
                                   std::span<const int> targets);

struct AdamWConfig {
  double lr = 2e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 1e-5;
};

struct OptimizerState {
  AdamWConfig config;
  Vector m;
  Vector v;
  std::int64_t step = 0;

  explicit OptimizerState(const AdamWConfig& cfg = {}, Eigen::Index size = 0)
      : config(cfg), m(Vector::Zero(size)), v(Vector::Zero(size)) {}
};

// Decoupled weight decay:
//   m <- b1 m + (1-b1) g,  v <- b2 v + (1-b2) g^2
//   p <- p - lr (m_hat / (sqrt(v_hat) + eps) + wd p)
void adamw_step(Vector& params, const Vector& grads, OptimizerState& state);

// Images visible to training: features and partitions share indices with
// the region refs stored in the pool.
struct TrainingData {
  std::span<const model::FeatureMap> features;
  std::span<const superpixel::Partition> partitions;
  int class_count = 0;  // semantic classes; model has class_count + 1 outputs
};

struct Stage1Config {
  int iterations = 2000;
  int regions_per_batch = 32;
  int pixels_per_region = 64;
  AdamWConfig adam{2e-3};
  LossWeights weights;
  int log_every = 0;  // 0 disables per-step logging
};

struct Stage2Config {
  int iterations = 2000;
  int pixels_per_batch = 2048;
  AdamWConfig adam{4e-3};
  int log_every = 0;
};

struct TrainResult {
  model::ModelParams params;
  LossBreakdown last_loss;
  int steps = 0;
};

// Samples a stage-1 minibatch from the pool (uniform regions, then up to
// pixels_per_region pixels per region without replacement).
Batch sample_stage1_batch(const oracle::LabeledPool& pool, const TrainingData& data, const Stage1Config& config,
                          Rng& rng);

TrainResult train_stage1(model::ModelParams params, const oracle::LabeledPool& pool, const TrainingData& data,
                         const Stage1Config& config, std::uint64_t seed, dataio::JsonlLog* log = nullptr);

// Cross-entropy fine-tuning on pseudo-labeled pixels, continuing from
// `params` with a fresh optimizer. Empty targets return params unchanged.
TrainResult train_stage2(model::ModelParams params, std::span<const PixelTarget> targets, const TrainingData& data,
                         const Stage2Config& config, std::uint64_t seed, dataio::JsonlLog* log = nullptr);

}  // namespace mulseg::training
