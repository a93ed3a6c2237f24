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

#include "mulseg/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace mulseg::training {
namespace {

constexpr double kNormFloor = 1e-12;

void check_finite(double v, const char* term) {
  if (!std::isfinite(v)) throw NumericError(std::string("numerical divergence in ") + term);
}

// Forward state kept for the backward pass.
struct Forward {
  model::Activations act;
  Matrix emb_unit;  // d x N
  Vector emb_norm;
  Matrix cls_unit;  // d x C'
  Vector cls_norm;
  Matrix probs;  // C' x N
};

void unit_columns(const Matrix& m, Matrix& unit, Vector& norms) {
  unit.resize(m.rows(), m.cols());
  norms.resize(m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double n = m.col(c).norm();
    if (n == 0.0) throw NumericError("degenerate direction: zero vector in column " + std::to_string(c));
    norms(c) = std::max(n, kNormFloor);
    unit.col(c) = m.col(c) / norms(c);
  }
}

Forward run_forward(const model::ModelParams& params, const Matrix& features) {
  Forward f;
  f.act = model::forward(features, params);
  unit_columns(f.act.embedding, f.emb_unit, f.emb_norm);
  unit_columns(params.classifier, f.cls_unit, f.cls_norm);
  f.probs = (f.cls_unit.transpose() * f.emb_unit) / params.tau;
  for (Eigen::Index j = 0; j < f.probs.cols(); ++j) {
    auto col = f.probs.col(j);
    col = (col.array() - col.maxCoeff()).exp().matrix();
    col /= col.sum();
  }
  return f;
}

// Gradient through v -> v / max(|v|, floor) for every column.
Matrix unit_backward(const Matrix& grad_unit, const Matrix& unit, const Vector& norms, const Matrix& raw) {
  Matrix g(grad_unit.rows(), grad_unit.cols());
  for (Eigen::Index c = 0; c < g.cols(); ++c) {
    if (raw.col(c).norm() < kNormFloor) {
      g.col(c) = grad_unit.col(c) / kNormFloor;
    } else {
      g.col(c) = (grad_unit.col(c) - grad_unit.col(c).dot(unit.col(c)) * unit.col(c)) / norms(c);
    }
  }
  return g;
}

// Back-propagates dL/dlogits (C' x N) to a flat parameter gradient.
Vector backward(const model::ModelParams& params, const Matrix& features, const Forward& f,
                const Matrix& grad_logits) {
  const Matrix grad_cos = grad_logits / params.tau;
  const Matrix grad_emb_unit = f.cls_unit * grad_cos;               // d x N
  const Matrix grad_cls_unit = f.emb_unit * grad_cos.transpose();   // d x C'
  const Matrix grad_emb = unit_backward(grad_emb_unit, f.emb_unit, f.emb_norm, f.act.embedding);
  const Matrix grad_cls = unit_backward(grad_cls_unit, f.cls_unit, f.cls_norm, params.classifier);

  model::ModelParams g;
  g.out_w = grad_emb * f.act.hidden.transpose();
  g.out_b = grad_emb.rowwise().sum();
  const Matrix grad_pre =
      ((params.out_w.transpose() * grad_emb).array() * (1.0 - f.act.hidden.array().square())).matrix();
  g.hidden_w = grad_pre * features.transpose();
  g.hidden_b = grad_pre.rowwise().sum();
  g.classifier = grad_cls;
  return g.flatten();
}

// Adds weight * d(-log P(c|x_j))/dlogits to column j.
void add_ce_grad(Matrix& grad, const Matrix& probs, int j, int c, double weight) {
  grad.col(j) += weight * probs.col(j);
  grad(c, j) -= weight;
}

std::vector<int> sample_without_replacement(std::span<const int> items, int k, Rng& rng) {
  std::vector<int> pool(items.begin(), items.end());
  const int n = int(pool.size());
  k = std::min(k, n);
  for (int i = 0; i < k; ++i) {
    const int j = i + int(rng.below(std::uint64_t(n - i)));
    std::swap(pool[std::size_t(i)], pool[std::size_t(j)]);
  }
  pool.resize(std::size_t(k));
  std::sort(pool.begin(), pool.end());
  return pool;
}

void log_step(dataio::JsonlLog* log, const char* stage, int step, const LossBreakdown& l) {
  if (log == nullptr || !log->enabled()) return;
  log->write({{"event", "train_step"},
              {"stage", stage},
              {"step", step},
              {"l_ce", l.l_ce},
              {"l_mp", l.l_mp},
              {"l_pp", l.l_pp},
              {"total", l.total}});
}

}  // namespace

double loss_ce(const Matrix& probs, std::span<const RegionSample> regions) {
  if (regions.empty()) return 0.0;
  double sum = 0.0;
  for (const RegionSample& r : regions) {
    if (r.classes.size() != 1) throw std::invalid_argument("loss_ce: region label must be a single class");
    if (r.pixels.empty()) throw std::invalid_argument("loss_ce: empty region");
    double region_sum = 0.0;
    for (int j : r.pixels) region_sum -= std::log(probs(r.classes.front(), j));
    sum += region_sum / double(r.pixels.size());
  }
  return sum / double(regions.size());
}

double loss_mp(const Matrix& probs, std::span<const RegionSample> regions) {
  if (regions.empty()) return 0.0;
  double sum = 0.0;
  for (const RegionSample& r : regions) {
    if (r.pixels.empty() || r.classes.empty()) throw std::invalid_argument("loss_mp: empty region or label");
    double region_sum = 0.0;
    for (int j : r.pixels) {
      double merged = 0.0;
      for (int c : r.classes) merged += probs(c, j);
      // Rounding can push a full candidate set just above 1.
      region_sum -= std::log(std::min(merged, 1.0));
    }
    sum += region_sum / double(r.pixels.size());
  }
  return sum / double(regions.size());
}

Prototypes prototypical_pixels(const Matrix& probs, std::span<const int> pixels, std::span<const int> classes) {
  if (pixels.empty() || classes.empty()) throw std::invalid_argument("prototypical_pixels: empty region or label");
  Prototypes out;
  out.reserve(classes.size());
  for (int c : classes) {
    int best = pixels.front();
    for (int j : pixels) {
      if (probs(c, j) > probs(c, best) || (probs(c, j) == probs(c, best) && j < best)) best = j;
    }
    out.emplace_back(c, best);
  }
  return out;
}

double loss_pp(const Matrix& probs, std::span<const RegionSample> regions, std::span<const Prototypes> prototypes) {
  if (regions.empty()) return 0.0;
  if (prototypes.size() != regions.size()) throw std::invalid_argument("loss_pp: prototype count mismatch");
  double sum = 0.0;
  for (const Prototypes& protos : prototypes) {
    double region_sum = 0.0;
    for (auto [c, j] : protos) region_sum -= std::log(probs(c, j));
    sum += region_sum / double(protos.size());
  }
  return sum / double(regions.size());
}

double loss_pp(const Matrix& probs, std::span<const RegionSample> regions) {
  std::vector<Prototypes> protos;
  protos.reserve(regions.size());
  for (const RegionSample& r : regions) protos.push_back(prototypical_pixels(probs, r.pixels, r.classes));
  return loss_pp(probs, regions, protos);
}

LossBreakdown combine(double l_ce, double l_mp, double l_pp, const LossWeights& w) {
  check_finite(l_ce, "l_ce");
  check_finite(l_mp, "l_mp");
  check_finite(l_pp, "l_pp");
  LossBreakdown b;
  b.lambda_ce = w.lambda_ce;
  b.lambda_mp = w.lambda_mp;
  b.l_ce = l_ce;
  b.l_mp = w.use_mp ? l_mp : 0.0;
  b.l_pp = w.use_pp ? l_pp : 0.0;
  b.total = w.lambda_ce * b.l_ce + w.lambda_mp * b.l_mp + b.l_pp;
  check_finite(b.total, "total");
  return b;
}

std::vector<Prototypes> batch_prototypes(const model::ModelParams& params, const Batch& batch) {
  const Matrix probs = model::predict_probs(model::embed(batch.features, params), params);
  std::vector<Prototypes> out;
  out.reserve(batch.multi.size());
  for (const RegionSample& r : batch.multi) out.push_back(prototypical_pixels(probs, r.pixels, r.classes));
  return out;
}

LossBreakdown total_loss(const model::ModelParams& params, const Batch& batch, const LossWeights& weights,
                         const std::vector<Prototypes>* frozen) {
  const Matrix probs = model::predict_probs(model::embed(batch.features, params), params);
  const double ce = loss_ce(probs, batch.single);
  const double mp = weights.use_mp ? loss_mp(probs, batch.multi) : 0.0;
  double pp = 0.0;
  if (weights.use_pp) pp = frozen ? loss_pp(probs, batch.multi, *frozen) : loss_pp(probs, batch.multi);
  return combine(ce, mp, pp, weights);
}

LossAndGrad total_loss_and_grad(const model::ModelParams& params, const Batch& batch, const LossWeights& weights) {
  const Forward f = run_forward(params, batch.features);
  const Matrix& probs = f.probs;
  Matrix grad_logits = Matrix::Zero(probs.rows(), probs.cols());

  const double ce = loss_ce(probs, batch.single);
  for (const RegionSample& r : batch.single) {
    const double w = weights.lambda_ce / (double(batch.single.size()) * double(r.pixels.size()));
    for (int j : r.pixels) add_ce_grad(grad_logits, probs, j, r.classes.front(), w);
  }

  double mp = 0.0;
  if (weights.use_mp && !batch.multi.empty()) {
    mp = loss_mp(probs, batch.multi);
    for (const RegionSample& r : batch.multi) {
      const double w = weights.lambda_mp / (double(batch.multi.size()) * double(r.pixels.size()));
      for (int j : r.pixels) {
        double merged = 0.0;
        for (int c : r.classes) merged += probs(c, j);
        grad_logits.col(j) += w * probs.col(j);
        for (int c : r.classes) grad_logits(c, j) -= w * probs(c, j) / merged;
      }
    }
  }

  double pp = 0.0;
  if (weights.use_pp && !batch.multi.empty()) {
    std::vector<Prototypes> protos;
    protos.reserve(batch.multi.size());
    for (const RegionSample& r : batch.multi) protos.push_back(prototypical_pixels(probs, r.pixels, r.classes));
    pp = loss_pp(probs, batch.multi, protos);
    for (const Prototypes& region : protos) {
      const double w = 1.0 / (double(batch.multi.size()) * double(region.size()));
      for (auto [c, j] : region) add_ce_grad(grad_logits, probs, j, c, w);
    }
  }

  LossAndGrad out;
  out.loss = combine(ce, mp, pp, weights);
  out.grad = backward(params, batch.features, f, grad_logits);
  return out;
}

LossAndGrad pixel_ce_loss_and_grad(const model::ModelParams& params, const Matrix& features,
                                   std::span<const int> targets) {
  if (targets.size() != std::size_t(features.cols()) || targets.empty()) {
    throw std::invalid_argument("pixel_ce: one target per feature column required");
  }
  const Forward f = run_forward(params, features);
  Matrix grad_logits = Matrix::Zero(f.probs.rows(), f.probs.cols());
  const double w = 1.0 / double(targets.size());
  double loss = 0.0;
  for (int j = 0; j < int(targets.size()); ++j) {
    loss -= std::log(f.probs(targets[std::size_t(j)], j));
    add_ce_grad(grad_logits, f.probs, j, targets[std::size_t(j)], w);
  }
  loss *= w;
  check_finite(loss, "pixel CE");
  LossAndGrad out;
  out.loss.l_ce = loss;
  out.loss.lambda_ce = 1.0;
  out.loss.total = loss;
  out.grad = backward(params, features, f, grad_logits);
  return out;
}

void adamw_step(Vector& params, const Vector& grads, OptimizerState& state) {
  if (grads.size() != params.size()) throw std::invalid_argument("adamw_step: gradient shape mismatch");
  if (state.m.size() != params.size()) {
    state.m = Vector::Zero(params.size());
    state.v = Vector::Zero(params.size());
  }
  const AdamWConfig& c = state.config;
  ++state.step;
  state.m = c.beta1 * state.m + (1.0 - c.beta1) * grads;
  state.v = c.beta2 * state.v + (1.0 - c.beta2) * grads.cwiseProduct(grads);
  const double bc1 = 1.0 - std::pow(c.beta1, double(state.step));
  const double bc2 = 1.0 - std::pow(c.beta2, double(state.step));
  for (Eigen::Index i = 0; i < params.size(); ++i) {
    const double m_hat = state.m(i) / bc1;
    const double v_hat = state.v(i) / bc2;
    params(i) -= c.lr * (m_hat / (std::sqrt(v_hat) + c.eps) + c.weight_decay * params(i));
  }
}

Batch sample_stage1_batch(const oracle::LabeledPool& pool, const TrainingData& data, const Stage1Config& config,
                          Rng& rng) {
  std::vector<RegionRef> refs;
  refs.reserve(pool.size());
  for (const auto& [ref, entry] : pool.entries()) refs.push_back(ref);
  const int k = std::min<int>(config.regions_per_batch, int(refs.size()));
  for (int i = 0; i < k; ++i) {
    const int j = i + int(rng.below(std::uint64_t(int(refs.size()) - i)));
    std::swap(refs[std::size_t(i)], refs[std::size_t(j)]);
  }
  refs.resize(std::size_t(k));

  Batch batch;
  std::vector<std::pair<int, int>> columns;  // (image, pixel)
  for (const RegionRef& ref : refs) {
    const auto& label = pool.entries().at(ref).label;
    const auto& region = data.partitions[std::size_t(ref.image)].pixels_of.at(std::size_t(ref.region));
    RegionSample sample;
    for (ClassId c : label.classes) sample.classes.push_back(class_index(c, data.class_count));
    std::sort(sample.classes.begin(), sample.classes.end());
    for (int p : sample_without_replacement(region, config.pixels_per_region, rng)) {
      sample.pixels.push_back(int(columns.size()));
      columns.emplace_back(ref.image, p);
    }
    (sample.classes.size() == 1 ? batch.single : batch.multi).push_back(std::move(sample));
  }
  batch.features.resize(model::kFeatureDim, Eigen::Index(columns.size()));
  for (std::size_t j = 0; j < columns.size(); ++j) {
    batch.features.col(Eigen::Index(j)) = data.features[std::size_t(columns[j].first)].values.col(columns[j].second);
  }
  return batch;
}

TrainResult train_stage1(model::ModelParams params, const oracle::LabeledPool& pool, const TrainingData& data,
                         const Stage1Config& config, std::uint64_t seed, dataio::JsonlLog* log) {
  TrainResult result{std::move(params), {}, 0};
  if (config.iterations <= 0 || pool.empty()) return result;
  Rng rng(derive_seed(seed, 0x57a9e1));
  OptimizerState state(config.adam, Eigen::Index(result.params.parameter_count()));
  Vector flat = result.params.flatten();
  for (int step = 0; step < config.iterations; ++step) {
    const Batch batch = sample_stage1_batch(pool, data, config, rng);
    const LossAndGrad lg = total_loss_and_grad(result.params, batch, config.weights);
    adamw_step(flat, lg.grad, state);
    result.params.unflatten(flat);
    result.last_loss = lg.loss;
    result.steps = step + 1;
    if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.iterations)) {
      log_step(log, "stage1", step, lg.loss);
    }
  }
  return result;
}

TrainResult train_stage2(model::ModelParams params, std::span<const PixelTarget> targets, const TrainingData& data,
                         const Stage2Config& config, std::uint64_t seed, dataio::JsonlLog* log) {
  TrainResult result{std::move(params), {}, 0};
  if (targets.empty()) {
    if (log != nullptr) log->write({{"event", "warning"}, {"message", "empty pseudo-label map; stage 2 skipped"}});
    return result;
  }
  if (config.iterations <= 0) return result;
  Rng rng(derive_seed(seed, 0x57a9e2));
  OptimizerState state(config.adam, Eigen::Index(result.params.parameter_count()));
  Vector flat = result.params.flatten();
  const int n = std::max(1, config.pixels_per_batch);
  Matrix features(model::kFeatureDim, n);
  std::vector<int> classes(static_cast<std::size_t>(n));
  for (int step = 0; step < config.iterations; ++step) {
    for (int j = 0; j < n; ++j) {
      const PixelTarget& t = targets[std::size_t(rng.below(targets.size()))];
      features.col(j) = data.features[std::size_t(t.image)].values.col(t.pixel);
      classes[std::size_t(j)] = t.class_index;
    }
    const LossAndGrad lg = pixel_ce_loss_and_grad(result.params, features, classes);
    adamw_step(flat, lg.grad, state);
    result.params.unflatten(flat);
    result.last_loss = lg.loss;
    result.steps = step + 1;
    if (config.log_every > 0 && (step % config.log_every == 0 || step + 1 == config.iterations)) {
      log_step(log, "stage2", step, lg.loss);
    }
  }
  return result;
}

}  // namespace mulseg::training
