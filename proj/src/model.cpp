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

#include "mulseg/model.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include "mulseg/rng.hpp"

namespace mulseg::model {
namespace {

constexpr double kNormFloor = 1e-12;

void put_f64(std::ostream& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = char((bits >> (8 * i)) & 0xff);
  out.write(bytes, 8);
}

double get_f64(std::istream& in) {
  unsigned char bytes[8];
  in.read(reinterpret_cast<char*>(bytes), 8);
  if (!in) throw DataError("truncated checkpoint");
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= std::uint64_t(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

template <typename M>
void put_matrix(std::ostream& out, const M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) put_f64(out, m(r, c));
}

template <typename M>
void get_matrix(std::istream& in, M& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r)
    for (Eigen::Index c = 0; c < m.cols(); ++c) m(r, c) = get_f64(in);
}

int header_dim(double v) {
  if (!(v >= 1.0 && v <= 1e6) || v != std::floor(v)) throw DataError("bad checkpoint header");
  return int(v);
}

}  // namespace

FeatureMap featurize(const Image& image) {
  const int W = image.width, H = image.height;
  FeatureMap fm{W, H, Matrix(kFeatureDim, Eigen::Index(image.pixel_count()))};
  const double sx = W > 1 ? 1.0 / (W - 1) : 0.0;
  const double sy = H > 1 ? 1.0 / (H - 1) : 0.0;
  double window[25];
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      auto col = fm.values.col(Eigen::Index(y) * W + x);
      for (int ch = 0; ch < 3; ++ch) {
        col(ch) = image.at(x, y, ch);
        // Offsets from the center value keep constant windows exactly 0.
        const double center = col(ch);
        int n = 0;
        double sum = 0.0;
        for (int dy = -2; dy <= 2; ++dy) {
          const int yy = std::clamp(y + dy, 0, H - 1);
          for (int dx = -2; dx <= 2; ++dx) {
            window[n] = image.at(std::clamp(x + dx, 0, W - 1), yy, ch) - center;
            sum += window[n++];
          }
        }
        const double shift = sum / 25.0;
        const double mean = center + shift;
        double ss = 0.0;
        for (double v : window) ss += (v - shift) * (v - shift);
        col(5 + ch) = mean;
        col(8 + ch) = std::sqrt(ss / 25.0);
      }
      col(3) = x * sx;
      col(4) = y * sy;
    }
  }
  return fm;
}

ModelDims ModelParams::dims() const {
  return {int(hidden_w.cols()), int(hidden_w.rows()), int(out_w.rows()), int(classifier.cols())};
}

std::size_t ModelParams::parameter_count() const {
  return std::size_t(hidden_w.size() + hidden_b.size() + out_w.size() + out_b.size() + classifier.size());
}

Vector ModelParams::flatten() const {
  Vector flat(static_cast<Eigen::Index>(parameter_count()));
  Eigen::Index o = 0;
  auto put = [&](const auto& m) {
    flat.segment(o, m.size()) = Eigen::Map<const Vector>(m.data(), m.size());
    o += m.size();
  };
  put(hidden_w);
  put(hidden_b);
  put(out_w);
  put(out_b);
  put(classifier);
  return flat;
}

void ModelParams::unflatten(const Vector& flat) {
  if (std::size_t(flat.size()) != parameter_count()) throw ConfigError("unflatten: size mismatch");
  Eigen::Index o = 0;
  auto get = [&](auto& m) {
    Eigen::Map<Vector>(m.data(), m.size()) = flat.segment(o, m.size());
    o += m.size();
  };
  get(hidden_w);
  get(hidden_b);
  get(out_w);
  get(out_b);
  get(classifier);
}

void ModelParams::validate() const {
  if (hidden_b.size() != hidden_w.rows() || out_w.cols() != hidden_w.rows() || out_b.size() != out_w.rows() ||
      classifier.rows() != out_w.rows()) {
    throw ConfigError("model parameters have inconsistent shapes");
  }
  if (classifier.cols() < 2) throw ConfigError("classifier needs at least two classes");
  if (!(tau > 0.0)) throw ConfigError("temperature must be positive");
  for (Eigen::Index c = 0; c < classifier.cols(); ++c) {
    if (classifier.col(c).squaredNorm() == 0.0) throw ConfigError("zero classifier vector");
  }
}

bool ModelParams::operator==(const ModelParams& o) const {
  return tau == o.tau && hidden_w.rows() == o.hidden_w.rows() && hidden_w.cols() == o.hidden_w.cols() &&
         out_w.rows() == o.out_w.rows() && classifier.cols() == o.classifier.cols() && flatten() == o.flatten();
}

ModelParams init_params(const ModelDims& dims, double tau, std::uint64_t seed) {
  if (dims.features < 1 || dims.hidden < 1 || dims.embed < 1 || dims.classes < 2) {
    throw ConfigError("init_params: invalid dimensions");
  }
  Rng rng(derive_seed(seed, 0x1417));
  ModelParams p;
  auto uniform_fill = [&](auto& m, int fan_in) {
    const double bound = 1.0 / std::sqrt(double(fan_in));
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rng.uniform(-bound, bound);
  };
  p.hidden_w.resize(dims.hidden, dims.features);
  p.hidden_b.resize(dims.hidden);
  p.out_w.resize(dims.embed, dims.hidden);
  p.out_b.resize(dims.embed);
  uniform_fill(p.hidden_w, dims.features);
  uniform_fill(p.hidden_b, dims.features);
  uniform_fill(p.out_w, dims.hidden);
  uniform_fill(p.out_b, dims.hidden);
  p.classifier.resize(dims.embed, dims.classes);
  for (Eigen::Index c = 0; c < p.classifier.cols(); ++c) {
    double norm = 0.0;
    do {
      for (Eigen::Index r = 0; r < p.classifier.rows(); ++r) p.classifier(r, c) = rng.normal();
      norm = p.classifier.col(c).norm();
    } while (norm < 1e-6);
    p.classifier.col(c) /= norm;
  }
  p.tau = tau;
  p.validate();
  return p;
}

Activations forward(const Matrix& features, const ModelParams& params) {
  if (features.rows() != params.hidden_w.cols()) {
    throw ConfigError("feature dimension " + std::to_string(features.rows()) + " does not match model input " +
                      std::to_string(params.hidden_w.cols()));
  }
  Activations a;
  a.hidden = ((params.hidden_w * features).colwise() + params.hidden_b).array().tanh().matrix();
  a.embedding = (params.out_w * a.hidden).colwise() + params.out_b;
  return a;
}

Matrix embed(const Matrix& features, const ModelParams& params) { return forward(features, params).embedding; }

Matrix normalize_columns(const Matrix& m) {
  Matrix out(m.rows(), m.cols());
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    const double norm = m.col(c).norm();
    if (norm == 0.0) throw NumericError("degenerate direction: zero vector in column " + std::to_string(c));
    out.col(c) = m.col(c) / std::max(norm, kNormFloor);
  }
  return out;
}

Matrix predict_probs(const Matrix& embeddings, const ModelParams& params) {
  if (embeddings.rows() != params.classifier.rows()) throw ConfigError("embedding dimension mismatch");
  Matrix logits = (normalize_columns(params.classifier).transpose() * normalize_columns(embeddings)) / params.tau;
  for (Eigen::Index j = 0; j < logits.cols(); ++j) {
    auto col = logits.col(j);
    col = (col.array() - col.maxCoeff()).exp().matrix();
    col /= col.sum();
  }
  return logits;
}

std::vector<int> argmax_classes(const Matrix& probs) {
  std::vector<int> out(static_cast<std::size_t>(probs.cols()));
  for (Eigen::Index j = 0; j < probs.cols(); ++j) {
    Eigen::Index best = 0;
    probs.col(j).maxCoeff(&best);
    out[std::size_t(j)] = int(best);
  }
  return out;
}

std::uint64_t fingerprint(const ModelParams& params) {
  std::uint64_t h = mix64(std::bit_cast<std::uint64_t>(params.tau));
  const Vector flat = params.flatten();
  for (Eigen::Index i = 0; i < flat.size(); ++i) h = mix64(h ^ std::bit_cast<std::uint64_t>(flat(i)));
  return h;
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  const ModelDims d = params.dims();
  for (double v : {double(d.features), double(d.hidden), double(d.embed), double(d.classes), params.tau}) {
    put_f64(out, v);
  }
  put_matrix(out, params.hidden_w);
  put_matrix(out, params.hidden_b);
  put_matrix(out, params.out_w);
  put_matrix(out, params.out_b);
  put_matrix(out, params.classifier);
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  ModelParams p;
  const int F = header_dim(get_f64(in)), H = header_dim(get_f64(in));
  const int d = header_dim(get_f64(in)), C = header_dim(get_f64(in));
  p.tau = get_f64(in);
  p.hidden_w.resize(H, F);
  p.hidden_b.resize(H);
  p.out_w.resize(d, H);
  p.out_b.resize(d);
  p.classifier.resize(d, C);
  get_matrix(in, p.hidden_w);
  get_matrix(in, p.hidden_b);
  get_matrix(in, p.out_w);
  get_matrix(in, p.out_b);
  get_matrix(in, p.classifier);
  p.validate();
  return p;
}

}  // namespace mulseg::model
