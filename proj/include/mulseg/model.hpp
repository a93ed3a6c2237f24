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

#include <Eigen/Dense>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "mulseg/common.hpp"

namespace mulseg::model {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// r, g, b, x, y, then 5x5 window mean (3) and standard deviation (3).
inline constexpr int kFeatureDim = 11;

// One column per pixel, row-major pixel order.
struct FeatureMap {
  int width = 0;
  int height = 0;
  Matrix values;  // kFeatureDim x (width * height)
};

FeatureMap featurize(const Image& image);

struct ModelDims {
  int features = kFeatureDim;
  int hidden = 64;
  int embed = 32;
  int classes = 0;  // semantic classes + 1 for the undefined class
};

// Embedding f(x) = out_w * tanh(hidden_w * x + hidden_b) + out_b followed
// by a cosine classifier with temperature tau.
struct ModelParams {
  Matrix hidden_w;    // H x F
  Vector hidden_b;    // H
  Matrix out_w;       // d x H
  Vector out_b;       // d
  Matrix classifier;  // d x C', one weight vector per class
  double tau = 0.1;

  ModelDims dims() const;
  std::size_t parameter_count() const;
  // hidden_w, hidden_b, out_w, out_b, classifier; matrices column-major.
  Vector flatten() const;
  void unflatten(const Vector& flat);
  // Throws ConfigError on inconsistent shapes, tau <= 0 or a zero class vector.
  void validate() const;

  bool operator==(const ModelParams& other) const;
};

// Uniform(+-1/sqrt(fan_in)) layers, unit-norm random class directions.
ModelParams init_params(const ModelDims& dims, double tau, std::uint64_t seed);

struct Activations {
  Matrix hidden;     // H x N, post-tanh
  Matrix embedding;  // d x N
};

Activations forward(const Matrix& features, const ModelParams& params);
Matrix embed(const Matrix& features, const ModelParams& params);

// Column-normalized copy; throws NumericError("degenerate direction") on a
// zero column. Norms are floored at 1e-12.
Matrix normalize_columns(const Matrix& m);

// Softmax over cos(f, w_c) / tau, one column per pixel.
Matrix predict_probs(const Matrix& embeddings, const ModelParams& params);

// Per-pixel argmax class index (lowest index on ties).
std::vector<int> argmax_classes(const Matrix& probs);

// Hash of the parameter bytes; identifies a model in run logs.
std::uint64_t fingerprint(const ModelParams& params);

// Little-endian float64 stream: F, H, d, C', tau, then flatten() order
// with matrices written row-major.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace mulseg::model
