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
#include <vector>

#include "mulseg/model.hpp"
#include "mulseg/oracle.hpp"
#include "mulseg/superpixel.hpp"
#include "mulseg/training.hpp"

namespace mulseg::pseudolabel {

using model::Matrix;

enum class Source : std::uint8_t { kNone = 0, kSingle = 1, kLocalized = 2, kExpanded = 3 };

struct PixelLabel {
  int class_index = -1;  // model class index, -1 when unlabeled
  Source source = Source::kNone;
  int source_region = -1;  // labeled region that produced the label
  double score = 0.0;      // winning cosine for expanded pixels

  bool operator==(const PixelLabel&) const = default;
};

struct PseudoLabelMap {
  std::vector<std::vector<PixelLabel>> images;  // per image, row-major pixels
  std::uint64_t model_fingerprint = 0;          // params the map was built from

  std::int64_t count(Source source) const;
  std::int64_t labeled() const;
  std::vector<training::PixelTarget> targets() const;
};

// Prototypes of one labeled region: for every candidate class the
// most confident pixel and its unit-normalized embedding.
struct RegionPrototypes {
  int region = -1;
  std::vector<int> classes;  // sorted model class indices
  std::vector<int> pixels;   // prototypical pixel per class (image pixel index)
  Matrix unit;               // d x |Y|
};

RegionPrototypes region_prototypes(int region, std::span<const int> region_pixels, std::span<const int> classes,
                                   const Matrix& probs, const Matrix& unit_embeddings);

// Dot products of unit vectors, accumulated in a fixed sequential order.
double unit_cosine(const Matrix& a, Eigen::Index ca, const Matrix& b, Eigen::Index cb);

// |Y| x n matrix of cos(f(x), prototype_c) for the given image pixels.
Matrix prototype_cosines(const RegionPrototypes& protos, const Matrix& unit_embeddings, std::span<const int> pixels);

// Nearest prototype per pixel (row index into the class list; ties to the
// lowest class).
std::vector<int> localize(const Matrix& cosines);

// Median cosine of the pixels assigned to each row; +inf when a row has no
// pixel. Even-sized sets average the two middle values.
std::vector<double> thresholds(const Matrix& cosines, std::span<const int> assignment);

double median(std::vector<double> values);

struct Proposal {
  int row = -1;  // -1: no class passes its threshold
  double score = 0.0;
};

// Per pixel: among rows with cosine strictly above their threshold, the
// one with the largest cosine.
std::vector<Proposal> expand(const Matrix& cosines, std::span<const double> row_thresholds);

struct BuildOptions {
  bool localize = true;
  bool expand = true;
};

// Single-class regions keep their label, multi-class regions are localized,
// and every labeled region expands into adjacent unlabeled regions. Among
// competing expansions the highest cosine wins, then the lowest source id.
PseudoLabelMap build_pseudo_dataset(const oracle::LabeledPool& pool,
                                    std::span<const superpixel::Partition> partitions,
                                    std::span<const superpixel::AdjacencyGraph> adjacency,
                                    std::span<const model::FeatureMap> features, const model::ModelParams& params,
                                    int class_count, const BuildOptions& options = {});

// Class PGM (model class index, 255 = unlabeled) and source-tag PGM.
void write_pseudo_pgm(const std::vector<PixelLabel>& labels, int width, int height,
                      const std::filesystem::path& class_path, const std::filesystem::path& source_path);

}  // namespace mulseg::pseudolabel
