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

#include "mulseg/pseudolabel.hpp"

#include <algorithm>
#include <limits>
#include <map>

#include "mulseg/dataio.hpp"

namespace mulseg::pseudolabel {

std::int64_t PseudoLabelMap::count(Source source) const {
  std::int64_t n = 0;
  for (const auto& img : images)
    for (const PixelLabel& p : img) n += p.source == source;
  return n;
}

std::int64_t PseudoLabelMap::labeled() const {
  return count(Source::kSingle) + count(Source::kLocalized) + count(Source::kExpanded);
}

std::vector<training::PixelTarget> PseudoLabelMap::targets() const {
  std::vector<training::PixelTarget> out;
  for (int i = 0; i < int(images.size()); ++i) {
    const auto& img = images[std::size_t(i)];
    for (int p = 0; p < int(img.size()); ++p) {
      if (img[std::size_t(p)].class_index >= 0) out.push_back({i, p, img[std::size_t(p)].class_index});
    }
  }
  return out;
}

RegionPrototypes region_prototypes(int region, std::span<const int> region_pixels, std::span<const int> classes,
                                   const Matrix& probs, const Matrix& unit_embeddings) {
  RegionPrototypes rp;
  rp.region = region;
  rp.classes.assign(classes.begin(), classes.end());
  rp.unit.resize(unit_embeddings.rows(), Eigen::Index(classes.size()));
  const training::Prototypes protos = training::prototypical_pixels(probs, region_pixels, classes);
  for (std::size_t k = 0; k < protos.size(); ++k) {
    rp.pixels.push_back(protos[k].second);
    rp.unit.col(Eigen::Index(k)) = unit_embeddings.col(protos[k].second);
  }
  return rp;
}

double unit_cosine(const Matrix& a, Eigen::Index ca, const Matrix& b, Eigen::Index cb) {
  const double* x = a.col(ca).data();
  const double* y = b.col(cb).data();
  double s = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) s += x[i] * y[i];
  return s;
}

Matrix prototype_cosines(const RegionPrototypes& protos, const Matrix& unit_embeddings, std::span<const int> pixels) {
  Matrix k(protos.unit.cols(), Eigen::Index(pixels.size()));
  for (Eigen::Index j = 0; j < k.cols(); ++j) {
    for (Eigen::Index c = 0; c < k.rows(); ++c) {
      k(c, j) = unit_cosine(unit_embeddings, pixels[std::size_t(j)], protos.unit, c);
    }
  }
  return k;
}

std::vector<int> localize(const Matrix& cosines) {
  std::vector<int> out(static_cast<std::size_t>(cosines.cols()), 0);
  for (Eigen::Index j = 0; j < cosines.cols(); ++j) {
    int best = 0;
    for (Eigen::Index c = 1; c < cosines.rows(); ++c) {
      if (cosines(c, j) > cosines(best, j)) best = int(c);
    }
    out[std::size_t(j)] = best;
  }
  return out;
}

double median(std::vector<double> values) {
  if (values.empty()) return std::numeric_limits<double>::infinity();
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 == 1 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::vector<double> thresholds(const Matrix& cosines, std::span<const int> assignment) {
  std::vector<std::vector<double>> per_row(static_cast<std::size_t>(cosines.rows()));
  for (Eigen::Index j = 0; j < cosines.cols(); ++j) {
    const int row = assignment[std::size_t(j)];
    per_row[std::size_t(row)].push_back(cosines(row, j));
  }
  std::vector<double> out;
  out.reserve(per_row.size());
  for (auto& values : per_row) out.push_back(median(std::move(values)));
  return out;
}

std::vector<Proposal> expand(const Matrix& cosines, std::span<const double> row_thresholds) {
  std::vector<Proposal> out(static_cast<std::size_t>(cosines.cols()));
  for (Eigen::Index j = 0; j < cosines.cols(); ++j) {
    Proposal& p = out[std::size_t(j)];
    for (Eigen::Index c = 0; c < cosines.rows(); ++c) {
      const double v = cosines(c, j);
      if (v > row_thresholds[std::size_t(c)] && (p.row < 0 || v > p.score)) {
        p.row = int(c);
        p.score = v;
      }
    }
  }
  return out;
}

PseudoLabelMap build_pseudo_dataset(const oracle::LabeledPool& pool,
                                    std::span<const superpixel::Partition> partitions,
                                    std::span<const superpixel::AdjacencyGraph> adjacency,
                                    std::span<const model::FeatureMap> features, const model::ModelParams& params,
                                    int class_count, const BuildOptions& options) {
  if (partitions.size() != adjacency.size() || partitions.size() != features.size()) {
    throw std::invalid_argument("build_pseudo_dataset: per-image inputs differ in length");
  }
  PseudoLabelMap map;
  map.model_fingerprint = model::fingerprint(params);
  map.images.resize(partitions.size());
  for (std::size_t i = 0; i < partitions.size(); ++i) map.images[i].resize(partitions[i].pixel_count());

  // Pool entries grouped per image, ascending region id.
  std::map<int, std::vector<std::pair<int, const oracle::MultiClassLabel*>>> by_image;
  for (const auto& [ref, entry] : pool.entries()) by_image[ref.image].emplace_back(ref.region, &entry.label);

  for (const auto& [image, regions] : by_image) {
    const auto& part = partitions[std::size_t(image)];
    const auto& graph = adjacency[std::size_t(image)];
    auto& labels = map.images[std::size_t(image)];
    const Matrix emb = model::embed(features[std::size_t(image)].values, params);
    const Matrix unit = model::normalize_columns(emb);
    const Matrix probs = model::predict_probs(emb, params);

    std::vector<char> is_labeled(static_cast<std::size_t>(part.region_count), 0);
    for (const auto& [region, label] : regions) is_labeled[std::size_t(region)] = 1;

    for (const auto& [region, label] : regions) {
      const auto& pixels = part.pixels_of[std::size_t(region)];
      std::vector<int> classes;
      for (ClassId c : label->classes) classes.push_back(class_index(c, class_count));
      std::sort(classes.begin(), classes.end());

      const RegionPrototypes protos = region_prototypes(region, pixels, classes, probs, unit);
      const Matrix cos = prototype_cosines(protos, unit, pixels);
      const std::vector<int> assignment = classes.size() == 1 ? std::vector<int>(pixels.size(), 0) : localize(cos);

      if (classes.size() == 1 || options.localize) {
        const Source tag = classes.size() == 1 ? Source::kSingle : Source::kLocalized;
        for (std::size_t j = 0; j < pixels.size(); ++j) {
          labels[std::size_t(pixels[j])] = {classes[std::size_t(assignment[j])], tag, region, 0.0};
        }
      }
      if (!options.expand) continue;

      const std::vector<double> alpha = thresholds(cos, assignment);
      for (int neighbor : graph.neighbors[std::size_t(region)]) {
        if (is_labeled[std::size_t(neighbor)]) continue;
        const auto& target = part.pixels_of[std::size_t(neighbor)];
        const std::vector<Proposal> props = expand(prototype_cosines(protos, unit, target), alpha);
        for (std::size_t j = 0; j < target.size(); ++j) {
          if (props[j].row < 0) continue;
          PixelLabel& cur = labels[std::size_t(target[j])];
          // Regions are visited in ascending id, so an equal score keeps the
          // earlier (lower id) source.
          if (cur.source == Source::kNone || props[j].score > cur.score) {
            cur = {classes[std::size_t(props[j].row)], Source::kExpanded, region, props[j].score};
          }
        }
      }
    }
  }
  return map;
}

void write_pseudo_pgm(const std::vector<PixelLabel>& labels, int width, int height,
                      const std::filesystem::path& class_path, const std::filesystem::path& source_path) {
  dataio::GrayImage cls{width, height, 255, {}};
  dataio::GrayImage src{width, height, 255, {}};
  for (const PixelLabel& p : labels) {
    cls.data.push_back(p.class_index < 0 ? 255 : p.class_index);
    src.data.push_back(int(p.source));
  }
  dataio::write_pgm(cls, class_path);
  dataio::write_pgm(src, source_path);
}

}  // namespace mulseg::pseudolabel
