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

#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mulseg/pseudolabel.hpp"
#include "oracles.hpp"

using namespace mulseg;
using namespace mulseg::pseudolabel;

namespace {

Matrix rows(std::initializer_list<std::initializer_list<double>> r) {
  Matrix m(Eigen::Index(r.size()), Eigen::Index(r.begin()->size()));
  Eigen::Index i = 0;
  for (const auto& row : r) {
    Eigen::Index j = 0;
    for (double v : row) m(i, j++) = v;
    ++i;
  }
  return m;
}

}  // namespace

TEST_CASE("localization rules") {
  CHECK(localize(rows({{0.1, -0.3, 0.9}})) == std::vector<int>{0, 0, 0});
  CHECK(localize(rows({{1.0, 0.2}, {0.4, 0.7}})) == std::vector<int>{0, 1});
  CHECK(localize(rows({{0.5}, {0.5}})) == std::vector<int>{0});
}

TEST_CASE("prototype pixel has cosine one with itself") {
  Matrix unit(2, 3);
  unit << 1, 0, std::sqrt(0.5), 0, 1, std::sqrt(0.5);
  Matrix probs(3, 3);
  probs << 0.9, 0.1, 0.3, 0.05, 0.8, 0.3, 0.05, 0.1, 0.4;
  const std::vector<int> px{0, 1, 2}, classes{0, 1};
  const RegionPrototypes rp = region_prototypes(4, px, classes, probs, unit);
  CHECK(rp.pixels == std::vector<int>{0, 1});
  const Matrix cos = prototype_cosines(rp, unit, px);
  CHECK(cos(0, 0) == 1.0);
  CHECK(cos(1, 1) == 1.0);
  CHECK(localize(cos)[0] == 0);
  CHECK(localize(cos)[1] == 1);
  CHECK(localize(cos)[2] == 0);  // equidistant: lower class
}

TEST_CASE("median and thresholds") {
  CHECK(median({0.2, 0.5, 0.8}) == 0.5);
  CHECK(median({0.8, 0.2, 0.6, 0.4}) == 0.5);
  CHECK(std::isinf(median({})));
  const Matrix cos = rows({{1.0, 0.3, 0.2}, {0.1, 0.9, 0.95}});
  const auto alpha = thresholds(cos, std::vector<int>{0, 1, 1});
  CHECK(alpha[0] == 1.0);
  CHECK(alpha[1] == doctest::Approx(0.925).epsilon(1e-15));
  const auto none = thresholds(cos, std::vector<int>{1, 1, 1});
  CHECK(std::isinf(none[0]));
}

TEST_CASE("threshold keeps at least half of the localized pixels") {
  Rng rng(8);
  for (int trial = 0; trial < 500; ++trial) {
    const int n = 1 + int(rng.below(30));
    Matrix cos(1, n);
    for (int j = 0; j < n; ++j) cos(0, j) = double(int(rng.below(7))) / 8.0;
    const double a = thresholds(cos, std::vector<int>(std::size_t(n), 0))[0];
    int at_least = 0;
    for (int j = 0; j < n; ++j) at_least += cos(0, j) >= a;
    CHECK(at_least >= (n + 1) / 2);
  }
}

TEST_CASE("expansion relevance filter") {
  const std::vector<double> alpha{0.5, 0.5};
  const auto p = expand(rows({{0.5, 0.9, 0.7, 0.2}, {0.4, 0.1, 0.6, 0.2}}), alpha);
  CHECK(p[0].row == -1);
  CHECK(p[1].row == 0);
  CHECK(p[1].score == 0.9);
  CHECK(p[2].row == 0);
  CHECK(p[3].row == -1);
}

TEST_CASE("raising a threshold never grows the expanded set") {
  Rng rng(9);
  for (int trial = 0; trial < 300; ++trial) {
    Matrix cos(3, 20);
    for (Eigen::Index i = 0; i < cos.size(); ++i) cos.data()[i] = rng.uniform(-1, 1);
    std::vector<double> alpha{rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
    const auto before = expand(cos, alpha);
    const int c = int(rng.below(3));
    alpha[std::size_t(c)] += rng.uniform(0, 0.5);
    const auto after = expand(cos, alpha);
    for (int j = 0; j < 20; ++j)
      if (after[std::size_t(j)].row == c) CHECK(before[std::size_t(j)].row == c);
  }
}

TEST_CASE("single labeled region without neighbors") {
  oracles::PseudoFixture fx;
  fx.class_count = 2;
  Image img(6, 6);
  fx.features.push_back(model::featurize(img));
  fx.partitions.push_back(superpixel::grid_partition(img, 6));
  fx.adjacency.push_back(superpixel::region_adjacency(fx.partitions[0]));
  fx.pool.add({0, 0}, {{1}}, 1);
  fx.params = model::init_params({11, 4, 3, 3}, 0.1, 1);
  const auto map = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, 2);
  CHECK(map.count(Source::kSingle) == 36);
  CHECK(map.labeled() == 36);
  for (const auto& l : map.images[0]) CHECK(l.class_index == 1);
}

TEST_CASE("competing expansions: highest score wins") {
  // Three vertical strips; the middle one is unlabeled and borders both.
  Rng rng(10);
  Image img(12, 4);
  for (double& v : img.data) v = rng.uniform();
  std::vector<int> labels(48);
  for (int p = 0; p < 48; ++p) labels[std::size_t(p)] = (p % 12) / 4;
  oracles::PseudoFixture fx;
  fx.class_count = 3;
  fx.features.push_back(model::featurize(img));
  fx.partitions.push_back(superpixel::Partition::from_labels(12, 4, labels));
  fx.adjacency.push_back(superpixel::region_adjacency(fx.partitions[0]));
  fx.pool.add({0, 0}, {{0}}, 1);
  fx.pool.add({0, 2}, {{2}}, 1);
  fx.params = model::init_params({11, 6, 4, 4}, 0.1, 3);
  const auto map = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, 3);
  const auto brute = oracles::brute_pseudo(fx);
  CHECK(map.images[0] == brute[0]);
  for (int p : fx.partitions[0].pixels_of[1]) {
    const PixelLabel& l = map.images[0][std::size_t(p)];
    if (l.source != Source::kExpanded) continue;
    CHECK(l.class_index == (l.source_region == 0 ? 0 : 2));
  }
}

TEST_CASE("build_pseudo_dataset equals the brute-force evaluation") {
  Rng rng(11);
  for (int trial = 0; trial < 10; ++trial) {
    const auto fx = oracles::random_pseudo_fixture(rng);
    const auto map = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, fx.class_count);
    const auto brute = oracles::brute_pseudo(fx);
    REQUIRE(map.images.size() == brute.size());
    for (std::size_t i = 0; i < brute.size(); ++i) CHECK(map.images[i] == brute[i]);
    CHECK(map.model_fingerprint == model::fingerprint(fx.params));
    const auto again = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, fx.class_count);
    CHECK(again.images == map.images);
  }
}

TEST_CASE("pseudo labels respect provenance") {
  Rng rng(12);
  for (int trial = 0; trial < 10; ++trial) {
    const auto fx = oracles::random_pseudo_fixture(rng);
    const auto map = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, fx.class_count);
    for (std::size_t i = 0; i < map.images.size(); ++i) {
      for (std::size_t p = 0; p < map.images[i].size(); ++p) {
        const PixelLabel& l = map.images[i][p];
        const int own = fx.partitions[i].region_of[p];
        const bool labeled = fx.pool.contains({int(i), own});
        CHECK(labeled == (l.source == Source::kSingle || l.source == Source::kLocalized));
        if (l.source == Source::kNone) continue;
        const auto& y = fx.pool.entries().at({int(i), l.source_region}).label;
        CHECK(y.contains(class_id(l.class_index, fx.class_count)));
        if (l.source == Source::kExpanded) CHECK(fx.adjacency[i].adjacent(own, l.source_region));
      }
    }
  }
}

TEST_CASE("disabled localization and expansion") {
  Rng rng(13);
  const auto fx = oracles::random_pseudo_fixture(rng);
  const auto none = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, fx.class_count,
                                         {false, false});
  CHECK(none.count(Source::kLocalized) == 0);
  CHECK(none.count(Source::kExpanded) == 0);
  std::int64_t single = 0;
  for (RegionRef r : fx.pool.single_class()) single += std::int64_t(fx.partitions[std::size_t(r.image)].pixels_of[std::size_t(r.region)].size());
  CHECK(none.count(Source::kSingle) == single);
  const auto local = build_pseudo_dataset(fx.pool, fx.partitions, fx.adjacency, fx.features, fx.params, fx.class_count,
                                          {true, false});
  CHECK(local.count(Source::kExpanded) == 0);
}
