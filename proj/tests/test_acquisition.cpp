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
#include <set>

#include "mulseg/acquisition.hpp"
#include "oracles.hpp"

using namespace mulseg;
using namespace mulseg::acquisition;

namespace {

Matrix cols(std::initializer_list<std::initializer_list<double>> c) {
  Matrix m(Eigen::Index(c.begin()->size()), Eigen::Index(c.size()));
  Eigen::Index j = 0;
  for (const auto& col : c) {
    Eigen::Index i = 0;
    for (double v : col) m(i++, j) = v;
    ++j;
  }
  return m;
}

Matrix random_probs(Rng& rng, int classes, int n) {
  Matrix p(classes, n);
  for (Eigen::Index i = 0; i < p.size(); ++i) p.data()[i] = std::pow(rng.uniform(1e-3, 1.0), 3.0);
  for (int j = 0; j < n; ++j) p.col(j) /= p.col(j).sum();
  return p;
}

std::vector<int> iota(int n) {
  std::vector<int> v(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) v[std::size_t(i)] = i;
  return v;
}

// Row of 9x9 regions; region k holds `sizes[k]` classes in its interior.
struct ClickFixture {
  std::vector<Mask> masks;
  std::vector<superpixel::Partition> parts;

  explicit ClickFixture(const std::vector<int>& sizes) {
    const int n = int(sizes.size()), w = 9 * n;
    std::vector<int> labels(std::size_t(w) * 9);
    Mask m(w, 9, 5, 0);
    for (int y = 0; y < 9; ++y)
      for (int x = 0; x < w; ++x) labels[std::size_t(y) * w + x] = x / 9;
    for (int k = 0; k < n; ++k)
      for (int c = 1; c < sizes[std::size_t(k)]; ++c) m.at(9 * k + 3 + (c - 1), 4) = ClassId(c);
    masks.push_back(m);
    parts.push_back(superpixel::Partition::from_labels(w, 9, labels));
  }
};

std::vector<AcquisitionScore> descending(int n) {
  std::vector<AcquisitionScore> s;
  for (int k = 0; k < n; ++k) s.push_back({{0, k}, double(n - k), 0});
  return s;
}

}  // namespace

TEST_CASE("BvSB worked examples") {
  CHECK(std::abs(bvsb(std::vector<double>{0.5, 0.3, 0.2}) - 0.6) < 1e-12);
  CHECK(bvsb(std::vector<double>{0.25, 0.25, 0.25, 0.25}) == 1.0);
  CHECK(bvsb(std::vector<double>{1 - 1e-12, 1e-12}) < 1e-11);
  Rng rng(1);
  const Matrix p = random_probs(rng, 5, 500);
  for (Eigen::Index j = 0; j < p.cols(); ++j) {
    const double u = bvsb(p, j);
    CHECK(u >= 0.0);
    CHECK(u <= 1.0);
  }
}

TEST_CASE("class distribution estimate") {
  const Vector d = estimate_class_distribution(cols({{1, 0}, {0, 1}}));
  CHECK(d(0) == 0.5);
  CHECK(d(1) == 0.5);
  const Vector same = estimate_class_distribution(cols({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}}));
  CHECK((same - Vector::Map(std::vector<double>{0.2, 0.3, 0.5}.data(), 3)).cwiseAbs().maxCoeff() < 1e-15);
  Rng rng(2);
  CHECK(std::abs(estimate_class_distribution(random_probs(rng, 6, 333)).sum() - 1.0) < 1e-9);
  CHECK_THROWS(estimate_class_distribution(Matrix(3, 0)));

  ClassDistributionEstimate running(6);
  const Matrix a = random_probs(rng, 6, 10), b = random_probs(rng, 6, 30);
  running.add(a);
  running.add(b);
  Matrix ab(6, 40);
  ab << a, b;
  CHECK((running.mean() - estimate_class_distribution(ab)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("PixBal worked examples") {
  const Matrix one = cols({{0.5, 0.3, 0.2}});
  Vector dist(3);
  dist << 0.5, 0.3, 0.2;
  CHECK(std::abs(score_pixbal(one, std::vector<int>{0}, dist, 6.0) - 0.0375) < 1e-12);
  const Matrix hot = cols({{1, 0, 0}, {0, 0, 1}});
  CHECK(score_pixbal(hot, std::vector<int>{0, 1}, dist, 6.0) == 0.0);
  CHECK(score_pixbal(hot, std::vector<int>{0, 1}, dist, 0.0) == 0.0);
}

TEST_CASE("margin worked examples") {
  CHECK(score_margin(cols({{1, 0}, {0, 1}}), std::vector<int>{0, 1}) == 0.0);
  CHECK(score_margin(cols({{0.5, 0.5}}), std::vector<int>{0}) == 1.0);
  CHECK(std::abs(score_margin(cols({{0.6, 0.4}}), std::vector<int>{0}) - 0.8) < 1e-12);
}

TEST_CASE("PixBal and ClassBal coincide at nu = 0 on random instances") {
  Rng rng(3);
  for (int trial = 0; trial < 1000; ++trial) {
    const int c = 2 + int(rng.below(6)), n = 1 + int(rng.below(20));
    const Matrix p = random_probs(rng, c, n);
    const Vector dist = estimate_class_distribution(random_probs(rng, c, 7));
    const auto px = iota(n);
    const double pix = score_pixbal(p, px, dist, 0.0), cls = score_classbal(p, px, dist, 0.0);
    CHECK(std::abs(pix - cls) <= 1e-12);
    CHECK(std::abs(pix - score_bvsb(p, px)) <= 1e-12);
  }
}

TEST_CASE("PixBal and ClassBal agree when every pixel predicts the same class") {
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    Matrix p = random_probs(rng, 4, 6);
    for (int j = 0; j < 6; ++j) p(1, j) += 2.0;
    for (int j = 0; j < 6; ++j) p.col(j) /= p.col(j).sum();
    const Vector dist = estimate_class_distribution(random_probs(rng, 4, 9));
    const double nu = rng.uniform(0, 12);
    CHECK(std::abs(score_pixbal(p, iota(6), dist, nu) - score_classbal(p, iota(6), dist, nu)) <= 1e-12);
  }
}

TEST_CASE("PixBal favors a rare class hidden in a region of a common class") {
  // Pixel 0 predicts the common class 0, pixel 1 the rare class 1; the mode
  // (ties to the lowest index) is the common class.
  const Matrix p = cols({{0.6, 0.3, 0.1}, {0.3, 0.6, 0.1}});
  Vector dist(3);
  dist << 0.7, 0.05, 0.25;
  const double u = 0.5;  // both pixels
  const double pix = (u / std::pow(1 + 6 * 0.7, 2) + u / std::pow(1 + 6 * 0.05, 2)) / 2;
  const double cls = u / std::pow(1 + 6 * 0.7, 2);
  CHECK(predicted_dominant_class(p, iota(2)) == 0);
  CHECK(std::abs(score_pixbal(p, iota(2), dist, 6.0) - pix) < 1e-12);
  CHECK(std::abs(score_classbal(p, iota(2), dist, 6.0) - cls) < 1e-12);
  CHECK(score_pixbal(p, iota(2), dist, 6.0) > score_classbal(p, iota(2), dist, 6.0));
}

TEST_CASE("increasing nu never increases the PixBal score") {
  Rng rng(5);
  for (int trial = 0; trial < 300; ++trial) {
    const Matrix p = random_probs(rng, 5, 8);
    const Vector dist = estimate_class_distribution(random_probs(rng, 5, 5));
    double prev = score_pixbal(p, iota(8), dist, 0.0);
    for (double nu : {0.5, 1.0, 3.0, 6.0, 12.0}) {
      const double cur = score_pixbal(p, iota(8), dist, nu);
      CHECK(cur <= prev);
      CHECK(cur >= 0.0);
      prev = cur;
    }
  }
}

TEST_CASE("random scores: deterministic, distinct and uniform") {
  CHECK(score_random({3, 7}, 2, 11) == score_random({3, 7}, 2, 11));
  CHECK(score_random({3, 7}, 2, 11) != score_random({3, 7}, 3, 11));
  std::set<double> seen;
  std::vector<int> bins(20, 0);
  for (int i = 0; i < 10000; ++i) {
    const double s = score_random({i / 100, i % 100}, 1, 0);
    CHECK(s >= 0.0);
    CHECK(s < 1.0);
    seen.insert(s);
    ++bins[std::size_t(s * 20)];
  }
  CHECK(seen.size() == 10000);
  double chi2 = 0.0;
  for (int b : bins) chi2 += (b - 500.0) * (b - 500.0) / 500.0;
  CHECK(chi2 < 36.191);  // 0.99 quantile of chi-squared, 19 degrees of freedom
}

TEST_CASE("select_batch stopping rule") {
  ClickFixture fx({2, 2, 3, 1, 1, 1});
  oracle::LabeledPool pool;
  SUBCASE("multi-class overshoot") {
    oracle::Oracle o(fx.masks, fx.parts);
    const Selection s = select_batch(descending(6), pool, 5, oracle::LabelMode::kMultiClass, o, 5);
    CHECK(s.entries.size() == 3);
    CHECK(s.clicks == 7);
    CHECK(s.overshoot == 2);
    CHECK(o.clicks_spent() == 7);
  }
  SUBCASE("dominant mode") {
    oracle::Oracle o(fx.masks, fx.parts);
    const Selection s = select_batch(descending(6), pool, 5, oracle::LabelMode::kDominant, o, 5);
    CHECK(s.entries.size() == 5);
    CHECK(s.clicks == 5);
    CHECK(s.overshoot == 0);
  }
  SUBCASE("undefined-dominated regions are skipped") {
    oracle::Oracle o(fx.masks, fx.parts);
    auto scores = descending(6);
    scores[0].dominant_class = 5;
    const Selection s = select_batch(scores, pool, 1, oracle::LabelMode::kDominant, o, 5);
    REQUIRE(s.entries.size() == 1);
    CHECK(s.entries[0].first == RegionRef{0, 1});
    CHECK(s.skipped_undefined == 1);
  }
  SUBCASE("labeled regions are never selected again") {
    pool.add({0, 0}, {{0, 1}}, 1);
    pool.add({0, 2}, {{0, 1, 2}}, 1);
    oracle::Oracle o(fx.masks, fx.parts);
    const Selection s = select_batch(descending(6), pool, 100, oracle::LabelMode::kMultiClass, o, 5);
    for (const auto& [ref, label] : s.entries) CHECK_FALSE(pool.contains(ref));
    CHECK(s.entries.size() == 4);
  }
  SUBCASE("ties are broken by region order") {
    oracle::Oracle o(fx.masks, fx.parts);
    std::vector<AcquisitionScore> flat;
    for (int k = 5; k >= 0; --k) flat.push_back({{0, k}, 1.0, 0});
    const Selection s = select_batch(flat, pool, 1, oracle::LabelMode::kDominant, o, 5);
    CHECK(s.entries[0].first == RegionRef{0, 0});
  }
  SUBCASE("nothing eligible") {
    oracle::Oracle o(fx.masks, fx.parts);
    auto scores = descending(6);
    for (auto& s : scores) s.dominant_class = 5;
    CHECK_THROWS_WITH(select_batch(scores, pool, 3, oracle::LabelMode::kDominant, o, 5),
                      doctest::Contains("pool exhausted"));
  }
}

TEST_CASE("positive rescaling of scores leaves the selection unchanged") {
  Rng rng(6);
  ClickFixture fx({1, 2, 3, 2, 1, 3, 2, 1});
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<AcquisitionScore> a;
    for (int k = 0; k < 8; ++k) a.push_back({{0, k}, rng.uniform(), 0});
    auto b = a;
    const double scale = rng.uniform(0.01, 100.0);
    for (auto& s : b) s.score *= scale;
    oracle::LabeledPool pool;
    oracle::Oracle oa(fx.masks, fx.parts), ob(fx.masks, fx.parts);
    const auto sa = select_batch(a, pool, 6, oracle::LabelMode::kMultiClass, oa, 5);
    const auto sb = select_batch(b, pool, 6, oracle::LabelMode::kMultiClass, ob, 5);
    CHECK(sa.entries == sb.entries);
  }
}

TEST_CASE("score_regions covers exactly the unlabeled regions") {
  Rng rng(7);
  const auto fx = oracles::random_pseudo_fixture(rng);
  for (Sampler s : {Sampler::kRandom, Sampler::kMargin, Sampler::kBvsb, Sampler::kClassBal, Sampler::kPixBal}) {
    ScoringInputs in;
    in.sampler = s;
    const auto scores = score_regions(in, &fx.params, fx.features, fx.partitions, fx.pool);
    std::size_t total = 0;
    for (const auto& p : fx.partitions) total += std::size_t(p.region_count);
    CHECK(scores.size() == total - fx.pool.size());
    for (const auto& sc : scores) {
      CHECK_FALSE(fx.pool.contains(sc.ref));
      CHECK(std::isfinite(sc.score));
      CHECK(sc.score >= 0.0);
    }
    CHECK(parse_sampler(to_string(s)) == s);
  }
  CHECK_THROWS_AS(parse_sampler("knn"), ConfigError);
}
