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

#include "mulseg/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "mulseg/rng.hpp"

namespace mulseg::acquisition {
namespace {

struct TopTwo {
  int best = 0;
  double p_best = 0.0;
  double p_second = 0.0;
};

template <typename Get>
TopTwo top_two(Eigen::Index n, Get get) {
  TopTwo t;
  t.p_best = get(0);
  for (Eigen::Index c = 1; c < n; ++c) {
    if (get(c) > t.p_best) t.best = int(c), t.p_best = get(c);
  }
  t.p_second = -1.0;
  for (Eigen::Index c = 0; c < n; ++c) {
    if (c != t.best && get(c) > t.p_second) t.p_second = get(c);
  }
  return t;
}

TopTwo column_top_two(const Matrix& probs, Eigen::Index j) {
  if (probs.rows() < 2) throw std::invalid_argument("BvSB needs at least two classes");
  return top_two(probs.rows(), [&](Eigen::Index c) { return probs(c, j); });
}

double balance_weight(double nu, double freq) {
  const double d = 1.0 + nu * freq;
  return 1.0 / (d * d);
}

void check_region(std::span<const int> region) {
  if (region.empty()) throw std::invalid_argument("acquisition: empty region");
}

}  // namespace

const char* to_string(Sampler sampler) {
  switch (sampler) {
    case Sampler::kRandom: return "random";
    case Sampler::kMargin: return "margin";
    case Sampler::kBvsb: return "bvsb";
    case Sampler::kClassBal: return "classbal";
    case Sampler::kPixBal: return "pixbal";
  }
  return "?";
}

Sampler parse_sampler(const std::string& text) {
  for (Sampler s : {Sampler::kRandom, Sampler::kMargin, Sampler::kBvsb, Sampler::kClassBal, Sampler::kPixBal}) {
    if (text == to_string(s)) return s;
  }
  throw ConfigError("unknown sampler: " + text);
}

double bvsb(std::span<const double> probs) {
  if (probs.size() < 2) throw std::invalid_argument("BvSB needs at least two classes");
  const TopTwo t = top_two(Eigen::Index(probs.size()), [&](Eigen::Index c) { return probs[std::size_t(c)]; });
  return t.p_second / t.p_best;
}

double bvsb(const Matrix& probs, Eigen::Index column) {
  const TopTwo t = column_top_two(probs, column);
  return t.p_second / t.p_best;
}

Vector estimate_class_distribution(const Matrix& probs) {
  if (probs.cols() == 0) throw std::invalid_argument("class distribution of an empty pixel set");
  return probs.rowwise().mean();
}

void ClassDistributionEstimate::add(const Matrix& probs) {
  sum_ += probs.rowwise().sum();
  count_ += probs.cols();
}

void ClassDistributionEstimate::add_column(const Matrix& probs, Eigen::Index column) {
  sum_ += probs.col(column);
  ++count_;
}

Vector ClassDistributionEstimate::mean() const {
  if (count_ == 0) throw std::invalid_argument("class distribution of an empty pixel set");
  return sum_ / double(count_);
}

double score_pixbal(const Matrix& probs, std::span<const int> region, const Vector& dist, double nu) {
  check_region(region);
  double sum = 0.0;
  for (int j : region) {
    const TopTwo t = column_top_two(probs, j);
    sum += (t.p_second / t.p_best) * balance_weight(nu, dist(t.best));
  }
  return sum / double(region.size());
}

double score_classbal(const Matrix& probs, std::span<const int> region, const Vector& dist, double nu) {
  const int mode = predicted_dominant_class(probs, region);
  return score_bvsb(probs, region) * balance_weight(nu, dist(mode));
}

double score_bvsb(const Matrix& probs, std::span<const int> region) {
  check_region(region);
  double sum = 0.0;
  for (int j : region) sum += bvsb(probs, j);
  return sum / double(region.size());
}

double score_margin(const Matrix& probs, std::span<const int> region) {
  check_region(region);
  double sum = 0.0;
  for (int j : region) {
    const TopTwo t = column_top_two(probs, j);
    sum += 1.0 - (t.p_best - t.p_second);
  }
  return sum / double(region.size());
}

double score_random(RegionRef ref, int round, std::uint64_t seed) {
  std::uint64_t h = derive_seed(seed, std::uint64_t(std::uint32_t(round)));
  h = mix64(h ^ std::uint64_t(std::uint32_t(ref.image)));
  h = mix64(h ^ (std::uint64_t(std::uint32_t(ref.region)) << 32));
  return unit_interval(h);
}

int predicted_dominant_class(const Matrix& probs, std::span<const int> region) {
  check_region(region);
  std::vector<int> counts(static_cast<std::size_t>(probs.rows()), 0);
  for (int j : region) {
    Eigen::Index best = 0;
    probs.col(j).maxCoeff(&best);
    ++counts[std::size_t(best)];
  }
  return int(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<AcquisitionScore> score_regions(const ScoringInputs& in, const model::ModelParams* params,
                                            std::span<const model::FeatureMap> features,
                                            std::span<const superpixel::Partition> partitions,
                                            const oracle::LabeledPool& pool) {
  std::vector<AcquisitionScore> scores;
  const bool random = in.sampler == Sampler::kRandom || params == nullptr;
  if (random) {
    for (int i = 0; i < int(partitions.size()); ++i) {
      for (int r = 0; r < partitions[std::size_t(i)].region_count; ++r) {
        if (!pool.contains({i, r})) scores.push_back({{i, r}, score_random({i, r}, in.round, in.seed), -1});
      }
    }
    return scores;
  }

  std::vector<Matrix> probs;
  probs.reserve(features.size());
  ClassDistributionEstimate dist(params->classifier.cols());
  for (const auto& fm : features) {
    probs.push_back(model::predict_probs(model::embed(fm.values, *params), *params));
    if (in.distribution_sample == 0) dist.add(probs.back());
  }
  if (in.distribution_sample > 0) {
    Rng rng(derive_seed(in.seed, 0xd157 + std::uint64_t(in.round)));
    for (std::int64_t k = 0; k < in.distribution_sample; ++k) {
      const auto& p = probs[std::size_t(rng.below(probs.size()))];
      dist.add_column(p, Eigen::Index(rng.below(std::uint64_t(p.cols()))));
    }
  }
  const Vector class_dist = dist.mean();

  for (int i = 0; i < int(partitions.size()); ++i) {
    const auto& part = partitions[std::size_t(i)];
    const Matrix& p = probs[std::size_t(i)];
    for (int r = 0; r < part.region_count; ++r) {
      if (pool.contains({i, r})) continue;
      const auto& pixels = part.pixels_of[std::size_t(r)];
      double s = 0.0;
      switch (in.sampler) {
        case Sampler::kPixBal: s = score_pixbal(p, pixels, class_dist, in.nu); break;
        case Sampler::kClassBal: s = score_classbal(p, pixels, class_dist, in.nu); break;
        case Sampler::kBvsb: s = score_bvsb(p, pixels); break;
        case Sampler::kMargin: s = score_margin(p, pixels); break;
        case Sampler::kRandom: break;
      }
      scores.push_back({{i, r}, s, predicted_dominant_class(p, pixels)});
    }
  }
  return scores;
}

Selection select_batch(std::vector<AcquisitionScore> scores, const oracle::LabeledPool& pool,
                       std::int64_t budget_clicks, oracle::LabelMode mode, oracle::Oracle& oracle,
                       int undefined_index) {
  if (budget_clicks < 1) throw std::invalid_argument("select_batch: budget must be >= 1");
  std::sort(scores.begin(), scores.end(), [](const AcquisitionScore& a, const AcquisitionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ref < b.ref;
  });
  Selection sel;
  for (const AcquisitionScore& s : scores) {
    if (sel.clicks >= budget_clicks) break;
    if (pool.contains(s.ref)) continue;
    if (s.dominant_class >= 0 && s.dominant_class == undefined_index) {
      ++sel.skipped_undefined;
      continue;
    }
    oracle::MultiClassLabel label = oracle.query(s.ref, mode);
    sel.clicks += oracle::click_cost(label, mode);
    sel.entries.emplace_back(s.ref, std::move(label));
  }
  if (sel.entries.empty()) throw std::runtime_error("pool exhausted");
  sel.overshoot = std::max<std::int64_t>(0, sel.clicks - budget_clicks);
  return sel;
}

void write_scores_csv(std::span<const AcquisitionScore> scores, const std::filesystem::path& path) {
  std::vector<AcquisitionScore> sorted(scores.begin(), scores.end());
  std::sort(sorted.begin(), sorted.end(), [](const AcquisitionScore& a, const AcquisitionScore& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.ref < b.ref;
  });
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  out << "image,region,score,dominant_class\n";
  char buf[64];
  for (const AcquisitionScore& s : sorted) {
    std::snprintf(buf, sizeof buf, "%.9f", s.score);
    out << s.ref.image << ',' << s.ref.region << ',' << buf << ',' << s.dominant_class << '\n';
  }
}

}  // namespace mulseg::acquisition
