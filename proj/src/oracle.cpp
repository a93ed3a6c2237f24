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

#include "mulseg/oracle.hpp"

#include <algorithm>
#include <array>
#include <fstream>
#include <set>

#include "json.hpp"
#include "mulseg/dataio.hpp"

namespace mulseg::oracle {

const char* to_string(LabelMode mode) {
  return mode == LabelMode::kDominant ? "dominant" : "multiclass";
}

LabelMode parse_label_mode(const std::string& text) {
  if (text == "dominant" || text == "dom") return LabelMode::kDominant;
  if (text == "multiclass" || text == "mul") return LabelMode::kMultiClass;
  throw ConfigError("unknown labeling mode: " + text);
}

bool MultiClassLabel::contains(ClassId c) const {
  return std::binary_search(classes.begin(), classes.end(), c);
}

ClassId dominant_label(std::span<const int> region, const Mask& mask) {
  if (region.empty()) throw std::invalid_argument("dominant_label: empty region");
  std::array<std::int64_t, 256> counts{};
  for (int p : region) ++counts[mask.data[std::size_t(p)]];
  // max_element returns the first maximum, i.e. the lowest id.
  return ClassId(std::max_element(counts.begin(), counts.end()) - counts.begin());
}

std::vector<int> boundary_band(std::span<const int> region, const superpixel::Partition& partition) {
  if (region.empty()) return {};
  const int W = partition.width, H = partition.height;
  const int id = partition.region_of[std::size_t(region.front())];
  int x0 = W, y0 = H, x1 = -1, y1 = -1;
  for (int p : region) {
    x0 = std::min(x0, p % W);
    x1 = std::max(x1, p % W);
    y0 = std::min(y0, p / W);
    y1 = std::max(y1, p / W);
  }
  const int bw = x1 - x0 + 1, bh = y1 - y0 + 1;
  std::vector<char> boundary(std::size_t(bw) * bh, 0);
  auto inside = [&](int x, int y) {
    return x >= 0 && y >= 0 && x < W && y < H && partition.region_of[std::size_t(y) * W + x] == id;
  };
  for (int p : region) {
    const int x = p % W, y = p / W;
    if (!inside(x - 1, y) || !inside(x + 1, y) || !inside(x, y - 1) || !inside(x, y + 1)) {
      boundary[std::size_t(y - y0) * bw + (x - x0)] = 1;
    }
  }
  std::vector<int> band;
  for (int p : region) {
    const int x = p % W - x0, y = p / W - y0;
    bool hit = false;
    for (int dy = -2; dy <= 2 && !hit; ++dy) {
      for (int dx = -2; dx <= 2 && !hit; ++dx) {
        const int bx = x + dx, by = y + dy;
        hit = bx >= 0 && by >= 0 && bx < bw && by < bh && boundary[std::size_t(by) * bw + bx];
      }
    }
    if (hit) band.push_back(p);
  }
  return band;
}

MultiClassLabel multiclass_label(std::span<const int> region, const Mask& mask,
                                 const superpixel::Partition& partition) {
  if (region.empty()) throw std::invalid_argument("multiclass_label: empty region");
  const std::vector<int> band = boundary_band(region, partition);  // ascending, like region
  std::array<bool, 256> present{};
  std::size_t b = 0;
  for (int p : region) {
    while (b < band.size() && band[b] < p) ++b;
    if (b < band.size() && band[b] == p) continue;
    present[mask.data[std::size_t(p)]] = true;
  }
  MultiClassLabel label;
  for (int c = 0; c < 256; ++c) {
    if (present[std::size_t(c)]) label.classes.push_back(ClassId(c));
  }
  if (label.classes.empty()) label.classes.push_back(dominant_label(region, mask));
  return label;
}

std::int64_t click_cost(const MultiClassLabel& label, LabelMode mode) {
  return mode == LabelMode::kDominant ? 1 : std::int64_t(label.size());
}

void LabeledPool::add(RegionRef ref, MultiClassLabel label, int round) {
  if (label.classes.empty()) throw std::invalid_argument("empty label set");
  if (!std::is_sorted(label.classes.begin(), label.classes.end())) {
    std::sort(label.classes.begin(), label.classes.end());
  }
  if (!entries_.emplace(ref, PoolEntry{std::move(label), round}).second) {
    throw std::invalid_argument("already labeled: image " + std::to_string(ref.image) + " region " +
                                std::to_string(ref.region));
  }
}

std::vector<RegionRef> LabeledPool::single_class() const {
  std::vector<RegionRef> out;
  for (const auto& [ref, e] : entries_) {
    if (e.label.size() == 1) out.push_back(ref);
  }
  return out;
}

std::vector<RegionRef> LabeledPool::multi_class() const {
  std::vector<RegionRef> out;
  for (const auto& [ref, e] : entries_) {
    if (e.label.size() > 1) out.push_back(ref);
  }
  return out;
}

std::int64_t LabeledPool::total_classes() const {
  std::int64_t n = 0;
  for (const auto& [ref, e] : entries_) n += std::int64_t(e.label.size());
  return n;
}

void LabeledPool::save_jsonl(const std::filesystem::path& path) const {
  dataio::JsonlLog log(path);
  for (const auto& [ref, e] : entries_) {
    std::vector<int> classes(e.label.classes.begin(), e.label.classes.end());
    log.write({{"image", ref.image}, {"region", ref.region}, {"classes", classes}, {"round", e.round}});
  }
}

LabeledPool LabeledPool::load_jsonl(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  LabeledPool pool;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      MultiClassLabel label;
      for (int c : j.at("classes").get<std::vector<int>>()) {
        if (c < 0 || c > 255) throw DataError("class id out of range");
        label.classes.push_back(ClassId(c));
      }
      pool.add({j.at("image").get<int>(), j.at("region").get<int>()}, std::move(label), j.at("round").get<int>());
    } catch (const nlohmann::json::exception& e) {
      throw DataError("malformed pool line: " + std::string(e.what()));
    }
  }
  return pool;
}

Oracle::Oracle(std::span<const Mask> masks, std::span<const superpixel::Partition> partitions)
    : masks_(masks), partitions_(partitions) {
  if (masks.size() != partitions.size()) throw std::invalid_argument("oracle: masks/partitions size mismatch");
}

MultiClassLabel Oracle::query(RegionRef ref, LabelMode mode) {
  const Mask& mask = masks_[std::size_t(ref.image)];
  const superpixel::Partition& part = partitions_[std::size_t(ref.image)];
  const auto& pixels = part.pixels_of.at(std::size_t(ref.region));
  MultiClassLabel label = mode == LabelMode::kDominant ? MultiClassLabel{{dominant_label(pixels, mask)}}
                                                       : multiclass_label(pixels, mask, part);
  clicks_ += click_cost(label, mode);
  return label;
}

QueryResult Oracle::query_batch(std::span<const RegionRef> regions, LabelMode mode, const LabeledPool& pool) {
  std::set<RegionRef> seen;
  for (RegionRef r : regions) {
    if (pool.contains(r) || !seen.insert(r).second) {
      throw std::invalid_argument("already labeled: image " + std::to_string(r.image) + " region " +
                                  std::to_string(r.region));
    }
  }
  QueryResult result;
  for (RegionRef r : regions) {
    MultiClassLabel label = query(r, mode);
    result.clicks += click_cost(label, mode);
    result.entries.emplace_back(r, std::move(label));
  }
  return result;
}

}  // namespace mulseg::oracle
