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
#include <map>
#include <span>
#include <utility>
#include <vector>

#include "mulseg/common.hpp"
#include "mulseg/superpixel.hpp"

namespace mulseg::oracle {

enum class LabelMode { kDominant, kMultiClass };

const char* to_string(LabelMode mode);
LabelMode parse_label_mode(const std::string& text);

// Sorted, non-empty set of class ids; kUndef may appear (and sorts last).
struct MultiClassLabel {
  std::vector<ClassId> classes;

  std::size_t size() const { return classes.size(); }
  bool contains(ClassId c) const;
  bool operator==(const MultiClassLabel&) const = default;
};

// Majority class over the region; ties go to the lowest id (kUndef last).
ClassId dominant_label(std::span<const int> region, const Mask& mask);

// Region pixels within Chebyshev distance 2 of a region-boundary pixel,
// i.e. the boundary dilated by a 5x5 square and clipped to the region.
// A boundary pixel touches another region or the image border.
std::vector<int> boundary_band(std::span<const int> region, const superpixel::Partition& partition);

// Classes present in the region outside its boundary band; falls back to
// the dominant class when the band swallows the whole region.
MultiClassLabel multiclass_label(std::span<const int> region, const Mask& mask,
                                 const superpixel::Partition& partition);

std::int64_t click_cost(const MultiClassLabel& label, LabelMode mode);

struct PoolEntry {
  MultiClassLabel label;
  int round = 0;
  bool operator==(const PoolEntry&) const = default;
};

// Labeled regions accumulated over rounds. A region is labeled at most once.
class LabeledPool {
 public:
  bool contains(RegionRef ref) const { return entries_.contains(ref); }
  // Throws std::invalid_argument("already labeled") on duplicates.
  void add(RegionRef ref, MultiClassLabel label, int round);

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  const std::map<RegionRef, PoolEntry>& entries() const { return entries_; }

  std::vector<RegionRef> single_class() const;
  std::vector<RegionRef> multi_class() const;
  // Sum of |Y| over all entries.
  std::int64_t total_classes() const;

  // One `{"image":i,"region":r,"classes":[...],"round":t}` object per line.
  void save_jsonl(const std::filesystem::path& path) const;
  static LabeledPool load_jsonl(const std::filesystem::path& path);

  bool operator==(const LabeledPool&) const = default;

 private:
  std::map<RegionRef, PoolEntry> entries_;
};

struct QueryResult {
  std::vector<std::pair<RegionRef, MultiClassLabel>> entries;
  std::int64_t clicks = 0;
};

// Simulated annotator replaying ground-truth masks. Keeps its own click
// counter so callers' accounting can be cross-checked.
class Oracle {
 public:
  Oracle(std::span<const Mask> masks, std::span<const superpixel::Partition> partitions);

  MultiClassLabel query(RegionRef ref, LabelMode mode);
  // Labels `regions` in order; rejects regions already in `pool` or
  // repeated within the batch.
  QueryResult query_batch(std::span<const RegionRef> regions, LabelMode mode, const LabeledPool& pool);

  std::int64_t clicks_spent() const { return clicks_; }

 private:
  std::span<const Mask> masks_;
  std::span<const superpixel::Partition> partitions_;
  std::int64_t clicks_ = 0;
};

}  // namespace mulseg::oracle
