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
#include <string>
#include <vector>

#include "mulseg/common.hpp"

namespace mulseg::superpixel {

// Non-overlapping cover of an image by 4-connected regions.
struct Partition {
  int width = 0;
  int height = 0;
  int region_count = 0;
  std::vector<int> region_of;               // row-major, one id per pixel
  std::vector<std::vector<int>> pixels_of;  // ascending pixel indices per region

  // Builds pixels_of from a dense labeling with ids in [0, region_count).
  static Partition from_labels(int width, int height, std::vector<int> labels);

  std::size_t pixel_count() const { return region_of.size(); }
  // Throws std::logic_error if the cover/connectivity invariants fail.
  void validate() const;
};

struct AdjacencyGraph {
  std::vector<std::vector<int>> neighbors;  // sorted, symmetric, irreflexive

  bool adjacent(int a, int b) const;
};

// Axis-aligned cell x cell tiles in row-major order; edge tiles truncated.
Partition grid_partition(const Image& image, int cell);

struct SlicParams {
  int target_size = 16;  // side length of the nominal superpixel
  double compactness = 10.0;
  int iterations = 10;
  // Standard SLIC has no random component; the seed is carried for
  // interface stability and does not change the output.
  std::uint64_t seed = 0;
};

// SLIC over RGB (scaled to 0..100) with additive distance
// d_color + compactness * d_xy / target_size. Orphan fragments are merged
// into the neighbor sharing the longest boundary.
Partition slic_partition(const Image& image, const SlicParams& params);

AdjacencyGraph region_adjacency(const Partition& partition);

// 16-bit PGM of region ids (debug aid) and JSON-lines adjacency dump.
void write_partition_pgm(const Partition& partition, const std::filesystem::path& path);
Partition read_partition_pgm(const std::filesystem::path& path);
void write_adjacency_jsonl(const AdjacencyGraph& graph, const std::filesystem::path& path);

}  // namespace mulseg::superpixel
