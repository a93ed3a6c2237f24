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

#include <array>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "mulseg/common.hpp"
#include "mulseg/report.hpp"

namespace mulseg::dataio {

namespace fs = std::filesystem;

// Binary PPM (P6, maxval 255). Channels map linearly to [0, 1].
Image read_ppm(const fs::path& path);
void write_ppm(const Image& image, const fs::path& path);

// Binary PGM (P5, maxval 255) holding class ids; 255 is kUndef.
// `class_count` is attached to the returned mask and validated against.
Mask read_mask_pgm(const fs::path& path, int class_count);
void write_mask_pgm(const Mask& mask, const fs::path& path);

// Generic 8-bit or 16-bit grayscale PGM.
struct GrayImage {
  int width = 0;
  int height = 0;
  int maxval = 255;
  std::vector<int> data;
};
GrayImage read_pgm(const fs::path& path);
void write_pgm(const GrayImage& gray, const fs::path& path);

// Dataset manifest: a `manifest.txt` file with a `classes=<C>` line.
int read_manifest(const fs::path& dir);
// Manifest of `dir`, else of its parent (masks/ inside a dataset root).
int find_manifest(const fs::path& dir);
void write_manifest(const fs::path& dir, int class_count);

struct Sample {
  std::string name;
  Image image;
  Mask mask;
};

// Pairs `<stem>.ppm` images with `<stem>.pgm` masks, in lexicographic
// order. The manifest is looked up in `mask_dir`, then its parent.
std::vector<Sample> load_dataset(const fs::path& image_dir, const fs::path& mask_dir);

// Writes `images/`, `masks/` and `manifest.txt` under `root`.
void save_dataset(std::span<const Sample> samples, const fs::path& root);

struct SyntheticSpec {
  int width = 128;
  int height = 128;
  int class_count = 6;
  int site_count = 40;
  double noise_std = 0.3;
  double class_frequency_skew = 2.0;
  // Std of a per-cell color offset, so instances of a class vary in tint.
  double cell_color_std = 0.08;

  void validate() const;
};

// Mean RGB color of each class in synthetic images. Depends on the class
// count only, so every image of a dataset shares the palette.
std::vector<std::array<double, 3>> synthetic_palette(int class_count);

// Voronoi tessellation of seeded sites, one class per cell (weights
// (k+1)^-skew), per-class colors shifted per cell by cell_color_std, plus
// clipped per-pixel Gaussian noise.
std::pair<Image, Mask> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed);

// CSV `round,cum_clicks,miou,iou_0,...` with 6 decimals.
void write_results(std::span<const RoundReport> reports, const fs::path& path);
std::string format_results(std::span<const RoundReport> reports);

// Element-wise arithmetic mean of several runs with equal round counts.
std::vector<RoundReport> mean_reports(std::span<const std::vector<RoundReport>> runs);

// Append-only JSON-lines sink. A default-constructed log discards events.
class JsonlLog {
 public:
  JsonlLog() = default;
  explicit JsonlLog(const fs::path& path);

  bool enabled() const { return out_.is_open(); }
  void write(const nlohmann::json& event);

 private:
  std::ofstream out_;
};

}  // namespace mulseg::dataio
