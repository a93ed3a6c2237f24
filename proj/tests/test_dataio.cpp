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

#include <filesystem>
#include <fstream>

#include "mulseg/dataio.hpp"
#include "test_util.hpp"

using namespace mulseg;
namespace fs = std::filesystem;

namespace {

Mask small_mask(int classes, std::initializer_list<int> values, int w, int h) {
  Mask m(w, h, classes);
  std::size_t i = 0;
  for (int v : values) m.data[i++] = ClassId(v);
  return m;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), {}};
}

}  // namespace

TEST_CASE("empty directories load as an empty dataset") {
  TempDir dir;
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  CHECK(dataio::load_dataset(dir.path / "images", dir.path / "masks").empty());
}

TEST_CASE("a 4x4 image/mask pair loads with the manifest class count") {
  TempDir dir;
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  Image img(4, 4);
  for (std::size_t i = 0; i < img.data.size(); ++i) img.data[i] = double(i % 256) / 255.0;
  dataio::write_ppm(img, dir.path / "images" / "a.ppm");
  dataio::write_mask_pgm(small_mask(2, {0, 1, 0, 1, 1, 1, 0, 0, 0, 0, 0, 0, 1, 1, 1, 1}, 4, 4),
                         dir.path / "masks" / "a.pgm");
  dataio::write_manifest(dir.path, 2);

  const auto samples = dataio::load_dataset(dir.path / "images", dir.path / "masks");
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].name == "a");
  CHECK(samples[0].mask.class_count == 2);
  CHECK(samples[0].image == img);
}

TEST_CASE("UNDEF pixels load when the manifest declares fewer classes") {
  TempDir dir;
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  dataio::write_ppm(Image(2, 2), dir.path / "images" / "x.ppm");
  dataio::write_mask_pgm(small_mask(6, {0, 255, 5, 255}, 2, 2), dir.path / "masks" / "x.pgm");
  dataio::write_manifest(dir.path / "masks", 6);
  const auto samples = dataio::load_dataset(dir.path / "images", dir.path / "masks");
  REQUIRE(samples.size() == 1);
  CHECK(samples[0].mask.data[1] == kUndef);
  CHECK(samples[0].mask.data[2] == 5);
}

TEST_CASE("load_dataset error paths") {
  TempDir dir;
  fs::create_directories(dir.path / "images");
  fs::create_directories(dir.path / "masks");
  dataio::write_manifest(dir.path, 3);

  SUBCASE("unpaired file") {
    dataio::write_ppm(Image(2, 2), dir.path / "images" / "lonely.ppm");
    CHECK_THROWS_WITH_AS(dataio::load_dataset(dir.path / "images", dir.path / "masks"),
                         doctest::Contains("unpaired file"), DataError);
  }
  SUBCASE("shape mismatch") {
    dataio::write_ppm(Image(2, 2), dir.path / "images" / "s.ppm");
    dataio::write_mask_pgm(Mask(3, 2, 3), dir.path / "masks" / "s.pgm");
    CHECK_THROWS_WITH_AS(dataio::load_dataset(dir.path / "images", dir.path / "masks"),
                         doctest::Contains("shape mismatch"), DataError);
  }
  SUBCASE("invalid mask") {
    dataio::write_ppm(Image(2, 2), dir.path / "images" / "m.ppm");
    dataio::write_mask_pgm(small_mask(7, {0, 1, 6, 2}, 2, 2), dir.path / "masks" / "m.pgm");
    CHECK_THROWS_WITH_AS(dataio::load_dataset(dir.path / "images", dir.path / "masks"),
                         doctest::Contains("invalid mask"), DataError);
  }
}

TEST_CASE("generate_synthetic is a pure function of (spec, seed)") {
  dataio::SyntheticSpec spec{48, 40, 3, 12, 0.1, 1.0};
  const auto a = dataio::generate_synthetic(spec, 17);
  const auto b = dataio::generate_synthetic(spec, 17);
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
  const auto c = dataio::generate_synthetic(spec, 18);
  CHECK_FALSE(a.second == c.second);
  for (ClassId id : a.second.data) CHECK(id < 3);
  for (double v : a.first.data) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("noise-free synthetic images are constant inside a class cell") {
  dataio::SyntheticSpec spec{32, 32, 4, 6, 0.0, 0.0, 0.0};
  const auto [img, mask] = dataio::generate_synthetic(spec, 3);
  const auto palette = dataio::synthetic_palette(4);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 32; ++x) {
      for (int ch = 0; ch < 3; ++ch) CHECK(img.at(x, y, ch) == palette[mask.at(x, y)][std::size_t(ch)]);
    }
  }
}

TEST_CASE("synthetic spec preconditions") {
  CHECK_THROWS_AS(dataio::generate_synthetic({16, 16, 4, 3, 0.1, 1.0}, 0), ConfigError);
  CHECK_THROWS_AS(dataio::generate_synthetic({16, 16, 1, 3, 0.1, 1.0}, 0), ConfigError);
  CHECK_THROWS_AS(dataio::generate_synthetic({16, 16, 3, 3, -0.1, 1.0}, 0), ConfigError);
}

TEST_CASE("mask PGM round trip preserves every id, UNDEF included") {
  TempDir dir;
  Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const int w = 1 + int(rng.below(20)), h = 1 + int(rng.below(20));
    Mask m(w, h, 9);
    for (ClassId& v : m.data) v = rng.below(10) == 0 ? kUndef : ClassId(rng.below(9));
    dataio::write_mask_pgm(m, dir.path / "m.pgm");
    CHECK(dataio::read_mask_pgm(dir.path / "m.pgm", 9) == m);
  }
}

TEST_CASE("16-bit PGM round trip") {
  TempDir dir;
  dataio::GrayImage g{3, 2, 65535, {0, 1, 255, 256, 4097, 65535}};
  dataio::write_pgm(g, dir.path / "g.pgm");
  const auto back = dataio::read_pgm(dir.path / "g.pgm");
  CHECK(back.data == g.data);
  CHECK(back.maxval == 65535);
}

TEST_CASE("results CSV layout and formatting") {
  std::vector<RoundReport> reports;
  for (int r = 1; r <= 5; ++r) {
    RoundReport rep;
    rep.round = r;
    rep.cum_clicks = 100 * r;
    rep.miou = r == 1 ? 0.7321 : 0.5;
    rep.per_class_iou = {0.25, NAN};
    reports.push_back(rep);
  }
  const std::string text = dataio::format_results(reports);
  CHECK(std::count(text.begin(), text.end(), '\n') == 6);
  CHECK(text.rfind("round,cum_clicks,miou,iou_0,iou_1\n", 0) == 0);
  CHECK(text.find("1,100,0.732100,0.250000,nan\n") != std::string::npos);

  TempDir dir;
  dataio::write_results(reports, dir.path / "a.csv");
  dataio::write_results(reports, dir.path / "b.csv");
  CHECK(slurp(dir.path / "a.csv") == slurp(dir.path / "b.csv"));
  CHECK(slurp(dir.path / "a.csv") == text);
  CHECK_THROWS(dataio::format_results(std::vector<RoundReport>{}));
  CHECK_THROWS_AS(dataio::write_results(reports, dir.path / "missing" / "x.csv"), std::ios_base::failure);
}

TEST_CASE("mean_reports averages mIoU arithmetically") {
  RoundReport a, b;
  a.round = b.round = 1;
  a.miou = 0.5;
  b.miou = 0.7;
  a.per_class_iou = {0.2, NAN};
  b.per_class_iou = {0.4, 0.6};
  const std::vector<std::vector<RoundReport>> runs{{a}, {b}};
  const auto mean = dataio::mean_reports(runs);
  CHECK(mean[0].miou == doctest::Approx(0.6).epsilon(1e-12));
  CHECK(mean[0].per_class_iou[0] == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(mean[0].per_class_iou[1] == doctest::Approx(0.6).epsilon(1e-12));
}
