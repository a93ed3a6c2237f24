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

#include "mulseg/dataio.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "mulseg/rng.hpp"

namespace mulseg::dataio {
namespace {

struct PnmHeader {
  std::string magic;
  int width = 0;
  int height = 0;
  int maxval = 0;
};

int read_header_int(std::istream& in, const fs::path& path) {
  int c = in.peek();
  while (c != EOF) {
    if (c == '#') {
      std::string skip;
      std::getline(in, skip);
    } else if (std::isspace(c)) {
      in.get();
    } else {
      break;
    }
    c = in.peek();
  }
  int value = 0;
  if (!(in >> value) || value <= 0) {
    throw DataError("malformed header in " + path.string());
  }
  return value;
}

PnmHeader read_header(std::istream& in, const fs::path& path) {
  PnmHeader h;
  char magic[2] = {0, 0};
  in.read(magic, 2);
  if (!in) throw DataError("truncated file " + path.string());
  h.magic.assign(magic, 2);
  h.width = read_header_int(in, path);
  h.height = read_header_int(in, path);
  h.maxval = read_header_int(in, path);
  if (h.maxval > 65535) throw DataError("unsupported maxval in " + path.string());
  in.get();  // single whitespace before raster
  return h;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open " + path.string());
  return in;
}

std::ofstream open_out(const fs::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::ios_base::failure("cannot write " + path.string());
  return out;
}

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

std::map<std::string, fs::path> files_by_stem(const fs::path& dir, const std::string& ext) {
  std::map<std::string, fs::path> out;
  if (!fs::exists(dir)) throw DataError("missing directory " + dir.string());
  for (const auto& entry : fs::directory_iterator(dir)) {
    if (entry.is_regular_file() && entry.path().extension() == ext) {
      out.emplace(entry.path().stem().string(), entry.path());
    }
  }
  return out;
}

std::string fixed6(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", v);
  return buf;
}

}  // namespace

Image read_ppm(const fs::path& path) {
  auto in = open_in(path);
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P6" || h.maxval != 255) {
    throw DataError("expected 8-bit binary PPM: " + path.string());
  }
  Image image(h.width, h.height);
  std::vector<unsigned char> raw(image.data.size());
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!in) throw DataError("truncated raster in " + path.string());
  std::transform(raw.begin(), raw.end(), image.data.begin(),
                 [](unsigned char b) { return b / 255.0; });
  return image;
}

void write_ppm(const Image& image, const fs::path& path) {
  auto out = open_out(path);
  out << "P6\n" << image.width << ' ' << image.height << "\n255\n";
  std::vector<unsigned char> raw(image.data.size());
  std::transform(image.data.begin(), image.data.end(), raw.begin(), [](double v) {
    return static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
  });
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

GrayImage read_pgm(const fs::path& path) {
  auto in = open_in(path);
  const PnmHeader h = read_header(in, path);
  if (h.magic != "P5") throw DataError("expected binary PGM: " + path.string());
  GrayImage g{h.width, h.height, h.maxval, {}};
  const std::size_t n = std::size_t(h.width) * h.height;
  const std::size_t bytes = h.maxval > 255 ? 2 : 1;
  std::vector<unsigned char> raw(n * bytes);
  in.read(reinterpret_cast<char*>(raw.data()), std::streamsize(raw.size()));
  if (!in) throw DataError("truncated raster in " + path.string());
  g.data.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    g.data[i] = bytes == 2 ? (raw[2 * i] << 8) | raw[2 * i + 1] : raw[i];
  }
  return g;
}

void write_pgm(const GrayImage& gray, const fs::path& path) {
  auto out = open_out(path);
  out << "P5\n" << gray.width << ' ' << gray.height << '\n' << gray.maxval << '\n';
  const bool wide = gray.maxval > 255;
  std::vector<unsigned char> raw;
  raw.reserve(gray.data.size() * (wide ? 2 : 1));
  for (int v : gray.data) {
    if (v < 0 || v > gray.maxval) throw std::out_of_range("PGM value exceeds maxval");
    if (wide) raw.push_back(static_cast<unsigned char>(v >> 8));
    raw.push_back(static_cast<unsigned char>(v & 0xff));
  }
  out.write(reinterpret_cast<const char*>(raw.data()), std::streamsize(raw.size()));
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

Mask read_mask_pgm(const fs::path& path, int class_count) {
  const GrayImage g = read_pgm(path);
  if (g.maxval != 255) throw DataError("invalid mask: expected 8-bit PGM " + path.string());
  Mask mask(g.width, g.height, class_count);
  for (std::size_t i = 0; i < g.data.size(); ++i) {
    const int v = g.data[i];
    if (v >= class_count && v != kUndef) {
      throw DataError("invalid mask: class id " + std::to_string(v) + " in " + path.string());
    }
    mask.data[i] = ClassId(v);
  }
  return mask;
}

void write_mask_pgm(const Mask& mask, const fs::path& path) {
  GrayImage g{mask.width, mask.height, 255, std::vector<int>(mask.data.begin(), mask.data.end())};
  write_pgm(g, path);
}

int read_manifest(const fs::path& dir) {
  std::ifstream in(dir / "manifest.txt");
  if (!in) throw DataError("missing manifest in " + dir.string());
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.rfind("classes", 0) != 0) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) break;
    try {
      const int c = std::stoi(trim(line.substr(eq + 1)));
      if (c < 1 || c >= kUndef) break;
      return c;
    } catch (const std::logic_error&) {
      break;
    }
  }
  throw DataError("manifest without valid classes=<C> line in " + dir.string());
}

int find_manifest(const fs::path& dir) {
  if (fs::exists(dir / "manifest.txt")) return read_manifest(dir);
  return read_manifest(fs::absolute(dir).parent_path());
}

void write_manifest(const fs::path& dir, int class_count) {
  auto out = open_out(dir / "manifest.txt");
  out << "classes=" << class_count << '\n';
}

std::vector<Sample> load_dataset(const fs::path& image_dir, const fs::path& mask_dir) {
  const auto images = files_by_stem(image_dir, ".ppm");
  const auto masks = files_by_stem(mask_dir, ".pgm");
  for (const auto& [stem, path] : images) {
    if (!masks.contains(stem)) throw DataError("unpaired file: " + path.string());
  }
  for (const auto& [stem, path] : masks) {
    if (!images.contains(stem)) throw DataError("unpaired file: " + path.string());
  }
  if (images.empty()) return {};

  const int class_count = find_manifest(mask_dir);

  std::vector<Sample> samples;
  samples.reserve(images.size());
  for (const auto& [stem, image_path] : images) {
    Sample s{stem, read_ppm(image_path), read_mask_pgm(masks.at(stem), class_count)};
    if (s.image.width != s.mask.width || s.image.height != s.mask.height) {
      throw DataError("shape mismatch: " + stem);
    }
    samples.push_back(std::move(s));
  }
  return samples;
}

void save_dataset(std::span<const Sample> samples, const fs::path& root) {
  fs::create_directories(root / "images");
  fs::create_directories(root / "masks");
  int class_count = 0;
  for (const Sample& s : samples) {
    write_ppm(s.image, root / "images" / (s.name + ".ppm"));
    write_mask_pgm(s.mask, root / "masks" / (s.name + ".pgm"));
    class_count = std::max(class_count, s.mask.class_count);
  }
  write_manifest(root, class_count);
}

void SyntheticSpec::validate() const {
  if (width < 1 || height < 1) throw ConfigError("synthetic: image must be non-empty");
  if (class_count < 2 || class_count >= kUndef) throw ConfigError("synthetic: class_count out of range");
  if (site_count < class_count) throw ConfigError("synthetic: site_count < class_count");
  if (!(noise_std >= 0.0)) throw ConfigError("synthetic: noise_std must be >= 0");
  if (!(class_frequency_skew >= 0.0)) throw ConfigError("synthetic: skew must be >= 0");
  if (!(cell_color_std >= 0.0)) throw ConfigError("synthetic: cell_color_std must be >= 0");
}

std::vector<std::array<double, 3>> synthetic_palette(int class_count) {
  // Evenly spaced hues at fixed saturation and value.
  std::vector<std::array<double, 3>> palette(static_cast<std::size_t>(class_count));
  constexpr double kSat = 0.6, kVal = 0.75;
  for (int k = 0; k < class_count; ++k) {
    const double hue = 6.0 * k / class_count;
    const int sector = int(hue) % 6;
    const double f = hue - std::floor(hue);
    const double p = kVal * (1 - kSat), q = kVal * (1 - kSat * f), t = kVal * (1 - kSat * (1 - f));
    std::array<double, 3> rgb;
    switch (sector) {
      case 0: rgb = {kVal, t, p}; break;
      case 1: rgb = {q, kVal, p}; break;
      case 2: rgb = {p, kVal, t}; break;
      case 3: rgb = {p, q, kVal}; break;
      case 4: rgb = {t, p, kVal}; break;
      default: rgb = {kVal, p, q}; break;
    }
    palette[std::size_t(k)] = rgb;
  }
  return palette;
}

std::pair<Image, Mask> generate_synthetic(const SyntheticSpec& spec, std::uint64_t seed) {
  spec.validate();
  Rng rng(derive_seed(seed, 0x5e7));

  std::vector<double> weights(static_cast<std::size_t>(spec.class_count));
  double total = 0.0;
  for (int k = 0; k < spec.class_count; ++k) {
    weights[std::size_t(k)] = std::pow(double(k + 1), -spec.class_frequency_skew);
    total += weights[std::size_t(k)];
  }

  struct Site {
    double x, y;
    ClassId cls;
    double tint[3];
  };
  std::vector<Site> sites(static_cast<std::size_t>(spec.site_count));
  for (Site& s : sites) {
    s.x = rng.uniform(0.0, spec.width);
    s.y = rng.uniform(0.0, spec.height);
    double u = rng.uniform() * total;
    int k = 0;
    while (k + 1 < spec.class_count && u >= weights[std::size_t(k)]) {
      u -= weights[std::size_t(k)];
      ++k;
    }
    s.cls = ClassId(k);
    for (double& t : s.tint) t = spec.cell_color_std > 0.0 ? spec.cell_color_std * rng.normal() : 0.0;
  }

  const auto palette = synthetic_palette(spec.class_count);
  Image image(spec.width, spec.height);
  Mask mask(spec.width, spec.height, spec.class_count);
  for (int y = 0; y < spec.height; ++y) {
    for (int x = 0; x < spec.width; ++x) {
      const double px = x + 0.5, py = y + 0.5;
      std::size_t best = 0;
      double best_d = INFINITY;
      for (std::size_t i = 0; i < sites.size(); ++i) {
        const double d = (sites[i].x - px) * (sites[i].x - px) + (sites[i].y - py) * (sites[i].y - py);
        if (d < best_d) {
          best_d = d;
          best = i;
        }
      }
      const Site& site = sites[best];
      const ClassId cls = site.cls;
      mask.at(x, y) = cls;
      for (int ch = 0; ch < 3; ++ch) {
        const double noise = spec.noise_std > 0.0 ? spec.noise_std * rng.normal() : 0.0;
        image.at(x, y, ch) = std::clamp(palette[cls][std::size_t(ch)] + site.tint[ch] + noise, 0.0, 1.0);
      }
    }
  }
  return {std::move(image), std::move(mask)};
}

std::string format_results(std::span<const RoundReport> reports) {
  if (reports.empty()) throw std::invalid_argument("write_results: empty report");
  std::ostringstream out;
  out << "round,cum_clicks,miou";
  for (std::size_t c = 0; c < reports.front().per_class_iou.size(); ++c) out << ",iou_" << c;
  out << '\n';
  for (const RoundReport& r : reports) {
    out << r.round << ',' << r.cum_clicks << ',' << fixed6(r.miou);
    for (double iou : r.per_class_iou) out << ',' << fixed6(iou);
    out << '\n';
  }
  return out.str();
}

void write_results(std::span<const RoundReport> reports, const fs::path& path) {
  const std::string text = format_results(reports);
  auto out = open_out(path);
  out << text;
  if (!out) throw std::ios_base::failure("write failed: " + path.string());
}

std::vector<RoundReport> mean_reports(std::span<const std::vector<RoundReport>> runs) {
  if (runs.empty()) throw std::invalid_argument("mean_reports: no runs");
  const std::size_t rounds = runs.front().size();
  for (const auto& run : runs) {
    if (run.size() != rounds) throw std::invalid_argument("mean_reports: round count differs");
  }
  const double n = double(runs.size());
  std::vector<RoundReport> mean(rounds);
  for (std::size_t r = 0; r < rounds; ++r) {
    RoundReport& m = mean[r];
    m = runs.front()[r];
    const std::size_t classes = m.per_class_iou.size();
    double miou = 0, s1 = 0, s2 = 0, cum = 0, clicks = 0, over = 0, loc = 0, exp = 0;
    std::vector<double> iou_sum(classes, 0.0);
    std::vector<int> iou_n(classes, 0);
    for (const auto& run : runs) {
      const RoundReport& x = run[r];
      miou += x.miou;
      s1 += x.stage1_loss;
      s2 += x.stage2_loss;
      cum += double(x.cum_clicks);
      clicks += double(x.clicks);
      over += double(x.overshoot);
      loc += double(x.localized_pixels);
      exp += double(x.expanded_pixels);
      for (std::size_t c = 0; c < classes && c < x.per_class_iou.size(); ++c) {
        if (!std::isnan(x.per_class_iou[c])) {
          iou_sum[c] += x.per_class_iou[c];
          ++iou_n[c];
        }
      }
    }
    m.miou = miou / n;
    m.stage1_loss = s1 / n;
    m.stage2_loss = s2 / n;
    m.cum_clicks = std::llround(cum / n);
    m.clicks = std::llround(clicks / n);
    m.overshoot = std::llround(over / n);
    m.localized_pixels = std::llround(loc / n);
    m.expanded_pixels = std::llround(exp / n);
    for (std::size_t c = 0; c < classes; ++c) {
      m.per_class_iou[c] = iou_n[c] ? iou_sum[c] / iou_n[c] : NAN;
    }
  }
  return mean;
}

JsonlLog::JsonlLog(const fs::path& path) : out_(open_out(path)) {}

void JsonlLog::write(const nlohmann::json& event) {
  if (!out_.is_open()) return;
  out_ << event.dump() << '\n';
  out_.flush();
}

}  // namespace mulseg::dataio
