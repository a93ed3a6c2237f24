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

#include "mulseg/superpixel.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <numeric>

#include "json.hpp"
#include "mulseg/dataio.hpp"

namespace mulseg::superpixel {
namespace {

constexpr double kColorScale = 100.0;

// 4-connected components of a labeling, numbered in raster order of their
// first pixel.
struct Components {
  std::vector<int> comp_of;
  std::vector<int> label;
  std::vector<int> size;
};

Components connected_components(int width, int height, const std::vector<int>& labels) {
  Components c;
  c.comp_of.assign(labels.size(), -1);
  std::vector<int> stack;
  for (int start = 0; start < int(labels.size()); ++start) {
    if (c.comp_of[std::size_t(start)] >= 0) continue;
    const int id = int(c.label.size());
    const int lab = labels[std::size_t(start)];
    int count = 0;
    stack.assign(1, start);
    c.comp_of[std::size_t(start)] = id;
    while (!stack.empty()) {
      const int p = stack.back();
      stack.pop_back();
      ++count;
      const int x = p % width, y = p / width;
      const std::array<std::pair<int, int>, 4> nbrs{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
      for (auto [nx, ny] : nbrs) {
        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
        const int q = ny * width + nx;
        if (c.comp_of[std::size_t(q)] < 0 && labels[std::size_t(q)] == lab) {
          c.comp_of[std::size_t(q)] = id;
          stack.push_back(q);
        }
      }
    }
    c.label.push_back(lab);
    c.size.push_back(count);
  }
  return c;
}

// Relabels so ids follow raster order of first appearance.
std::vector<int> compact_labels(const std::vector<int>& labels, int& count) {
  std::vector<int> remap;
  std::vector<int> out(labels.size());
  count = 0;
  int max_label = 0;
  for (int l : labels) max_label = std::max(max_label, l);
  remap.assign(std::size_t(max_label) + 1, -1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    int& r = remap[std::size_t(labels[i])];
    if (r < 0) r = count++;
    out[i] = r;
  }
  return out;
}

int find_root(std::vector<int>& parent, int a) {
  while (parent[std::size_t(a)] != a) {
    parent[std::size_t(a)] = parent[std::size_t(parent[std::size_t(a)])];
    a = parent[std::size_t(a)];
  }
  return a;
}

// Every label keeps its largest component; other fragments join the
// adjacent group with the longest shared boundary (ties: lowest component).
std::vector<int> enforce_connectivity(int width, int height, const std::vector<int>& labels) {
  const Components comps = connected_components(width, height, labels);
  const int n_comp = int(comps.label.size());

  int max_label = 0;
  for (int l : comps.label) max_label = std::max(max_label, l);
  std::vector<int> main_comp(std::size_t(max_label) + 1, -1);
  for (int c = 0; c < n_comp; ++c) {
    int& m = main_comp[std::size_t(comps.label[std::size_t(c)])];
    if (m < 0 || comps.size[std::size_t(c)] > comps.size[std::size_t(m)]) m = c;
  }

  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_comp));
  for (int p = 0; p < int(labels.size()); ++p) members[std::size_t(comps.comp_of[std::size_t(p)])].push_back(p);

  std::vector<int> parent(static_cast<std::size_t>(n_comp));
  std::iota(parent.begin(), parent.end(), 0);
  std::vector<int> shared(static_cast<std::size_t>(n_comp), 0);
  std::vector<int> touched;

  for (int c = 0; c < n_comp; ++c) {
    if (main_comp[std::size_t(comps.label[std::size_t(c)])] == c) continue;
    const int root = find_root(parent, c);
    touched.clear();
    for (int p : members[std::size_t(root)]) {
      const int x = p % width, y = p / width;
      const std::array<std::pair<int, int>, 4> nbrs{{{x - 1, y}, {x + 1, y}, {x, y - 1}, {x, y + 1}}};
      for (auto [nx, ny] : nbrs) {
        if (nx < 0 || ny < 0 || nx >= width || ny >= height) continue;
        const int other = find_root(parent, comps.comp_of[std::size_t(ny * width + nx)]);
        if (other == root) continue;
        if (shared[std::size_t(other)]++ == 0) touched.push_back(other);
      }
    }
    int target = -1;
    for (int t : touched) {
      if (target < 0 || shared[std::size_t(t)] > shared[std::size_t(target)] ||
          (shared[std::size_t(t)] == shared[std::size_t(target)] && t < target)) {
        target = t;
      }
    }
    for (int t : touched) shared[std::size_t(t)] = 0;
    if (target < 0) continue;  // fragment covers the whole image
    parent[std::size_t(root)] = target;
    auto& dst = members[std::size_t(target)];
    auto& src = members[std::size_t(root)];
    dst.insert(dst.end(), src.begin(), src.end());
    src.clear();
    src.shrink_to_fit();
  }

  std::vector<int> out(labels.size());
  for (std::size_t p = 0; p < labels.size(); ++p) out[p] = find_root(parent, comps.comp_of[p]);
  return out;
}

double gradient_at(const Image& img, int x, int y) {
  const int xl = std::max(x - 1, 0), xr = std::min(x + 1, img.width - 1);
  const int yu = std::max(y - 1, 0), yd = std::min(y + 1, img.height - 1);
  double g = 0.0;
  for (int ch = 0; ch < 3; ++ch) {
    const double dx = img.at(xr, y, ch) - img.at(xl, y, ch);
    const double dy = img.at(x, yd, ch) - img.at(x, yu, ch);
    g += dx * dx + dy * dy;
  }
  return g;
}

}  // namespace

Partition Partition::from_labels(int width, int height, std::vector<int> labels) {
  if (width < 1 || height < 1 || labels.size() != std::size_t(width) * height) {
    throw std::invalid_argument("partition: label count does not match image size");
  }
  Partition p;
  p.width = width;
  p.height = height;
  int max_label = -1;
  for (int l : labels) {
    if (l < 0) throw std::invalid_argument("partition: negative region id");
    max_label = std::max(max_label, l);
  }
  p.region_count = max_label + 1;
  p.pixels_of.assign(std::size_t(p.region_count), {});
  for (int i = 0; i < int(labels.size()); ++i) p.pixels_of[std::size_t(labels[std::size_t(i)])].push_back(i);
  p.region_of = std::move(labels);
  return p;
}

void Partition::validate() const {
  if (region_of.size() != std::size_t(width) * height) throw std::logic_error("partition: size mismatch");
  if (pixels_of.size() != std::size_t(region_count)) throw std::logic_error("partition: region count mismatch");
  std::size_t total = 0;
  for (int r = 0; r < region_count; ++r) {
    const auto& px = pixels_of[std::size_t(r)];
    if (px.empty()) throw std::logic_error("partition: empty region " + std::to_string(r));
    total += px.size();
    for (int p : px) {
      if (region_of[std::size_t(p)] != r) throw std::logic_error("partition: pixels_of is not the inverse of region_of");
    }
  }
  if (total != region_of.size()) throw std::logic_error("partition: regions do not cover the image");
  const Components comps = connected_components(width, height, region_of);
  if (int(comps.label.size()) != region_count) throw std::logic_error("partition: disconnected region");
}

bool AdjacencyGraph::adjacent(int a, int b) const {
  const auto& n = neighbors.at(std::size_t(a));
  return std::binary_search(n.begin(), n.end(), b);
}

Partition grid_partition(const Image& image, int cell) {
  if (cell < 1) throw ConfigError("grid_partition: cell must be >= 1");
  const int cols = (image.width + cell - 1) / cell;
  std::vector<int> labels(image.pixel_count());
  for (int y = 0; y < image.height; ++y) {
    for (int x = 0; x < image.width; ++x) {
      labels[std::size_t(y) * image.width + x] = (y / cell) * cols + x / cell;
    }
  }
  return Partition::from_labels(image.width, image.height, std::move(labels));
}

Partition slic_partition(const Image& image, const SlicParams& params) {
  if (params.target_size < 2) throw ConfigError("slic: target_size must be >= 2");
  if (params.iterations < 1) throw ConfigError("slic: iterations must be >= 1");
  const int W = image.width, H = image.height, S = params.target_size;
  if (std::max(W, H) < S) {
    return Partition::from_labels(W, H, std::vector<int>(image.pixel_count(), 0));
  }

  struct Center {
    double c[3];
    double x, y;
  };
  const int nx = std::max(1, int(std::lround(double(W) / S)));
  const int ny = std::max(1, int(std::lround(double(H) / S)));
  std::vector<Center> centers;
  centers.reserve(std::size_t(nx) * ny);
  for (int j = 0; j < ny; ++j) {
    for (int i = 0; i < nx; ++i) {
      int cx = std::min(W - 1, int((i + 0.5) * W / nx));
      int cy = std::min(H - 1, int((j + 0.5) * H / ny));
      int bx = cx, by = cy;
      double best = std::numeric_limits<double>::infinity();
      for (int dy = -1; dy <= 1; ++dy) {
        for (int dx = -1; dx <= 1; ++dx) {
          const int x = cx + dx, y = cy + dy;
          if (x < 0 || y < 0 || x >= W || y >= H) continue;
          const double g = gradient_at(image, x, y);
          if (g < best) {
            best = g;
            bx = x;
            by = y;
          }
        }
      }
      Center c{{image.at(bx, by, 0) * kColorScale, image.at(bx, by, 1) * kColorScale,
                image.at(bx, by, 2) * kColorScale},
               double(bx), double(by)};
      centers.push_back(c);
    }
  }

  std::vector<int> labels(image.pixel_count(), -1);
  std::vector<double> dist(image.pixel_count());
  const double spatial_weight = params.compactness / S;
  for (int iter = 0; iter < params.iterations; ++iter) {
    std::fill(dist.begin(), dist.end(), std::numeric_limits<double>::infinity());
    for (int k = 0; k < int(centers.size()); ++k) {
      const Center& c = centers[std::size_t(k)];
      const int x0 = std::max(0, int(c.x) - S), x1 = std::min(W - 1, int(c.x) + S);
      const int y0 = std::max(0, int(c.y) - S), y1 = std::min(H - 1, int(c.y) + S);
      for (int y = y0; y <= y1; ++y) {
        for (int x = x0; x <= x1; ++x) {
          const std::size_t p = std::size_t(y) * W + x;
          double dc = 0.0;
          for (int ch = 0; ch < 3; ++ch) {
            const double d = image.data[p * 3 + std::size_t(ch)] * kColorScale - c.c[ch];
            dc += d * d;
          }
          const double ds = std::hypot(x - c.x, y - c.y);
          const double D = std::sqrt(dc) + spatial_weight * ds;
          if (D < dist[p]) {
            dist[p] = D;
            labels[p] = k;
          }
        }
      }
    }
    // Pixels outside every search window go to the spatially nearest center.
    for (std::size_t p = 0; p < labels.size(); ++p) {
      if (labels[p] >= 0) continue;
      const double x = double(p % std::size_t(W)), y = double(p / std::size_t(W));
      double best = std::numeric_limits<double>::infinity();
      for (int k = 0; k < int(centers.size()); ++k) {
        const double d = std::hypot(x - centers[std::size_t(k)].x, y - centers[std::size_t(k)].y);
        if (d < best) {
          best = d;
          labels[p] = k;
        }
      }
    }
    std::vector<std::array<double, 6>> acc(centers.size(), std::array<double, 6>{});
    std::vector<int> count(centers.size(), 0);
    for (std::size_t p = 0; p < labels.size(); ++p) {
      auto& a = acc[std::size_t(labels[p])];
      for (int ch = 0; ch < 3; ++ch) a[std::size_t(ch)] += image.data[p * 3 + std::size_t(ch)] * kColorScale;
      a[3] += double(p % std::size_t(W));
      a[4] += double(p / std::size_t(W));
      ++count[std::size_t(labels[p])];
    }
    for (std::size_t k = 0; k < centers.size(); ++k) {
      if (count[k] == 0) continue;
      const double n = count[k];
      for (int ch = 0; ch < 3; ++ch) centers[k].c[ch] = acc[k][std::size_t(ch)] / n;
      centers[k].x = acc[k][3] / n;
      centers[k].y = acc[k][4] / n;
    }
  }

  int count = 0;
  std::vector<int> compact = compact_labels(enforce_connectivity(W, H, labels), count);
  return Partition::from_labels(W, H, std::move(compact));
}

AdjacencyGraph region_adjacency(const Partition& partition) {
  AdjacencyGraph g;
  g.neighbors.assign(std::size_t(partition.region_count), {});
  const int W = partition.width, H = partition.height;
  auto link = [&](int a, int b) {
    if (a == b) return;
    g.neighbors[std::size_t(a)].push_back(b);
    g.neighbors[std::size_t(b)].push_back(a);
  };
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const int r = partition.region_of[std::size_t(y) * W + x];
      if (x + 1 < W) link(r, partition.region_of[std::size_t(y) * W + x + 1]);
      if (y + 1 < H) link(r, partition.region_of[std::size_t(y + 1) * W + x]);
    }
  }
  for (auto& n : g.neighbors) {
    std::sort(n.begin(), n.end());
    n.erase(std::unique(n.begin(), n.end()), n.end());
  }
  return g;
}

void write_partition_pgm(const Partition& partition, const std::filesystem::path& path) {
  if (partition.region_count > 65536) throw std::out_of_range("too many regions for 16-bit PGM");
  dataio::GrayImage g{partition.width, partition.height, 65535, partition.region_of};
  dataio::write_pgm(g, path);
}

Partition read_partition_pgm(const std::filesystem::path& path) {
  dataio::GrayImage g = dataio::read_pgm(path);
  return Partition::from_labels(g.width, g.height, std::move(g.data));
}

void write_adjacency_jsonl(const AdjacencyGraph& graph, const std::filesystem::path& path) {
  dataio::JsonlLog log(path);
  for (std::size_t r = 0; r < graph.neighbors.size(); ++r) {
    log.write({{"region", r}, {"neighbors", graph.neighbors[r]}});
  }
}

}  // namespace mulseg::superpixel
