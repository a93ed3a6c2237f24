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

// Command-line front end: synthetic data generation, partitioning, active
// learning runs, evaluation and the component ablation grid.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "mulseg/dataio.hpp"
#include "mulseg/evalrun.hpp"
#include "mulseg/superpixel.hpp"

namespace fs = std::filesystem;
using namespace mulseg;

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitRuntime = 3;

struct RunOptions {
  std::string config_file;
  std::vector<std::string> overrides;
  std::string out_dir = "out";
  // Flags mirroring config keys; empty means "not given".
  std::string rounds, budget, mode, sampler, nu, seed, seeds;
};

void add_run_options(CLI::App* cmd, RunOptions& o) {
  cmd->add_option("--config", o.config_file, "key = value config file");
  cmd->add_option("--set", o.overrides, "extra key=value overrides (repeatable)");
  cmd->add_option("--out", o.out_dir, "output directory");
  cmd->add_option("--rounds", o.rounds, "active-learning rounds");
  cmd->add_option("--budget", o.budget, "clicks per round");
  cmd->add_option("--mode", o.mode, "labeling mode: dominant|multiclass");
  cmd->add_option("--sampler", o.sampler, "random|margin|bvsb|classbal|pixbal");
  cmd->add_option("--nu", o.nu, "class-balancing strength");
  cmd->add_option("--seed", o.seed, "master seed");
  cmd->add_option("--seeds", o.seeds, "comma-separated seed list");
}

evalrun::ExperimentConfig build_config(const RunOptions& o) {
  evalrun::ExperimentConfig config;
  if (!o.config_file.empty()) config.load_file(o.config_file);
  const std::pair<const char*, const std::string*> flags[] = {
      {"rounds", &o.rounds}, {"budget", &o.budget}, {"mode", &o.mode},  {"sampler", &o.sampler},
      {"nu", &o.nu},         {"seed", &o.seed},     {"seeds", &o.seeds}};
  for (const auto& [key, value] : flags) {
    if (!value->empty()) config.set(key, *value);
  }
  for (const std::string& kv : o.overrides) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos) throw ConfigError("--set expects key=value, got " + kv);
    config.set(kv.substr(0, eq), kv.substr(eq + 1));
  }
  config.validate();
  return config;
}

void print_reports(const std::vector<RoundReport>& reports) {
  for (const RoundReport& r : reports) {
    std::printf("round %d  clicks %lld  mIoU %.4f\n", r.round, static_cast<long long>(r.cum_clicks), r.miou);
  }
}

int cmd_gen(const std::string& out, int count, std::uint64_t seed, const dataio::SyntheticSpec& spec) {
  spec.validate();
  std::vector<dataio::Sample> samples;
  for (int k = 0; k < count; ++k) {
    auto [image, mask] = dataio::generate_synthetic(spec, seed + std::uint64_t(k));
    char name[32];
    std::snprintf(name, sizeof name, "img_%04d", k);
    samples.push_back({name, std::move(image), std::move(mask)});
  }
  dataio::save_dataset(samples, out);
  std::printf("wrote %d images to %s\n", count, out.c_str());
  return 0;
}

int cmd_partition(const std::string& image_path, const std::string& out, const std::string& adjacency,
                  const RunOptions& o) {
  const evalrun::ExperimentConfig config = build_config(o);
  const Image image = dataio::read_ppm(image_path);
  const superpixel::Partition p = evalrun::make_partition(image, config);
  superpixel::write_partition_pgm(p, out);
  if (!adjacency.empty()) superpixel::write_adjacency_jsonl(superpixel::region_adjacency(p), adjacency);
  std::printf("%d regions\n", p.region_count);
  return 0;
}

int cmd_run(const RunOptions& o) {
  const evalrun::ExperimentConfig config = build_config(o);
  const evalrun::ExperimentResult result = evalrun::run_experiment(config, o.out_dir);
  for (const auto& trial : result.trials) {
    std::printf("seed %llu\n", static_cast<unsigned long long>(trial.seed));
    print_reports(trial.reports);
  }
  if (result.trials.size() > 1) {
    std::printf("mean\n");
    print_reports(result.mean);
  }
  return 0;
}

int cmd_eval(const std::string& pred_path, const std::string& gt_path, int classes) {
  if (classes <= 0) classes = dataio::find_manifest(fs::path(gt_path).parent_path());
  const Mask pred = dataio::read_mask_pgm(pred_path, classes);
  const Mask gt = dataio::read_mask_pgm(gt_path, classes);
  const evalrun::IouResult r = evalrun::miou(pred, gt);
  std::printf("miou %.6f\n", r.miou);
  for (std::size_t c = 0; c < r.per_class.size(); ++c) std::printf("class %zu %.6f\n", c, r.per_class[c]);
  return 0;
}

int cmd_ablate(const RunOptions& o) {
  const evalrun::ExperimentConfig base = build_config(o);
  const evalrun::Benchmark bench = evalrun::load_benchmark(base);
  fs::create_directories(o.out_dir);
  std::ofstream table(fs::path(o.out_dir) / "ablation.csv", std::ios::trunc);
  table << "row,use_mp,use_pp,localize,expand";
  for (int r = 1; r <= base.rounds; ++r) table << ",round_" << r;
  table << ",avg\n";
  for (const auto& row : evalrun::ablation_rows()) {
    const auto result =
        evalrun::run_experiment(evalrun::with_row(base, row), bench, fs::path(o.out_dir) / ("row_" + row.name));
    double sum = 0.0;
    table << row.name << ',' << row.use_mp << ',' << row.use_pp << ',' << row.localize << ',' << row.expand;
    char buf[32];
    for (const RoundReport& r : result.mean) {
      std::snprintf(buf, sizeof buf, ",%.6f", r.miou);
      table << buf;
      sum += r.miou;
    }
    std::snprintf(buf, sizeof buf, ",%.6f\n", sum / double(result.mean.size()));
    table << buf;
    std::printf("(%s) avg mIoU %.4f\n", row.name.c_str(), sum / double(result.mean.size()));
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Active learning for semantic segmentation with multi-class region labels"};
  app.require_subcommand(1);

  auto* gen = app.add_subcommand("gen", "generate a synthetic dataset");
  std::string gen_out = "data";
  int gen_count = 10;
  std::uint64_t gen_seed = 0;
  dataio::SyntheticSpec spec;
  gen->add_option("--out", gen_out, "dataset directory");
  gen->add_option("--count", gen_count, "number of images");
  gen->add_option("--seed", gen_seed, "first image seed");
  gen->add_option("--width", spec.width);
  gen->add_option("--height", spec.height);
  gen->add_option("--classes", spec.class_count);
  gen->add_option("--sites", spec.site_count);
  gen->add_option("--noise", spec.noise_std);
  gen->add_option("--skew", spec.class_frequency_skew);
  gen->add_option("--cell-color-std", spec.cell_color_std);

  RunOptions part_opts;
  auto* part = app.add_subcommand("partition", "partition one PPM image into regions");
  std::string part_image, part_out = "regions.pgm", part_adj;
  part->add_option("--image", part_image, "input PPM")->required();
  part->add_option("--out", part_out, "16-bit PGM of region ids");
  part->add_option("--adjacency", part_adj, "JSON-lines adjacency output");
  part->add_option("--config", part_opts.config_file, "key = value config file");
  part->add_option("--set", part_opts.overrides, "key=value overrides (partitioner, region_size, ...)");

  RunOptions run_opts;
  auto* run = app.add_subcommand("run", "run the active-learning protocol");
  add_run_options(run, run_opts);

  auto* eval = app.add_subcommand("eval", "mIoU between a predicted and a ground-truth mask");
  std::string pred_path, gt_path;
  int eval_classes = 0;
  eval->add_option("--pred", pred_path)->required();
  eval->add_option("--gt", gt_path)->required();
  eval->add_option("--classes", eval_classes, "class count (default: manifest next to --gt)");

  RunOptions ablate_opts;
  auto* ablate = app.add_subcommand("ablate", "run the component ablation grid");
  add_run_options(ablate, ablate_opts);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (gen->parsed()) return cmd_gen(gen_out, gen_count, gen_seed, spec);
    if (part->parsed()) return cmd_partition(part_image, part_out, part_adj, part_opts);
    if (run->parsed()) return cmd_run(run_opts);
    if (eval->parsed()) return cmd_eval(pred_path, gt_path, eval_classes);
    if (ablate->parsed()) return cmd_ablate(ablate_opts);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
  return 0;
}
