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
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mulseg/acquisition.hpp"
#include "mulseg/dataio.hpp"
#include "mulseg/model.hpp"
#include "mulseg/oracle.hpp"
#include "mulseg/pseudolabel.hpp"
#include "mulseg/report.hpp"
#include "mulseg/superpixel.hpp"
#include "mulseg/training.hpp"

namespace mulseg::evalrun {

namespace fs = std::filesystem;

struct IouResult {
  double miou = 0.0;
  std::vector<double> per_class;  // NaN where the class is absent from pred and gt
};

// Accumulates intersections/unions over several images. Pixels whose
// ground truth is kUndef are ignored; kUndef never forms a class.
class IouAccumulator {
 public:
  explicit IouAccumulator(int class_count);
  void add(const Mask& pred, const Mask& gt);
  // Throws std::runtime_error("no evaluable class") when every class is absent.
  IouResult result() const;

 private:
  int class_count_;
  std::vector<std::int64_t> inter_;
  std::vector<std::int64_t> uni_;
};

IouResult miou(const Mask& pred, const Mask& gt);

enum class Partitioner { kSlic, kGrid };

struct ExperimentConfig {
  // Protocol
  int rounds = 5;
  std::int64_t budget_clicks = 600;
  oracle::LabelMode mode = oracle::LabelMode::kMultiClass;
  acquisition::Sampler sampler = acquisition::Sampler::kPixBal;
  double nu = 6.0;
  std::int64_t distribution_sample = 0;
  std::uint64_t seed = 0;
  std::vector<std::uint64_t> seeds;  // when non-empty, overrides `seed`

  // Losses and pseudo labels
  double lambda_ce = 16.0;
  double lambda_mp = 8.0;
  bool use_mp = true;
  bool use_pp = true;
  bool localize = true;
  bool expand = true;

  // Model
  double tau = 0.1;
  int hidden = 64;
  int embed = 32;

  // Regions
  Partitioner partitioner = Partitioner::kSlic;
  int region_size = 16;
  double compactness = 10.0;
  int slic_iterations = 10;

  // Optimization
  double stage1_lr = 2e-3;
  double stage2_lr = 4e-3;
  int stage1_iters = 800;
  int stage2_iters = 800;
  int regions_per_batch = 32;
  int pixels_per_region = 64;
  int stage2_batch = 2048;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-5;
  int log_every = 0;

  // Data: directories (each with images/, masks/, manifest.txt) or synthetic.
  std::string train_dir;
  std::string val_dir;
  dataio::SyntheticSpec synthetic;
  int train_count = 50;
  int val_count = 20;
  std::uint64_t data_seed = 0;

  // Parses `key = value`; throws ConfigError on unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  void load_file(const fs::path& path);
  void validate() const;
  std::vector<std::uint64_t> seed_list() const;

  training::Stage1Config stage1() const;
  training::Stage2Config stage2() const;
};

// Images with everything the protocol needs precomputed.
struct Dataset {
  int class_count = 0;
  std::vector<std::string> names;
  std::vector<Mask> masks;
  std::vector<model::FeatureMap> features;
  std::vector<superpixel::Partition> partitions;  // empty for evaluation-only sets
  std::vector<superpixel::AdjacencyGraph> adjacency;
};

struct Benchmark {
  Dataset train;
  Dataset val;
};

superpixel::Partition make_partition(const Image& image, const ExperimentConfig& config);
Dataset prepare_dataset(std::span<const dataio::Sample> samples, const ExperimentConfig& config,
                        bool with_regions);
// Synthetic train/val splits use disjoint seed ranges.
std::vector<dataio::Sample> synthetic_samples(const ExperimentConfig& config, bool validation);
Benchmark load_benchmark(const ExperimentConfig& config);

Mask predict_mask(const model::FeatureMap& features, const model::ModelParams& params, int class_count);
IouResult evaluate(const Dataset& data, const model::ModelParams& params);

// Mutable protocol state for one trial.
struct ExperimentState {
  oracle::LabeledPool pool;
  std::optional<model::ModelParams> params;
  int round = 0;
  std::int64_t cum_clicks = 0;
  oracle::Oracle oracle;

  explicit ExperimentState(const Dataset& train) : oracle(train.masks, train.partitions) {}
};

// Score, select and label, reinitialize, stage 1, pseudo labels, stage 2,
// evaluate.
RoundReport run_round(ExperimentState& state, const Benchmark& bench, const ExperimentConfig& config,
                      std::uint64_t seed, dataio::JsonlLog* log = nullptr);

struct TrialResult {
  std::uint64_t seed = 0;
  std::vector<RoundReport> reports;
  oracle::LabeledPool pool;
  model::ModelParams params;
  std::int64_t oracle_clicks = 0;
};

TrialResult run_trial(const ExperimentConfig& config, const Benchmark& bench, std::uint64_t seed,
                      const fs::path& out_dir = {});

struct ExperimentResult {
  std::vector<TrialResult> trials;
  std::vector<RoundReport> mean;
};

// One trial per seed. With an output directory: results_seed<k>.csv,
// checkpoint_seed<k>.bin, pool_seed<k>.jsonl, log_seed<k>.jsonl, and
// results_mean.csv when more than one seed runs.
ExperimentResult run_experiment(const ExperimentConfig& config, const Benchmark& bench, const fs::path& out_dir = {});
ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir = {});

struct AblationRow {
  std::string name;
  bool use_mp, use_pp, localize, expand;
};
// Component grid: (a) full, (b) no expansion, (c) stage 1 only,
// (d) stage 1 without prototypical-pixel loss, (e) stage 1 without
// merged-positive loss.
std::vector<AblationRow> ablation_rows();
ExperimentConfig with_row(ExperimentConfig config, const AblationRow& row);

}  // namespace mulseg::evalrun
