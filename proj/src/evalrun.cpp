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

#include "mulseg/evalrun.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "mulseg/rng.hpp"

namespace mulseg::evalrun {
namespace {

std::string trim(std::string s) {
  auto not_space = [](unsigned char c) { return !std::isspace(c); };
  s.erase(s.begin(), std::find_if(s.begin(), s.end(), not_space));
  s.erase(std::find_if(s.rbegin(), s.rend(), not_space).base(), s.end());
  return s;
}

template <typename T>
T parse_number(const std::string& key, const std::string& value) {
  T out{};
  const char* end = value.data() + value.size();
  auto [ptr, ec] = std::from_chars(value.data(), end, out);
  if (ec != std::errc() || ptr != end) throw ConfigError("bad value for " + key + ": '" + value + "'");
  return out;
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw ConfigError("bad boolean for " + key + ": '" + value + "'");
}

std::vector<std::uint64_t> parse_seed_list(const std::string& value) {
  std::vector<std::uint64_t> seeds;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) seeds.push_back(parse_number<std::uint64_t>("seeds", item));
  }
  return seeds;
}

nlohmann::json report_json(const RoundReport& r) {
  nlohmann::json iou = nlohmann::json::array();
  for (double v : r.per_class_iou) iou.push_back(std::isnan(v) ? nlohmann::json(nullptr) : nlohmann::json(v));
  return {{"round", r.round},         {"clicks", r.clicks},         {"cum_clicks", r.cum_clicks},
          {"overshoot", r.overshoot}, {"miou", r.miou},             {"per_class_iou", iou},
          {"stage1_loss", r.stage1_loss}, {"stage2_loss", r.stage2_loss},
          {"localized_pixels", r.localized_pixels}, {"expanded_pixels", r.expanded_pixels}};
}

}  // namespace

IouAccumulator::IouAccumulator(int class_count)
    : class_count_(class_count), inter_(std::size_t(class_count), 0), uni_(std::size_t(class_count), 0) {}

void IouAccumulator::add(const Mask& pred, const Mask& gt) {
  if (pred.width != gt.width || pred.height != gt.height) throw std::invalid_argument("miou: shape mismatch");
  for (std::size_t i = 0; i < gt.data.size(); ++i) {
    const ClassId g = gt.data[i];
    if (g == kUndef) continue;
    const ClassId p = pred.data[i];
    if (p == g) {
      ++inter_[g];
      ++uni_[g];
    } else {
      ++uni_[g];
      if (p < class_count_) ++uni_[p];
    }
  }
}

IouResult IouAccumulator::result() const {
  IouResult r;
  double sum = 0.0;
  int n = 0;
  for (int c = 0; c < class_count_; ++c) {
    if (uni_[std::size_t(c)] == 0) {
      r.per_class.push_back(NAN);
      continue;
    }
    const double iou = double(inter_[std::size_t(c)]) / double(uni_[std::size_t(c)]);
    r.per_class.push_back(iou);
    sum += iou;
    ++n;
  }
  if (n == 0) throw std::runtime_error("no evaluable class");
  r.miou = sum / n;
  return r;
}

IouResult miou(const Mask& pred, const Mask& gt) {
  IouAccumulator acc(gt.class_count);
  acc.add(pred, gt);
  return acc.result();
}

void ExperimentConfig::set(const std::string& raw_key, const std::string& raw_value) {
  const std::string key = trim(raw_key), value = trim(raw_value);
  auto i = [&] { return parse_number<int>(key, value); };
  auto i64 = [&] { return parse_number<std::int64_t>(key, value); };
  auto u64 = [&] { return parse_number<std::uint64_t>(key, value); };
  auto d = [&] { return parse_number<double>(key, value); };
  auto b = [&] { return parse_bool(key, value); };

  if (key == "rounds") rounds = i();
  else if (key == "budget") budget_clicks = i64();
  else if (key == "mode") mode = oracle::parse_label_mode(value);
  else if (key == "sampler") sampler = acquisition::parse_sampler(value);
  else if (key == "nu") nu = d();
  else if (key == "distribution_sample") distribution_sample = i64();
  else if (key == "seed") seed = u64();
  else if (key == "seeds") seeds = parse_seed_list(value);
  else if (key == "lambda_ce") lambda_ce = d();
  else if (key == "lambda_mp") lambda_mp = d();
  else if (key == "use_mp") use_mp = b();
  else if (key == "use_pp") use_pp = b();
  else if (key == "localize") localize = b();
  else if (key == "expand") expand = b();
  else if (key == "tau") tau = d();
  else if (key == "hidden") hidden = i();
  else if (key == "embed") embed = i();
  else if (key == "partitioner") {
    if (value == "slic") partitioner = Partitioner::kSlic;
    else if (value == "grid") partitioner = Partitioner::kGrid;
    else throw ConfigError("unknown partitioner: " + value);
  } else if (key == "region_size") region_size = i();
  else if (key == "compactness") compactness = d();
  else if (key == "slic_iterations") slic_iterations = i();
  else if (key == "stage1_lr") stage1_lr = d();
  else if (key == "stage2_lr") stage2_lr = d();
  else if (key == "stage1_iters") stage1_iters = i();
  else if (key == "stage2_iters") stage2_iters = i();
  else if (key == "regions_per_batch") regions_per_batch = i();
  else if (key == "pixels_per_region") pixels_per_region = i();
  else if (key == "stage2_batch") stage2_batch = i();
  else if (key == "beta1") beta1 = d();
  else if (key == "beta2") beta2 = d();
  else if (key == "adam_eps") adam_eps = d();
  else if (key == "weight_decay") weight_decay = d();
  else if (key == "log_every") log_every = i();
  else if (key == "train_dir") train_dir = value;
  else if (key == "val_dir") val_dir = value;
  else if (key == "width") synthetic.width = i();
  else if (key == "height") synthetic.height = i();
  else if (key == "classes") synthetic.class_count = i();
  else if (key == "sites") synthetic.site_count = i();
  else if (key == "noise") synthetic.noise_std = d();
  else if (key == "skew") synthetic.class_frequency_skew = d();
  else if (key == "cell_color_std") synthetic.cell_color_std = d();
  else if (key == "train_count") train_count = i();
  else if (key == "val_count") val_count = i();
  else if (key == "data_seed") data_seed = u64();
  else throw ConfigError("unknown config key: " + key);
}

void ExperimentConfig::load_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    if (trim(line).empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": expected key = value");
    }
    set(line.substr(0, eq), line.substr(eq + 1));
  }
}

void ExperimentConfig::validate() const {
  auto require = [](bool ok, const char* what) {
    if (!ok) throw ConfigError(what);
  };
  require(rounds >= 1, "rounds must be >= 1");
  require(budget_clicks >= 1, "budget must be >= 1");
  require(nu >= 0.0, "nu must be >= 0");
  require(distribution_sample >= 0, "distribution_sample must be >= 0");
  require(lambda_ce > 0.0 && lambda_mp > 0.0, "loss weights must be positive");
  require(tau > 0.0, "tau must be positive");
  require(hidden >= 1 && embed >= 1, "model dimensions must be positive");
  require(region_size >= 2, "region_size must be >= 2");
  require(compactness >= 0.0, "compactness must be >= 0");
  require(slic_iterations >= 1, "slic_iterations must be >= 1");
  require(stage1_lr > 0.0 && stage2_lr > 0.0, "learning rates must be positive");
  require(stage1_iters >= 0 && stage2_iters >= 0, "iteration counts must be >= 0");
  require(regions_per_batch >= 1 && pixels_per_region >= 1 && stage2_batch >= 1, "batch sizes must be positive");
  require(beta1 >= 0.0 && beta1 < 1.0 && beta2 >= 0.0 && beta2 < 1.0, "AdamW betas must lie in [0, 1)");
  require(adam_eps >= 0.0 && weight_decay >= 0.0, "AdamW eps and weight decay must be >= 0");
  require(train_dir.empty() == val_dir.empty(), "train_dir and val_dir must be given together");
  if (train_dir.empty()) {
    synthetic.validate();
    require(train_count >= 1 && val_count >= 1, "synthetic split sizes must be positive");
  }
}

std::vector<std::uint64_t> ExperimentConfig::seed_list() const {
  return seeds.empty() ? std::vector<std::uint64_t>{seed} : seeds;
}

training::Stage1Config ExperimentConfig::stage1() const {
  training::Stage1Config c;
  c.iterations = stage1_iters;
  c.regions_per_batch = regions_per_batch;
  c.pixels_per_region = pixels_per_region;
  c.adam = {stage1_lr, beta1, beta2, adam_eps, weight_decay};
  c.weights = {lambda_ce, lambda_mp, use_mp, use_pp};
  c.log_every = log_every;
  return c;
}

training::Stage2Config ExperimentConfig::stage2() const {
  training::Stage2Config c;
  c.iterations = stage2_iters;
  c.pixels_per_batch = stage2_batch;
  c.adam = {stage2_lr, beta1, beta2, adam_eps, weight_decay};
  c.log_every = log_every;
  return c;
}

superpixel::Partition make_partition(const Image& image, const ExperimentConfig& config) {
  if (config.partitioner == Partitioner::kGrid) return superpixel::grid_partition(image, config.region_size);
  superpixel::SlicParams p;
  p.target_size = config.region_size;
  p.compactness = config.compactness;
  p.iterations = config.slic_iterations;
  return superpixel::slic_partition(image, p);
}

Dataset prepare_dataset(std::span<const dataio::Sample> samples, const ExperimentConfig& config, bool with_regions) {
  Dataset d;
  for (const dataio::Sample& s : samples) {
    if (d.class_count == 0) d.class_count = s.mask.class_count;
    if (s.mask.class_count != d.class_count) throw DataError("class count differs across samples");
    d.names.push_back(s.name);
    d.masks.push_back(s.mask);
    d.features.push_back(model::featurize(s.image));
    if (with_regions) {
      d.partitions.push_back(make_partition(s.image, config));
      d.adjacency.push_back(superpixel::region_adjacency(d.partitions.back()));
    }
  }
  return d;
}

std::vector<dataio::Sample> synthetic_samples(const ExperimentConfig& config, bool validation) {
  const int count = validation ? config.val_count : config.train_count;
  const std::uint64_t base = config.data_seed * 10'000'000ULL + (validation ? 1'000'000ULL : 0ULL);
  std::vector<dataio::Sample> out;
  out.reserve(std::size_t(count));
  for (int k = 0; k < count; ++k) {
    auto [image, mask] = dataio::generate_synthetic(config.synthetic, base + std::uint64_t(k));
    char name[32];
    std::snprintf(name, sizeof name, "%s_%04d", validation ? "val" : "train", k);
    out.push_back({name, std::move(image), std::move(mask)});
  }
  return out;
}

Benchmark load_benchmark(const ExperimentConfig& config) {
  config.validate();
  Benchmark b;
  if (!config.train_dir.empty()) {
    const fs::path train(config.train_dir), val(config.val_dir);
    const auto train_samples = dataio::load_dataset(train / "images", train / "masks");
    const auto val_samples = dataio::load_dataset(val / "images", val / "masks");
    if (train_samples.empty() || val_samples.empty()) throw DataError("empty dataset");
    b.train = prepare_dataset(train_samples, config, true);
    b.val = prepare_dataset(val_samples, config, false);
  } else {
    b.train = prepare_dataset(synthetic_samples(config, false), config, true);
    b.val = prepare_dataset(synthetic_samples(config, true), config, false);
  }
  if (b.train.class_count != b.val.class_count) throw DataError("train/val class counts differ");
  return b;
}

Mask predict_mask(const model::FeatureMap& features, const model::ModelParams& params, int class_count) {
  const std::vector<int> cls =
      model::argmax_classes(model::predict_probs(model::embed(features.values, params), params));
  Mask m(features.width, features.height, class_count);
  for (std::size_t i = 0; i < cls.size(); ++i) m.data[i] = class_id(cls[i], class_count);
  return m;
}

IouResult evaluate(const Dataset& data, const model::ModelParams& params) {
  IouAccumulator acc(data.class_count);
  for (std::size_t i = 0; i < data.features.size(); ++i) {
    acc.add(predict_mask(data.features[i], params, data.class_count), data.masks[i]);
  }
  return acc.result();
}

RoundReport run_round(ExperimentState& state, const Benchmark& bench, const ExperimentConfig& config,
                      std::uint64_t seed, dataio::JsonlLog* log) {
  const Dataset& train = bench.train;
  const int C = train.class_count;
  const int round = ++state.round;
  auto emit = [&](nlohmann::json event) {
    if (log == nullptr) return;
    event["round"] = round;
    log->write(event);
  };
  emit({{"event", "round_start"}});

  // 1-2. Score with the previous model (random at round 1), then query.
  acquisition::ScoringInputs scoring;
  scoring.sampler = round == 1 ? acquisition::Sampler::kRandom : config.sampler;
  scoring.nu = config.nu;
  scoring.round = round;
  scoring.seed = derive_seed(seed, 0xacc);
  scoring.distribution_sample = config.distribution_sample;
  const model::ModelParams* prev = state.params ? &*state.params : nullptr;
  auto scores = acquisition::score_regions(scoring, prev, train.features, train.partitions, state.pool);
  const acquisition::Selection sel =
      acquisition::select_batch(std::move(scores), state.pool, config.budget_clicks, config.mode, state.oracle, C);
  for (const auto& [ref, label] : sel.entries) state.pool.add(ref, label, round);
  state.cum_clicks += sel.clicks;
  emit({{"event", "selection"},
        {"sampler", acquisition::to_string(scoring.sampler)},
        {"regions", sel.entries.size()},
        {"clicks", sel.clicks},
        {"overshoot", sel.overshoot},
        {"skipped_undefined", sel.skipped_undefined},
        {"cum_clicks", state.cum_clicks},
        {"distribution_estimate", config.distribution_sample > 0 ? "subsample" : "all_pixels"}});

  // 3-4. Fresh initialization, stage 1.
  const model::ModelDims dims{model::kFeatureDim, config.hidden, config.embed, C + 1};
  model::ModelParams init = model::init_params(dims, config.tau, derive_seed(seed, 0x1000 + std::uint64_t(round)));
  const training::TrainingData data{train.features, train.partitions, C};
  training::TrainResult s1 =
      training::train_stage1(std::move(init), state.pool, data, config.stage1(), derive_seed(seed, 0x2000 + round), log);
  const std::uint64_t stage1_id = model::fingerprint(s1.params);
  emit({{"event", "stage1_end"},
        {"model_id", stage1_id},
        {"steps", s1.steps},
        {"l_ce", s1.last_loss.l_ce},
        {"l_mp", s1.last_loss.l_mp},
        {"l_pp", s1.last_loss.l_pp},
        {"total", s1.last_loss.total}});

  RoundReport report;
  report.round = round;
  report.clicks = sel.clicks;
  report.cum_clicks = state.cum_clicks;
  report.overshoot = sel.overshoot;
  report.stage1_loss = s1.last_loss.total;

  // 5-6. Pseudo labels from this round's stage-1 model, then stage 2.
  model::ModelParams final_params = s1.params;
  if (config.localize || config.expand) {
    const pseudolabel::PseudoLabelMap pseudo = pseudolabel::build_pseudo_dataset(
        state.pool, train.partitions, train.adjacency, train.features, s1.params, C,
        {config.localize, config.expand});
    report.localized_pixels = pseudo.count(pseudolabel::Source::kLocalized);
    report.expanded_pixels = pseudo.count(pseudolabel::Source::kExpanded);
    emit({{"event", "pseudo_build"},
          {"model_id", pseudo.model_fingerprint},
          {"single_pixels", pseudo.count(pseudolabel::Source::kSingle)},
          {"localized_pixels", report.localized_pixels},
          {"expanded_pixels", report.expanded_pixels}});
    const auto targets = pseudo.targets();
    training::TrainResult s2 = training::train_stage2(std::move(s1.params), targets, data, config.stage2(),
                                                      derive_seed(seed, 0x3000 + round), log);
    report.stage2_loss = s2.last_loss.total;
    final_params = std::move(s2.params);
    emit({{"event", "stage2_end"}, {"model_id", model::fingerprint(final_params)}, {"steps", s2.steps},
          {"l_ce", s2.last_loss.l_ce}});
  }

  // 7. Held-out evaluation.
  const IouResult iou = evaluate(bench.val, final_params);
  report.miou = iou.miou;
  report.per_class_iou = iou.per_class;
  state.params = std::move(final_params);
  nlohmann::json end = report_json(report);
  end["event"] = "round_end";
  emit(end);
  return report;
}

TrialResult run_trial(const ExperimentConfig& config, const Benchmark& bench, std::uint64_t seed,
                      const fs::path& out_dir) {
  config.validate();
  dataio::JsonlLog log;
  const std::string suffix = "_seed" + std::to_string(seed);
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    log = dataio::JsonlLog(out_dir / ("log" + suffix + ".jsonl"));
  }
  ExperimentState state(bench.train);
  TrialResult trial;
  trial.seed = seed;
  for (int r = 0; r < config.rounds; ++r) trial.reports.push_back(run_round(state, bench, config, seed, &log));
  trial.pool = state.pool;
  trial.params = *state.params;
  trial.oracle_clicks = state.oracle.clicks_spent();
  if (!out_dir.empty()) {
    dataio::write_results(trial.reports, out_dir / ("results" + suffix + ".csv"));
    model::save_checkpoint(trial.params, out_dir / ("checkpoint" + suffix + ".bin"));
    trial.pool.save_jsonl(out_dir / ("pool" + suffix + ".jsonl"));
  }
  return trial;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const Benchmark& bench, const fs::path& out_dir) {
  ExperimentResult result;
  std::vector<std::vector<RoundReport>> runs;
  for (std::uint64_t seed : config.seed_list()) {
    result.trials.push_back(run_trial(config, bench, seed, out_dir));
    runs.push_back(result.trials.back().reports);
  }
  result.mean = dataio::mean_reports(runs);
  if (!out_dir.empty() && runs.size() > 1) dataio::write_results(result.mean, out_dir / "results_mean.csv");
  return result;
}

ExperimentResult run_experiment(const ExperimentConfig& config, const fs::path& out_dir) {
  return run_experiment(config, load_benchmark(config), out_dir);
}

std::vector<AblationRow> ablation_rows() {
  return {{"a", true, true, true, true},
          {"b", true, true, true, false},
          {"c", true, true, false, false},
          {"d", true, false, false, false},
          {"e", false, true, false, false}};
}

ExperimentConfig with_row(ExperimentConfig config, const AblationRow& row) {
  config.use_mp = row.use_mp;
  config.use_pp = row.use_pp;
  config.localize = row.localize;
  config.expand = row.expand;
  return config;
}

}  // namespace mulseg::evalrun
