// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Experiment configuration and the command implementations behind the CLI:
// train, sweep, allocate, analyze, finetune-interval, benchmark.
//
// Output layout: <out>/{checkpoints,tables,profiles,reports}/ plus <out>/manifest.json.

#pragma once

#include "tstitch/allocator.hpp"
#include "tstitch/analysis.hpp"
#include "tstitch/checkpoint.hpp"
#include "tstitch/datasets.hpp"
#include "tstitch/metrics.hpp"

#include <filesystem>
#include <iostream>

namespace tstitch {

inline constexpr int kConfigSchemaVersion = 1;

struct RosterSpec {
  std::string id;
  DenoiserKind kind = DenoiserKind::GmmOracle;
  std::optional<double> cost;
  std::string source;  // degraded-oracle: id of the oracle it degrades
  double level = 0.5;
  DegradeMode mode = DegradeMode::BlurResponsibilities;
  std::optional<TrainingConfig> train;  // mlp: train with these settings
  std::string load;                     // mlp: checkpoint path (else checkpoints/<id>.tstd)
};

struct SweepSpec {
  int granularity = 10;
  std::vector<std::string> schedules;  // literal overrides; empty = enumerate
  bool baselines = true;
  double baseline_fraction = 0.5;
};

struct AnalyzeSpec {
  std::vector<std::pair<std::string, std::string>> pairs;  // empty = (first, last) of the roster
  std::vector<std::string> spectrum_denoisers;             // empty = last of the roster
  std::size_t chains = 32;
  SimilarityOperand operand = SimilarityOperand::State;
  SpectrumScaling scaling = SpectrumScaling::VariancePreserving;
};

struct BenchmarkSpec {
  std::size_t chains = 512;
  std::size_t repetitions = 5;
};

struct FinetuneSpec {
  std::string schedule;  // stitch literal
  std::size_t steps = 1000;
  std::optional<double> lr;
};

struct ExperimentConfig {
  std::uint64_t seed = 0;
  DatasetSpec dataset;
  std::vector<RosterSpec> roster;
  SamplerConfig sampler;
  SweepSpec sweep;
  std::vector<QualityMetric> metrics{QualityMetric::SlicedWasserstein};
  std::size_t projections = kDefaultProjections;
  std::size_t reference_samples = 4096;
  std::size_t chains = 4096;
  std::vector<std::uint64_t> seeds{0, 1, 2, 3, 4};
  std::size_t workers = 1;
  std::size_t emulated_work_per_cost = 0;
  AnalyzeSpec analyze;
  BenchmarkSpec benchmark;
  FinetuneSpec finetune;
  std::string output = "out";
  nlohmann::json raw;  // parsed document, for hashing

  std::vector<std::string> roster_ids() const {
    std::vector<std::string> ids;
    for (const auto& r : roster) ids.push_back(r.id);
    return ids;
  }
  const RosterSpec& roster_spec(const std::string& id) const {
    for (const auto& r : roster) {
      if (r.id == id) return r;
    }
    throw ConfigError("roster has no denoiser '" + id + "'");
  }
};

// ---------------------------------------------------------------- config parsing

namespace detail {

template <typename T>
T get_as(const nlohmann::json& j, std::string_view key, std::string_view where) {
  try {
    return j.at(std::string(key)).get<T>();
  } catch (const nlohmann::json::exception&) {
    throw ConfigError(std::string(where) + ": bad or missing '" + std::string(key) + "'");
  }
}

template <typename T>
void read_opt(const nlohmann::json& j, std::string_view key, T& out, std::string_view where) {
  if (j.contains(std::string(key))) out = get_as<T>(j, key, where);
}

inline GmmParams parse_mixture(const nlohmann::json& j) {
  require_keys(j, {"weights", "means", "variances", "labels"}, "dataset.mixture");
  GmmParams p;
  p.weights = get_as<std::vector<double>>(j, "weights", "dataset.mixture");
  const auto means = get_as<std::vector<std::vector<double>>>(j, "means", "dataset.mixture");
  if (means.empty()) throw ConfigError("dataset.mixture: no means");
  p.means.resize(static_cast<Eigen::Index>(means.size()), static_cast<Eigen::Index>(means.front().size()));
  for (std::size_t i = 0; i < means.size(); ++i) {
    if (means[i].size() != means.front().size()) throw ConfigError("dataset.mixture: ragged means");
    for (std::size_t k = 0; k < means[i].size(); ++k) p.means(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)) = means[i][k];
  }
  p.variances = get_as<std::vector<double>>(j, "variances", "dataset.mixture");
  read_opt(j, "labels", p.labels, "dataset.mixture");
  try {
    p.validate();
  } catch (const Error& e) {
    throw ConfigError(std::string("dataset.mixture: ") + e.what());
  }
  return p;
}

inline DatasetSpec parse_dataset(const nlohmann::json& j) {
  require_keys(j,
               {"kind", "seed", "components", "radius", "component_std", "mixture", "cells", "extent", "turns",
                "spiral_noise", "height", "width", "templates", "blob_amplitude", "blob_width", "pixel_std"},
               "dataset");
  if (!j.contains("kind")) throw ConfigError("dataset: missing 'kind'");
  DatasetSpec d;
  d.kind = dataset_kind_from_string(get_as<std::string>(j, "kind", "dataset"));
  read_opt(j, "seed", d.seed, "dataset");
  read_opt(j, "components", d.components, "dataset");
  read_opt(j, "radius", d.radius, "dataset");
  read_opt(j, "component_std", d.component_std, "dataset");
  if (j.contains("mixture")) d.mixture = parse_mixture(j.at("mixture"));
  read_opt(j, "cells", d.cells, "dataset");
  read_opt(j, "extent", d.extent, "dataset");
  read_opt(j, "turns", d.turns, "dataset");
  read_opt(j, "spiral_noise", d.spiral_noise, "dataset");
  read_opt(j, "height", d.height, "dataset");
  read_opt(j, "width", d.width, "dataset");
  read_opt(j, "templates", d.templates, "dataset");
  read_opt(j, "blob_amplitude", d.blob_amplitude, "dataset");
  read_opt(j, "blob_width", d.blob_width, "dataset");
  read_opt(j, "pixel_std", d.pixel_std, "dataset");
  if (d.kind == DatasetKind::Gmm && d.components == 0) throw ConfigError("dataset: components must be positive");
  return d;
}

inline RosterSpec parse_roster_entry(const nlohmann::json& j) {
  require_keys(j, {"id", "kind", "cost", "source", "level", "mode", "train", "load"}, "roster entry");
  RosterSpec r;
  r.id = get_as<std::string>(j, "id", "roster entry");
  if (r.id.empty() || r.id.find_first_of(",: \t") != std::string::npos) {
    throw ConfigError("roster id '" + r.id + "' must be nonempty without ',', ':' or whitespace");
  }
  try {
    r.kind = denoiser_kind_from_string(get_as<std::string>(j, "kind", "roster entry"));
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  if (j.contains("cost")) r.cost = get_as<double>(j, "cost", "roster entry");
  read_opt(j, "source", r.source, "roster entry");
  read_opt(j, "level", r.level, "roster entry");
  if (j.contains("mode")) {
    try {
      r.mode = degrade_mode_from_string(get_as<std::string>(j, "mode", "roster entry"));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("train")) {
    TrainingConfig t;
    merge_training_config(j.at("train"), t);
    r.train = t;
  }
  read_opt(j, "load", r.load, "roster entry");
  if (r.kind == DenoiserKind::DegradedOracle && r.source.empty()) {
    throw ConfigError("degraded-oracle '" + r.id + "' needs a 'source'");
  }
  return r;
}

inline SamplerConfig parse_sampler(const nlohmann::json& j) {
  require_keys(j, {"kind", "schedule", "steps", "sigma_min", "sigma_max", "rho", "guidance"}, "sampler");
  SamplerConfig s;
  try {
    if (j.contains("kind")) s.kind = sampler_kind_from_string(get_as<std::string>(j, "kind", "sampler"));
    ScheduleKind sk = ScheduleKind::KarrasPower;
    if (j.contains("schedule")) sk = schedule_kind_from_string(get_as<std::string>(j, "schedule", "sampler"));
    int steps = 100;
    double smin = 0.002, smax = 80.0, rho = 7.0;
    read_opt(j, "steps", steps, "sampler");
    read_opt(j, "sigma_min", smin, "sampler");
    read_opt(j, "sigma_max", smax, "sampler");
    read_opt(j, "rho", rho, "sampler");
    s.schedule = NoiseSchedule(sk, steps, smin, smax, rho);
  } catch (const ConfigError&) {
    throw;
  } catch (const Error& e) {
    throw ConfigError(std::string("sampler: ") + e.what());
  }
  if (j.contains("guidance") && !j.at("guidance").is_null()) {
    const auto& g = j.at("guidance");
    require_keys(g, {"scale", "condition"}, "sampler.guidance");
    GuidanceSpec spec;
    read_opt(g, "scale", spec.scale, "sampler.guidance");
    read_opt(g, "condition", spec.condition, "sampler.guidance");
    if (!(spec.scale >= 0.0)) throw ConfigError("sampler.guidance: scale must be >= 0");
    s.guidance = spec;
  }
  return s;
}

}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::get_as;
  using detail::read_opt;
  detail::require_keys(j,
                       {"schema_version", "seed", "dataset", "roster", "sampler", "sweep", "metrics", "projections",
                        "reference_samples", "chains", "seeds", "workers", "emulated_work_per_cost", "analyze",
                        "benchmark", "finetune", "output"},
                       "config");
  if (!j.contains("schema_version")) throw ConfigError("config: missing 'schema_version'");
  if (get_as<int>(j, "schema_version", "config") != kConfigSchemaVersion) {
    throw ConfigError("config: unsupported schema_version (expected " + std::to_string(kConfigSchemaVersion) + ")");
  }
  ExperimentConfig c;
  c.raw = j;
  read_opt(j, "seed", c.seed, "config");
  if (!j.contains("dataset")) throw ConfigError("config: missing 'dataset'");
  c.dataset = detail::parse_dataset(j.at("dataset"));
  if (!j.contains("roster") || !j.at("roster").is_array() || j.at("roster").empty()) {
    throw ConfigError("config: 'roster' must be a nonempty array");
  }
  for (const auto& r : j.at("roster")) {
    RosterSpec spec = detail::parse_roster_entry(r);
    for (const auto& prev : c.roster) {
      if (prev.id == spec.id) throw ConfigError("config: duplicate roster id '" + spec.id + "'");
    }
    c.roster.push_back(std::move(spec));
  }
  for (const auto& r : c.roster) {
    if (r.kind == DenoiserKind::DegradedOracle && c.roster_spec(r.source).kind != DenoiserKind::GmmOracle) {
      throw ConfigError("degraded-oracle '" + r.id + "' must name a gmm-oracle source");
    }
  }
  if (j.contains("sampler")) c.sampler = detail::parse_sampler(j.at("sampler"));
  if (j.contains("sweep")) {
    const auto& s = j.at("sweep");
    detail::require_keys(s, {"granularity", "schedules", "baselines", "baseline_fraction"}, "sweep");
    read_opt(s, "granularity", c.sweep.granularity, "sweep");
    read_opt(s, "schedules", c.sweep.schedules, "sweep");
    read_opt(s, "baselines", c.sweep.baselines, "sweep");
    read_opt(s, "baseline_fraction", c.sweep.baseline_fraction, "sweep");
    if (c.sweep.granularity < 1) throw ConfigError("sweep: granularity must be >= 1");
  }
  if (j.contains("metrics")) {
    c.metrics.clear();
    for (const auto& m : get_as<std::vector<std::string>>(j, "metrics", "config")) {
      try {
        c.metrics.push_back(quality_metric_from_string(m));
      } catch (const ParseError& e) {
        throw ConfigError(e.what());
      }
    }
    if (c.metrics.empty()) throw ConfigError("config: 'metrics' must be nonempty");
  }
  read_opt(j, "projections", c.projections, "config");
  read_opt(j, "reference_samples", c.reference_samples, "config");
  read_opt(j, "chains", c.chains, "config");
  read_opt(j, "seeds", c.seeds, "config");
  if (c.seeds.empty()) throw ConfigError("config: 'seeds' must be nonempty");
  read_opt(j, "workers", c.workers, "config");
  if (c.workers == 0) throw ConfigError("config: workers must be >= 1");
  read_opt(j, "emulated_work_per_cost", c.emulated_work_per_cost, "config");
  if (j.contains("analyze")) {
    const auto& a = j.at("analyze");
    detail::require_keys(a, {"pairs", "spectrum_denoisers", "chains", "operand", "scaling"}, "analyze");
    if (a.contains("pairs")) {
      for (const auto& p : get_as<std::vector<std::vector<std::string>>>(a, "pairs", "analyze")) {
        if (p.size() != 2) throw ConfigError("analyze: every pair needs two ids");
        c.analyze.pairs.emplace_back(p[0], p[1]);
      }
    }
    read_opt(a, "spectrum_denoisers", c.analyze.spectrum_denoisers, "analyze");
    read_opt(a, "chains", c.analyze.chains, "analyze");
    try {
      if (a.contains("operand")) c.analyze.operand = similarity_operand_from_string(get_as<std::string>(a, "operand", "analyze"));
      if (a.contains("scaling")) c.analyze.scaling = spectrum_scaling_from_string(get_as<std::string>(a, "scaling", "analyze"));
    } catch (const ParseError& e) {
      throw ConfigError(e.what());
    }
  }
  if (j.contains("benchmark")) {
    const auto& b = j.at("benchmark");
    detail::require_keys(b, {"chains", "repetitions"}, "benchmark");
    read_opt(b, "chains", c.benchmark.chains, "benchmark");
    read_opt(b, "repetitions", c.benchmark.repetitions, "benchmark");
  }
  if (j.contains("finetune")) {
    const auto& f = j.at("finetune");
    detail::require_keys(f, {"schedule", "steps", "lr"}, "finetune");
    read_opt(f, "schedule", c.finetune.schedule, "finetune");
    read_opt(f, "steps", c.finetune.steps, "finetune");
    if (f.contains("lr")) c.finetune.lr = get_as<double>(f, "lr", "finetune");
  }
  read_opt(j, "output", c.output, "config");
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream f(path);
  if (!f) throw ConfigError("cannot read config '" + path + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(f);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

/// Hash of the canonical (sorted-key, compact) config document.
inline std::string config_hash(const ExperimentConfig& c) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(fnv1a(c.raw.dump())));
  return buf;
}

// ---------------------------------------------------------------- output layout

struct OutputLayout {
  std::filesystem::path root;
  std::filesystem::path checkpoints() const { return root / "checkpoints"; }
  std::filesystem::path tables() const { return root / "tables"; }
  std::filesystem::path profiles() const { return root / "profiles"; }
  std::filesystem::path reports() const { return root / "reports"; }

  void create() const {
    for (const auto& d : {checkpoints(), tables(), profiles(), reports()}) std::filesystem::create_directories(d);
  }
};

/// Write through a temporary file and rename, so readers never see a partial file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot write '" + tmp + "'");
    f << content;
    if (!f) throw IoError("write to '" + tmp + "' failed");
  }
  std::filesystem::rename(tmp, path);
}

inline void write_manifest(const OutputLayout& out, const ExperimentConfig& c, const std::string& command) {
  nlohmann::json m;
  m["config_hash"] = config_hash(c);
  m["command"] = command;
  m["seed"] = c.seed;
  m["seeds"] = c.seeds;
  m["schema_version"] = kConfigSchemaVersion;
  m["checkpoint_version"] = kCheckpointVersion;
  m["config"] = c.raw;
  write_file_atomic(out.root / ("manifest." + command + ".json"), m.dump(2) + "\n");
}

// ---------------------------------------------------------------- roster

inline std::filesystem::path checkpoint_path(const OutputLayout& out, const RosterSpec& r) {
  return r.load.empty() ? out.checkpoints() / (r.id + ".tstd") : std::filesystem::path(r.load);
}

/// Denoisers for every roster entry. Oracles are built from the dataset's
/// mixture; mlp entries are loaded from their checkpoints.
inline Roster build_roster(const ExperimentConfig& c, const Dataset& data, const OutputLayout& out) {
  Roster roster;
  std::map<std::string, std::shared_ptr<Denoiser>> built;
  auto finish = [&](std::shared_ptr<Denoiser> d) {
    d->set_emulated_work(static_cast<std::size_t>(std::llround(d->cost_per_eval() * static_cast<double>(c.emulated_work_per_cost))));
    built[d->id()] = d;
    roster[d->id()] = d;
  };
  for (const auto& r : c.roster) {
    if (r.kind != DenoiserKind::GmmOracle) continue;
    if (!data.gmm) throw ConfigError("gmm-oracle '" + r.id + "' needs a mixture-backed dataset (gmm or blob-images)");
    finish(std::make_shared<GmmOracle>(r.id, *data.gmm, r.cost.value_or(10.0), data.shape));
  }
  for (const auto& r : c.roster) {
    if (r.kind == DenoiserKind::DegradedOracle) {
      const auto& src = *built.at(r.source);
      try {
        std::shared_ptr<Denoiser> d = degrade_oracle(src, r.level, r.mode, r.id, r.cost.value_or(src.cost_per_eval() * kDegradedCostRatio));
        finish(d);
      } catch (const DomainError& e) {
        throw ConfigError("roster entry '" + r.id + "': " + e.what());
      }
    } else if (r.kind == DenoiserKind::Mlp) {
      const auto path = checkpoint_path(out, r);
      if (!std::filesystem::exists(path)) {
        throw ConfigError("checkpoint for '" + r.id + "' not found at " + path.string() + " (run train first)");
      }
      std::shared_ptr<Denoiser> d = load_checkpoint(path.string());
      if (!(d->shape() == data.shape)) throw ConfigError("checkpoint '" + path.string() + "' does not match the dataset shape");
      d->rename(r.id);
      if (r.cost) d->set_cost(*r.cost);
      finish(d);
    }
  }
  return roster;
}

// ---------------------------------------------------------------- quality

inline std::uint64_t reference_stream(std::uint64_t seed) { return Rng::derive(seed, "reference"); }
inline std::uint64_t sampling_seed(std::uint64_t seed) { return Rng::derive(seed, "sampling"); }
inline std::uint64_t projection_seed(std::uint64_t seed) { return Rng::derive(seed, "projections"); }

/// Reference draw, restricted to the guided class when guidance names one.
inline Matrix reference_samples(const Dataset& data, std::size_t n, std::uint64_t seed, const SamplerConfig& sampler) {
  const int cond = sampler.guidance ? sampler.guidance->condition : kNullCondition;
  if (cond == kNullCondition) return data.draw(n, reference_stream(seed));
  Matrix out(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(data.shape.size()));
  std::size_t filled = 0;
  for (std::uint64_t round = 0; filled < n && round < 1000; ++round) {
    std::vector<int> labels;
    Matrix x = data.draw(n, reference_stream(seed) + round, &labels);
    for (std::size_t i = 0; i < n && filled < n; ++i) {
      if (labels[i] == cond) out.row(static_cast<Eigen::Index>(filled++)) = x.row(static_cast<Eigen::Index>(i));
    }
  }
  if (filled < n) throw ConditionError("dataset has no samples of class " + std::to_string(cond));
  return out;
}

inline double quality_value(QualityMetric m, const Matrix& samples, const Matrix& reference, const Dataset& data,
                            std::size_t projections, std::uint64_t seed) {
  switch (m) {
    case QualityMetric::SlicedWasserstein: return sliced_wasserstein(samples, reference, projections, projection_seed(seed)).value;
    case QualityMetric::MeanError:
    case QualityMetric::CovarianceError: {
      if (!data.gmm) throw UnsupportedDataError("moment errors need a mixture-backed dataset");
      const auto [mean_err, cov_err] = moment_errors(samples, *data.gmm);
      return m == QualityMetric::MeanError ? mean_err.value : cov_err.value;
    }
  }
  return 0.0;
}

struct PlanQuality {
  std::vector<std::vector<double>> per_seed;  // [metric][seed]
  double mean(std::size_t metric = 0) const { return mean_of(per_seed.at(metric)); }
  double std_error(std::size_t metric = 0) const { return std_error_of(per_seed.at(metric)); }
};

/// Sample `chains` trajectories under `plan` for every seed and score them.
/// All plans share the same initial noise per seed.
inline PlanQuality measure_plan(const StepPlan& plan, const ExperimentConfig& c, const Dataset& data,
                                std::size_t sample_workers = 1) {
  PlanQuality q;
  q.per_seed.assign(c.metrics.size(), {});
  for (const auto seed : c.seeds) {
    const Matrix ref = reference_samples(data, c.reference_samples, seed, c.sampler);
    SampleOptions opt;
    opt.workers = sample_workers;
    const SampleResult res = sample(plan, c.sampler, c.chains, sampling_seed(seed), opt);
    for (std::size_t m = 0; m < c.metrics.size(); ++m) {
      q.per_seed[m].push_back(quality_value(c.metrics[m], res.samples.data, ref, data, c.projections, seed));
    }
  }
  return q;
}

// ---------------------------------------------------------------- train

struct TrainOutcome {
  std::vector<std::string> trained;
};

inline std::uint64_t training_seed(std::uint64_t seed, const std::string& id) { return Rng::derive(seed, "train/" + id); }

inline void write_loss_trace(const std::filesystem::path& path, const std::vector<double>& trace) {
  std::ostringstream s;
  csv::write_row(s, {"step", "loss", "loss_smoothed"});
  const auto smooth = smooth_trace(trace, 50);
  for (std::size_t i = 0; i < trace.size(); ++i) {
    csv::write_row(s, {std::to_string(i), format_double(trace[i]), format_double(smooth[i])});
  }
  write_file_atomic(path, s.str());
}

inline TrainOutcome cmd_train(const ExperimentConfig& c, const OutputLayout& out, std::ostream& log = std::cerr) {
  out.create();
  write_manifest(out, c, "train");
  const Dataset data = make_dataset(c.dataset);
  TrainOutcome outcome;
  for (const auto& r : c.roster) {
    if (r.kind != DenoiserKind::Mlp || !r.train) continue;
    Rng rng(training_seed(c.seed, r.id));
    log << "training '" << r.id << "' for " << r.train->steps << " steps\n";
    TrainingResult res;
    try {
      res = train_denoiser(data.sampler, data.shape, data.num_classes, *r.train, rng, r.id, r.cost);
    } catch (const TrainingError& e) {
      write_loss_trace(out.checkpoints() / (r.id + "_loss.csv"), e.loss_trace);
      throw TrainingError("roster entry '" + r.id + "': " + e.what(), e.loss_trace);
    }
    save_checkpoint(*res.model, checkpoint_path(out, r).string());
    write_loss_trace(out.checkpoints() / (r.id + "_loss.csv"), res.loss_trace);
    outcome.trained.push_back(r.id);
  }
  return outcome;
}

// ---------------------------------------------------------------- sweep

struct BaselineRow {
  std::string label;
  double fraction_small = 0.0;
  double total_cost = 0.0;
  std::optional<double> quality;
  std::optional<std::string> error;
  std::optional<std::string> warning;
};

struct SweepOutcome {
  LookupTable table;
  std::vector<BaselineRow> baselines;
  std::vector<ParetoPoint> frontier;
  std::size_t computed_rows = 0;
  std::size_t skipped_rows = 0;
};

inline LookupTable sweep_skeleton(const ExperimentConfig& c) {
  std::vector<RosterCost> costs;
  const Dataset data = make_dataset(c.dataset);
  for (const auto& r : c.roster) {
    double cost = 0.0;
    if (r.cost) cost = *r.cost;
    else if (r.kind == DenoiserKind::GmmOracle) cost = 10.0;
    else if (r.kind == DenoiserKind::DegradedOracle) cost = c.roster_spec(r.source).cost.value_or(10.0) * kDegradedCostRatio;
    else cost = r.train ? static_cast<double>(r.train->width) / 64.0 : 0.0;
    costs.push_back({r.id, cost});
  }
  const int mult = c.sampler.guidance ? c.sampler.guidance->multiplier() : 1;
  if (c.sweep.schedules.empty()) {
    LookupTable t = build_lookup(costs, c.sweep.granularity, c.sampler.steps(), mult);
    t.quality_metric = to_string(c.metrics.front());
    t.lower_is_better = lower_is_better(c.metrics.front());
    return t;
  }
  LookupTable t;
  t.roster = costs;
  t.granularity = c.sweep.granularity;
  t.steps = c.sampler.steps();
  t.guidance_multiplier = mult;
  t.quality_metric = to_string(c.metrics.front());
  t.lower_is_better = lower_is_better(c.metrics.front());
  std::size_t index = 0;
  for (const auto& lit : c.sweep.schedules) {
    StitchSchedule parsed;
    try {
      parsed = parse_schedule_literal(lit);
    } catch (const ParseError& e) {
      throw ConfigError(std::string("sweep.schedules: ") + e.what());
    }
    // one segment per roster entry in roster order, so the r_k columns line up
    StitchSchedule s;
    for (const auto& rc : costs) s.segments.push_back({rc.id, parsed.fraction_of(rc.id)});
    for (const auto& seg : parsed.segments) c.roster_spec(seg.denoiser_id);
    s.label = lit;
    LookupRow row;
    row.index = index++;
    row.total_cost = schedule_cost(s, costs, t.steps, mult);
    row.schedule = s;
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rows of an existing table that can be reused: same layout and measured without error.
inline std::map<std::size_t, LookupRow> reusable_rows(const std::filesystem::path& table_path, const LookupTable& skeleton,
                                                      const std::filesystem::path& manifest_path, const std::string& hash) {
  std::map<std::size_t, LookupRow> out;
  if (!std::filesystem::exists(table_path) || !std::filesystem::exists(manifest_path)) return out;
  try {
    std::ifstream mf(manifest_path);
    if (nlohmann::json::parse(mf).at("config_hash").get<std::string>() != hash) return out;
    const LookupTable prev = load_lookup(table_path.string());
    if (prev.rows.size() != skeleton.rows.size() || !(prev.roster == skeleton.roster)) return out;
    for (const auto& r : prev.rows) {
      const auto& s = skeleton.rows[r.index];
      if (r.quality && !r.error && r.schedule.label == s.schedule.label) out[r.index] = r;
    }
  } catch (const std::exception&) {
    out.clear();
  }
  return out;
}

inline void write_baselines_csv(std::ostream& out, const std::vector<BaselineRow>& rows, const std::string& metric) {
  csv::write_row(out, {"schedule", "fraction_small", "total_cost", "quality", "quality_metric", "error", "warning"});
  for (const auto& b : rows) {
    csv::write_row(out, {b.label, format_double(b.fraction_small), format_double(b.total_cost),
                         b.quality ? format_double(*b.quality) : "", metric, b.error.value_or(""), b.warning.value_or("")});
  }
}

inline std::vector<ParetoPoint> table_frontier(const LookupTable& t) {
  std::vector<ParetoPoint> pts;
  for (const auto& r : t.rows) {
    if (r.quality) pts.push_back({r.schedule.label, r.total_cost, t.oriented(*r.quality)});
  }
  return pareto_frontier(pts);
}

/// Baseline orderings for the first (small) and last (large) roster entries.
/// small-to-large at the baseline fraction is an enumerated row already.
inline std::vector<std::pair<BaselineAssignment, std::string>> sweep_baselines(const ExperimentConfig& c) {
  std::vector<std::pair<BaselineAssignment, std::string>> out;
  if (!c.sweep.baselines || c.roster.size() < 2) return out;
  const std::string small = c.roster.front().id, large = c.roster.back().id;
  Rng rng(Rng::derive(c.seed, "baseline"));
  for (auto kind : {BaselineKind::LargeToSmall, BaselineKind::Interleave, BaselineKind::DecreasingProb}) {
    auto a = baseline_schedule(kind, small, large, c.sweep.baseline_fraction, c.sampler.steps(), &rng);
    out.emplace_back(std::move(a), to_string(kind));
  }
  return out;
}

inline SweepOutcome cmd_sweep(const ExperimentConfig& c, const OutputLayout& out, std::ostream& log = std::cerr) {
  out.create();
  const Dataset data = make_dataset(c.dataset);
  const Roster roster = build_roster(c, data, out);
  SweepOutcome outcome;
  outcome.table = sweep_skeleton(c);
  // declared costs come from the live denoisers (checkpoints may carry their own)
  for (auto& rc : outcome.table.roster) rc.cost = roster_get(roster, rc.id)->cost_per_eval();
  for (auto& row : outcome.table.rows) {
    row.total_cost = schedule_cost(row.schedule, outcome.table.roster, outcome.table.steps, outcome.table.guidance_multiplier);
  }
  const auto table_path = out.tables() / "lookup.csv";
  const auto manifest_path = out.root / "manifest.sweep.json";
  const auto reuse = reusable_rows(table_path, outcome.table, manifest_path, config_hash(c));
  write_manifest(out, c, "sweep");

  std::mutex writer;
  auto flush = [&]() {
    std::ostringstream s;
    write_lookup_csv(s, outcome.table);
    write_file_atomic(table_path, s.str());
    write_file_atomic(table_path.string() + ".json", lookup_sidecar(outcome.table).dump(2) + "\n");
  };
  std::vector<std::size_t> todo;
  for (auto& row : outcome.table.rows) {
    auto it = reuse.find(row.index);
    if (it != reuse.end()) {
      row.quality = it->second.quality;
      ++outcome.skipped_rows;
    } else {
      todo.push_back(row.index);
    }
  }
  flush();
  parallel_for(todo.size(), c.workers, [&](std::size_t i) {
    LookupRow& row = outcome.table.rows[todo[i]];
    std::optional<double> quality;
    std::optional<std::string> error;
    try {
      quality = measure_plan(make_plan(row.schedule, roster, c.sampler.steps()), c, data).mean();
    } catch (const std::exception& e) {
      error = e.what();
    }
    std::lock_guard<std::mutex> lock(writer);
    row.quality = quality;
    row.error = error;
    ++outcome.computed_rows;
    log << "row " << row.index << " " << row.schedule.label << " -> "
        << (quality ? format_double(*quality) : "error: " + *error) << "\n";
    flush();
  });

  for (auto& [assignment, label] : sweep_baselines(c)) {
    BaselineRow b;
    b.label = label;
    b.fraction_small = assignment.usage_of(c.roster.front().id);
    b.warning = assignment.warning;
    const StepPlan plan = make_plan(assignment, roster);
    b.total_cost = declared_cost(plan, c.sampler);
    try {
      b.quality = measure_plan(plan, c, data, c.workers).mean();
    } catch (const std::exception& e) {
      b.error = e.what();
    }
    outcome.baselines.push_back(std::move(b));
  }
  if (!outcome.baselines.empty()) {
    std::ostringstream s;
    write_baselines_csv(s, outcome.baselines, outcome.table.quality_metric);
    write_file_atomic(out.tables() / "baselines.csv", s.str());
  }
  outcome.frontier = table_frontier(outcome.table);
  std::ostringstream f;
  write_pareto_csv(f, outcome.frontier);
  write_file_atomic(out.tables() / "frontier.csv", f.str());
  return outcome;
}

// ---------------------------------------------------------------- allocate

struct AllocateOutcome {
  std::vector<LookupRow> feasible;
  LookupRow chosen;
};

/// Feasible rows and the chosen one. Unmeasured tables fall back to the most
/// expensive feasible row. Throws NoFeasibleScheduleError.
inline AllocateOutcome cmd_allocate(const std::string& table_path, double budget) {
  const LookupTable t = load_lookup(table_path);
  AllocateOutcome out;
  out.feasible = query_budget(t, budget);
  if (out.feasible.empty()) {
    double cheapest = std::numeric_limits<double>::infinity();
    for (const auto& r : t.rows) cheapest = std::min(cheapest, r.total_cost);
    throw NoFeasibleScheduleError("budget " + format_double(budget) + " is below the cheapest schedule (" +
                                  format_double(cheapest) + ")");
  }
  out.chosen = t.all_measured() ? select_best(t, budget) : out.feasible.front();
  return out;
}

// ---------------------------------------------------------------- analyze

enum class AnalyzeMode { Similarity, Spectrum };

inline AnalyzeMode analyze_mode_from_string(std::string_view s) {
  if (s == "similarity") return AnalyzeMode::Similarity;
  if (s == "spectrum") return AnalyzeMode::Spectrum;
  throw ConfigError("unknown analyze mode '" + std::string(s) + "'");
}

struct AnalyzeOutcome {
  std::vector<SimilarityProfile> similarity;
  std::vector<SpectrumProfile> spectra;
  std::vector<std::filesystem::path> files;
};

inline std::vector<Trajectory> single_denoiser_trajectories(const DenoiserPtr& d, const SamplerConfig& base,
                                                            std::size_t chains, std::uint64_t seed, bool denoised,
                                                            std::size_t workers = 1) {
  SamplerConfig cfg = base;
  cfg.record_trajectory = true;
  cfg.record_denoised = denoised;
  StepPlan plan;
  plan.label = d->id();
  plan.steps.assign(static_cast<std::size_t>(cfg.steps()), d);
  SampleOptions opt;
  opt.workers = workers;
  return sample(plan, cfg, chains, seed, opt).trajectories;
}

inline AnalyzeOutcome cmd_analyze(const ExperimentConfig& c, const OutputLayout& out, AnalyzeMode mode) {
  out.create();
  const Dataset data = make_dataset(c.dataset);
  if (mode == AnalyzeMode::Spectrum && !data.shape.is_grid()) {
    throw UnsupportedDataError("spectrum analysis needs grid-shaped data; dataset '" + to_string(c.dataset.kind) +
                               "' is point data");
  }
  const Roster roster = build_roster(c, data, out);
  write_manifest(out, c, "analyze");
  AnalyzeOutcome res;
  const std::uint64_t seed = sampling_seed(c.seed);
  if (mode == AnalyzeMode::Similarity) {
    auto pairs = c.analyze.pairs;
    if (pairs.empty()) pairs.emplace_back(c.roster.front().id, c.roster.back().id);
    const bool denoised = c.analyze.operand == SimilarityOperand::Denoised;
    for (const auto& [a, b] : pairs) {
      const auto ta = single_denoiser_trajectories(roster_get(roster, a), c.sampler, c.analyze.chains, seed, denoised, c.workers);
      const auto tb = single_denoiser_trajectories(roster_get(roster, b), c.sampler, c.analyze.chains, seed, denoised, c.workers);
      SimilarityProfile p = trajectory_similarity(ta, tb, c.analyze.operand);
      std::ostringstream s;
      write_similarity_csv(s, p);
      const auto path = out.profiles() / ("similarity_" + a + "_" + b + ".csv");
      write_file_atomic(path, s.str());
      res.files.push_back(path);
      res.similarity.push_back(std::move(p));
    }
  } else {
    auto ids = c.analyze.spectrum_denoisers;
    if (ids.empty()) ids.push_back(c.roster.back().id);
    for (const auto& id : ids) {
      const auto tr = single_denoiser_trajectories(roster_get(roster, id), c.sampler, c.analyze.chains, seed, false, c.workers);
      SpectrumProfile p = spectrum_profile(tr, c.analyze.scaling, c.workers);
      std::ostringstream s;
      write_spectrum_csv(s, p);
      const auto path = out.profiles() / ("spectrum_" + id + ".csv");
      write_file_atomic(path, s.str());
      res.files.push_back(path);
      res.spectra.push_back(std::move(p));
    }
  }
  return res;
}

// ---------------------------------------------------------------- finetune-interval

/// Noise range served by steps [start, end): step s runs at sigma(T - s), so the
/// range is [sigma(T - end + 1), sigma(T - start)].
inline std::pair<double, double> interval_sigma_range(const StepRange& range, const NoiseSchedule& schedule) {
  const int T = schedule.steps();
  if (range.start < 0 || range.end > T || range.start >= range.end) throw RangeError("bad step range");
  return {schedule.sigma_at(T - range.end + 1), schedule.sigma_at(T - range.start)};
}

struct FinetuneVariantQuality {
  std::string variant;  // pretrained | finetuned-all | finetuned-interval
  std::vector<double> per_seed;
};

struct FinetuneOutcome {
  StitchSchedule schedule;
  std::map<std::string, std::pair<double, double>> intervals;  // id -> sigma range
  std::vector<FinetuneVariantQuality> variants;
};

inline FinetuneOutcome cmd_finetune_interval(const ExperimentConfig& c, const OutputLayout& out, const std::string& literal,
                                             std::ostream& log = std::cerr) {
  out.create();
  const Dataset data = make_dataset(c.dataset);
  const Roster base = build_roster(c, data, out);
  write_manifest(out, c, "finetune-interval");
  FinetuneOutcome res;
  try {
    res.schedule = parse_schedule_literal(literal);
  } catch (const ParseError& e) {
    throw ConfigError(e.what());
  }
  for (const auto& seg : res.schedule.segments) c.roster_spec(seg.denoiser_id);
  const StepPartition part = partition_steps(res.schedule, c.sampler.steps());

  Roster all = base, interval = base;
  for (std::size_t k = 1; k < part.ranges.size(); ++k) {
    const StepRange& range = part.ranges[k];
    const auto* mlp = dynamic_cast<const MlpDenoiser*>(roster_get(base, range.denoiser_id).get());
    if (!mlp) continue;
    auto [lo, hi] = interval_sigma_range(range, c.sampler.schedule);
    if (lo == hi) {
      lo /= 1.1;
      hi *= 1.1;
    }
    res.intervals[range.denoiser_id] = {lo, hi};
    TrainingConfig cfg = mlp->training_config();
    cfg.steps = c.finetune.steps;
    cfg.lr.warmup = 0;
    if (c.finetune.lr) cfg.lr.base = *c.finetune.lr;
    cfg.sigma_range_restriction.reset();
    log << "finetuning '" << range.denoiser_id << "' on sigma in [" << format_double(lo) << ", " << format_double(hi) << "]\n";
    Rng rng_all(Rng::derive(c.seed, "finetune/" + range.denoiser_id));
    auto ft_all = finetune_denoiser(*mlp, data.sampler, cfg, rng_all);
    cfg.sigma_range_restriction = std::make_pair(lo, hi);
    Rng rng_int(Rng::derive(c.seed, "finetune/" + range.denoiser_id));
    auto ft_int = finetune_denoiser(*mlp, data.sampler, cfg, rng_int);
    save_checkpoint(*ft_all.model, (out.checkpoints() / (range.denoiser_id + "_ft_all.tstd")).string());
    save_checkpoint(*ft_int.model, (out.checkpoints() / (range.denoiser_id + "_ft_interval.tstd")).string());
    ft_all.model->set_emulated_work(mlp->emulated_work());
    ft_int.model->set_emulated_work(mlp->emulated_work());
    all[range.denoiser_id] = std::shared_ptr<const Denoiser>(std::move(ft_all.model));
    interval[range.denoiser_id] = std::shared_ptr<const Denoiser>(std::move(ft_int.model));
  }
  if (res.intervals.empty()) throw ConfigError("schedule '" + literal + "' has no mlp denoiser after its first segment");

  const std::pair<const char*, const Roster*> variants[] = {
      {"pretrained", &base}, {"finetuned-all", &all}, {"finetuned-interval", &interval}};
  for (const auto& [name, roster] : variants) {
    const PlanQuality q = measure_plan(make_plan(res.schedule, *roster, c.sampler.steps()), c, data, c.workers);
    res.variants.push_back({name, q.per_seed.front()});
  }
  std::ostringstream s;
  csv::write_row(s, {"variant", "seed", "quality", "quality_metric"});
  for (const auto& v : res.variants) {
    for (std::size_t i = 0; i < v.per_seed.size(); ++i) {
      csv::write_row(s, {v.variant, std::to_string(c.seeds[i]), format_double(v.per_seed[i]), to_string(c.metrics.front())});
    }
  }
  write_file_atomic(out.reports() / "finetune_comparison.csv", s.str());
  return res;
}

// ---------------------------------------------------------------- benchmark

struct BenchmarkRow {
  LookupRow row;
  CostReport report;
};

inline std::vector<BenchmarkRow> cmd_benchmark(const ExperimentConfig& c, const OutputLayout& out, std::ostream& log = std::cerr) {
  out.create();
  const Dataset data = make_dataset(c.dataset);
  const Roster roster = build_roster(c, data, out);
  write_manifest(out, c, "benchmark");
  LookupTable t = sweep_skeleton(c);
  for (auto& rc : t.roster) rc.cost = roster_get(roster, rc.id)->cost_per_eval();
  std::vector<BenchmarkRow> rows;
  for (auto& row : t.rows) {
    row.total_cost = schedule_cost(row.schedule, t.roster, t.steps, t.guidance_multiplier);
    SampleOptions opt;
    opt.workers = c.workers;
    const StepPlan plan = make_plan(row.schedule, roster, c.sampler.steps());
    BenchmarkRow b{row, benchmark_schedule(plan, c.sampler, c.benchmark.chains, c.benchmark.repetitions,
                                           sampling_seed(c.seed), opt)};
    b.row.wall_clock_s = b.report.wall_clock_s;
    log << row.schedule.label << ": " << format_double(b.report.wall_clock_s) << " s\n";
    rows.push_back(std::move(b));
  }
  std::ostringstream s;
  std::vector<std::string> header = lookup_header(t.roster.size());
  header.pop_back();  // error column
  for (const char* h : {"declared_cost", "repetitions", "workers", "n_chains"}) header.emplace_back(h);
  csv::write_row(s, header);
  for (const auto& b : rows) {
    auto fields = lookup_fields(t, b.row);
    fields.pop_back();
    fields.push_back(format_double(b.report.declared_cost));
    fields.push_back(std::to_string(b.report.wall_clock_runs.size()));
    fields.push_back(std::to_string(b.report.workers));
    fields.push_back(std::to_string(b.report.n_chains));
    csv::write_row(s, fields);
  }
  write_file_atomic(out.tables() / "benchmark.csv", s.str());
  return rows;
}

}  // namespace tstitch
