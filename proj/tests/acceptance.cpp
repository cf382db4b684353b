// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.
// Pass criterion numbers as arguments to run a subset.

#include "support.hpp"

#include "tstitch/experiment.hpp"

#include <chrono>
#include <cstdio>
#include <functional>
#include <set>

using namespace tstitch;
namespace fs = std::filesystem;

namespace {

struct Outcome {
  bool pass = true;
  std::string detail;

  void check(bool ok, const std::string& what) {
    if (!ok) pass = false;
    if (!detail.empty()) detail += "; ";
    detail += (ok ? "" : "FAILED ") + what;
  }
};

std::string fmt(double v, int digits = 4) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*g", digits, v);
  return buf;
}

const fs::path kSource = TSTITCH_SOURCE_DIR;
const fs::path kScratch = fs::temp_directory_path() / "tstitch_acceptance";

ExperimentConfig config(const std::string& name) { return load_config((kSource / "configs" / name).string()); }

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

fs::path fresh(const std::string& name) {
  const auto p = kScratch / name;
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

// Measured default table, shared by criteria 6 and 10 and timed as setup.
std::optional<fs::path> g_default_sweep;

fs::path default_sweep(const fs::path& dir) {
  std::ostringstream log;
  cmd_sweep(config("default.json"), OutputLayout{dir}, log);
  return dir;
}

// ---------------------------------------------------------------- 1

Outcome schedule_arithmetic() {
  Outcome o;
  const auto configs = enumerate_configs({"S", "B", "XL"}, 10);
  o.check(configs.size() == 66, std::to_string(configs.size()) + " configs for 3 denoisers at g=10");
  Rng rng(1);
  std::size_t bad = 0;
  for (int trial = 0; trial < 100000; ++trial) {
    const int steps = 1 + static_cast<int>(rng.index(500));
    const std::size_t k = 1 + rng.index(6);
    StitchSchedule s;
    std::vector<double> w(k);
    double total = 0.0;
    for (auto& x : w) total += (x = rng.bernoulli(0.2) ? 0.0 : rng.uniform());
    if (total == 0.0) w[0] = total = 1.0;
    double acc = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      const double f = i + 1 == k ? std::max(0.0, 1.0 - acc) : w[i] / total;
      acc += f;
      s.segments.push_back({"d" + std::to_string(i), f});
    }
    const auto p = partition_steps(s, steps);
    int cursor = 0;
    for (const auto& r : p.ranges) {
      if (r.start != cursor || r.end <= r.start) ++bad;
      cursor = r.end;
    }
    if (cursor != steps) ++bad;
  }
  o.check(bad == 0, "1e5 random partitions tile (" + std::to_string(bad) + " violations)");
  return o;
}

// ---------------------------------------------------------------- 2

Outcome oracle_correctness() {
  Outcome o;
  Rng rng(2);
  const GmmParams p = tstitch::testing::random_mixture(rng, 3, 2);
  Rng prior_rng(3);
  const Matrix prior = p.sample(1000000, prior_rng);
  int misses = 0;
  double worst = 0.0;
  for (int c = 0; c < 20; ++c) {
    const double sigma = 0.3 + 2.7 * rng.uniform();
    Matrix x = p.sample(1, rng);
    for (Eigen::Index j = 0; j < 2; ++j) x(0, j) += sigma * rng.normal();
    const Matrix exact = gmm_posterior_mean(p, x, sigma);
    const auto [mc, se] = tstitch::testing::monte_carlo_posterior(prior, x, sigma);
    for (Eigen::Index j = 0; j < 2; ++j) {
      const double z = std::abs(exact(0, j) - mc(j)) / se(j);
      worst = std::max(worst, z);
      if (z > 3) ++misses;
    }
  }
  o.check(misses == 0, "posterior mean vs Monte Carlo on 20 cases, worst |z| " + fmt(worst, 3));

  // the shipped denoisers on the default ring, 1e4 perturbed samples
  const auto cfg = config("default.json");
  const Dataset data = make_dataset(cfg.dataset);
  auto oracle = std::make_shared<GmmOracle>("oracle", *data.gmm, 10.0);
  const double level = cfg.roster_spec("small").level;
  std::vector<std::shared_ptr<const Denoiser>> rivals{
      degrade_oracle(*oracle, level, DegradeMode::BlurResponsibilities, "blur"),
      degrade_oracle(*oracle, level, DegradeMode::BiasNoise, "bias-noise")};
  for (const char* name : {"trained_small.json", "finetune_interval.json"}) {
    for (const auto& r : config(name).roster) {
      if (!r.train) continue;
      Rng train_rng(Rng::derive(4, r.id));
      rivals.push_back(std::shared_ptr<const Denoiser>(train_denoiser(data.sampler, data.shape, 0, *r.train, train_rng, r.id).model));
    }
  }

  Rng eval_rng(5);
  const std::size_t n = 10000;
  const Matrix clean = data.gmm->sample(n, eval_rng);
  Matrix noisy = clean;
  std::vector<double> sigmas(n);
  for (std::size_t i = 0; i < n; ++i) {
    sigmas[i] = std::exp(std::log(0.01) + (std::log(10.0) - std::log(0.01)) * eval_rng.uniform());
    for (Eigen::Index j = 0; j < noisy.cols(); ++j) noisy(static_cast<Eigen::Index>(i), j) += sigmas[i] * eval_rng.normal();
  }
  const double oracle_mse = denoising_mse(*oracle, clean, noisy, sigmas);
  double best_rival = std::numeric_limits<double>::infinity();
  std::string best_id;
  for (const auto& d : rivals) {
    const double m = denoising_mse(*d, clean, noisy, sigmas);
    if (m < best_rival) best_rival = m, best_id = d->id();
  }
  o.check(oracle_mse <= best_rival, "oracle MSE " + fmt(oracle_mse) + " vs best rival " + best_id + " " + fmt(best_rival));
  return o;
}

// ---------------------------------------------------------------- 3

Outcome sampler_convergence() {
  Outcome o;
  Roster roster;
  roster["oracle"] = std::make_shared<GmmOracle>("oracle", GmmParams::standard_normal(1), 10.0);
  const auto target = tstitch::testing::normal_quantile_grid(10000);
  const std::vector<int> ladder{5, 10, 25, 50, 100};
  for (auto kind : {SamplerKind::Ddim, SamplerKind::Ddpm, SamplerKind::DpmSolverPp2m}) {
    const std::string name = to_string(kind);
    const Matrix x = sample(StitchSchedule::single("oracle"), roster, SamplerConfig::make(kind, 100), 10000, 7).samples.data;
    const double mean = x.mean();
    const double var = (x.array() - mean).square().sum() / static_cast<double>(x.rows() - 1);
    o.check(std::abs(mean) <= 0.05 && var >= 0.9 && var <= 1.1, name + " T=100 mean " + fmt(mean, 3) + " var " + fmt(var));

    std::vector<double> m, se;
    for (int T : ladder) {
      std::vector<double> per_seed;
      for (std::uint64_t seed = 0; seed < 5; ++seed) {
        const Matrix s = sample(StitchSchedule::single("oracle"), roster, SamplerConfig::make(kind, T), 4096, 100 + seed).samples.data;
        per_seed.push_back(sliced_wasserstein(s, target, 1, 0).value);
      }
      m.push_back(mean_of(per_seed));
      se.push_back(std_error_of(per_seed));
    }
    bool monotone = true;
    std::string trace;
    for (std::size_t i = 0; i < ladder.size(); ++i) {
      trace += (i ? " " : "") + fmt(m[i], 3);
      if (i && m[i] > m[i - 1] + 2 * std::hypot(se[i], se[i - 1])) monotone = false;
    }
    o.check(monotone, name + " SW over T{5..100}: " + trace);
  }
  return o;
}

// ---------------------------------------------------------------- 4, 5

Outcome headline_trend() {
  Outcome o;
  const auto c = config("default.json");
  const Dataset data = make_dataset(c.dataset);
  const Roster roster = build_roster(c, data, OutputLayout{fresh("c4")});
  const int T = c.sampler.steps();
  const auto stitched = make_plan(parse_schedule_literal("small:0.4,large:0.6"), roster, T);
  const auto oracle = make_plan(StitchSchedule::single("large"), roster, T);
  const auto qs = measure_plan(stitched, c, data).per_seed[0];
  const auto qo = measure_plan(oracle, c, data).per_seed[0];
  const double ratio = median_of(qs) / median_of(qo);
  const double cost = declared_cost(stitched, c.sampler) / declared_cost(oracle, c.sampler);
  o.check(ratio <= 1.15, "SW ratio (median of 5 seeds) " + fmt(ratio));
  o.check(cost <= 0.65, "declared cost ratio " + fmt(cost));
  return o;
}

Outcome baseline_ordering() {
  Outcome o;
  const auto c = config("default.json");
  const Dataset data = make_dataset(c.dataset);
  const Roster roster = build_roster(c, data, OutputLayout{fresh("c5")});
  const int T = c.sampler.steps();
  std::map<std::string, std::vector<double>> q;
  q["small-to-large"] = measure_plan(make_plan(parse_schedule_literal("small:0.5,large:0.5"), roster, T), c, data).per_seed[0];
  for (const auto& [assignment, label] : sweep_baselines(c)) {
    q[label] = measure_plan(make_plan(assignment, roster), c, data).per_seed[0];
  }
  int wins = 0;
  for (std::size_t s = 0; s < c.seeds.size(); ++s) wins += q["small-to-large"][s] < q["large-to-small"][s];
  o.check(wins >= 4, "small-to-large beats large-to-small in " + std::to_string(wins) + "/5 seeds");
  std::string report;
  for (const auto& [label, v] : q) report += (report.empty() ? "" : ", ") + label + " " + fmt(mean_of(v));
  o.check(true, "mean SW: " + report);
  return o;
}

// ---------------------------------------------------------------- 6

std::size_t brute_force_best(const LookupTable& t, double budget) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < t.rows.size(); ++i) {
    const auto& r = t.rows[i];
    if (r.total_cost > budget) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& b = t.rows[*best];
    const double q = t.oriented(*r.quality), qb = t.oriented(*b.quality);
    if (q > qb || (q == qb && r.total_cost < b.total_cost)) best = i;
  }
  return best.value();
}

std::set<std::size_t> brute_force_feasible(const LookupTable& t, double budget) {
  std::set<std::size_t> out;
  for (const auto& r : t.rows) {
    if (schedule_cost(r.schedule, t.roster, t.steps, t.guidance_multiplier) <= budget) out.insert(r.index);
  }
  return out;
}

bool agrees(const LookupTable& t, double budget) {
  std::set<std::size_t> got;
  for (const auto& r : query_budget(t, budget)) got.insert(r.index);
  const auto want = brute_force_feasible(t, budget);
  if (got != want) return false;
  if (want.empty()) return true;
  return !t.all_measured() || select_best(t, budget).index == brute_force_best(t, budget);
}

Outcome allocator_equivalence() {
  Outcome o;
  Rng rng(6);
  int mismatches = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<RosterCost> roster;
    const std::size_t k = 1 + rng.index(3);
    for (std::size_t i = 0; i < k; ++i) roster.push_back({"d" + std::to_string(i), 0.5 + 10 * rng.uniform()});
    LookupTable t = build_lookup(roster, 1 + static_cast<int>(rng.index(10)), 10 + static_cast<int>(rng.index(90)));
    t.lower_is_better = rng.bernoulli(0.5);
    for (auto& r : t.rows) r.quality = std::round(rng.uniform() * 8) / 8;
    for (int b = 0; b < 5; ++b) mismatches += !agrees(t, 1 + rng.uniform() * t.steps * 12);
  }
  o.check(mismatches == 0, "100 random tables x 5 budgets: " + std::to_string(mismatches) + " mismatches");

  const auto worked = build_lookup({{"S", 1.0}, {"XL", 10.0}}, 10, 100);
  const auto rows = query_budget(worked, 550.0);
  o.check(rows.size() == 6 && rows.front().total_cost == 550.0, "budget 550 gives " + std::to_string(rows.size()) + " rows");

  const LookupTable measured = load_lookup((OutputLayout{*g_default_sweep}.tables() / "lookup.csv").string());
  int measured_mismatches = 0;
  for (double b = 100.0; b <= 1000.0; b += 10.0) measured_mismatches += !agrees(measured, b);
  o.check(measured.all_measured() && measured_mismatches == 0,
          "measured default table, 91 budgets: " + std::to_string(measured_mismatches) + " mismatches");
  return o;
}

// ---------------------------------------------------------------- 7

Outcome similarity_trend() {
  Outcome o;
  auto c = config("trained_small.json");
  const OutputLayout out{fresh("c7")};
  std::ostringstream log;
  cmd_train(c, out, log);
  const int T = c.sampler.steps(), w = T / 5;
  int wins = 0;
  std::string trace;
  for (std::uint64_t rep = 0; rep < 10; ++rep) {
    c.seed = rep;
    const auto res = cmd_analyze(c, out, AnalyzeMode::Similarity);
    const auto& p = res.similarity.front();
    const double early = p.mean_over(0, w), late = p.mean_over(T - w, T);
    wins += early > late;
    if (rep < 3) trace += " " + fmt(early, 3) + "/" + fmt(late, 3);
  }
  o.check(wins >= 9, "early > late in " + std::to_string(wins) + "/10 replicates (early/late:" + trace + " ...)");
  return o;
}

// ---------------------------------------------------------------- 8

Outcome spectrum_trend() {
  Outcome o;
  const auto c = config("blob_images.json");
  const auto res = cmd_analyze(c, OutputLayout{fresh("c8")}, AnalyzeMode::Spectrum);
  const auto& p = res.spectra.front();
  const int T = c.sampler.steps();
  const auto low = p.change_progress(1);
  const auto high = p.change_progress(p.n_bins);
  const double low_half = low[static_cast<std::size_t>(T / 2)];
  const double high_late = 1.0 - high[static_cast<std::size_t>(std::lround(0.7 * T))];
  o.check(low_half >= 0.7, "lowest annulus progress at half-way " + fmt(low_half, 3));
  o.check(high_late >= 0.5, "highest annulus change in the last 30% " + fmt(high_late, 3));
  o.check(p.max_parseval_error <= 1e-6, "max Parseval error " + fmt(p.max_parseval_error, 2));
  return o;
}

// ---------------------------------------------------------------- 9

Outcome interval_finetuning() {
  Outcome o;
  const auto c = config("finetune_interval.json");
  const OutputLayout out{fresh("c9")};
  std::ostringstream log;
  cmd_train(c, out, log);
  const auto res = cmd_finetune_interval(c, out, c.finetune.schedule, log);
  std::map<std::string, std::vector<double>> q;
  for (const auto& v : res.variants) q[v.variant] = v.per_seed;
  const auto& pre = q.at("pretrained");
  const auto& all = q.at("finetuned-all");
  const auto& itv = q.at("finetuned-interval");
  int wins = 0;
  std::vector<double> diff;
  for (std::size_t s = 0; s < pre.size(); ++s) {
    wins += itv[s] < pre[s];
    diff.push_back(itv[s] - all[s]);
  }
  o.check(wins >= 4, "interval beats pretrained in " + std::to_string(wins) + "/" + std::to_string(pre.size()) + " seeds (" +
                         fmt(mean_of(itv)) + " vs " + fmt(mean_of(pre)) + ")");
  const double gap = mean_of(diff), se = std_error_of(diff);
  o.check(gap <= 2 * se || gap <= 0.0,
          "interval minus all-timesteps " + fmt(gap, 3) + " (2 SE " + fmt(2 * se, 3) + ", all " + fmt(mean_of(all)) + ")");
  return o;
}

// ---------------------------------------------------------------- 10

Outcome determinism_and_cost() {
  Outcome o;
  const auto second = default_sweep(fresh("default_sweep_b"));
  bool identical = true;
  for (const char* f : {"lookup.csv", "lookup.csv.json", "baselines.csv", "frontier.csv"}) {
    identical = identical && slurp(OutputLayout{*g_default_sweep}.tables() / f) == slurp(OutputLayout{second}.tables() / f);
  }
  o.check(identical, "sweep rerun byte-identical");

  const LookupTable t = load_lookup((OutputLayout{second}.tables() / "lookup.csv").string());
  int cost_errors = 0;
  for (const auto& r : t.rows) {
    double per_step = 0.0, by_steps = 0.0;
    for (const auto& seg : r.schedule.segments) {
      for (const auto& rc : t.roster) {
        if (rc.id == seg.denoiser_id) per_step += seg.fraction * rc.cost;
      }
    }
    for (const auto& range : partition_steps(r.schedule, t.steps).ranges) {
      for (const auto& rc : t.roster) {
        if (rc.id == range.denoiser_id) by_steps += range.length() * rc.cost;
      }
    }
    const double formula = t.steps * per_step * t.guidance_multiplier;
    // exact against the formula; the per-step sum differs only by rounding (819.9999999999999 vs 820)
    if (r.total_cost != formula || std::abs(r.total_cost - by_steps * t.guidance_multiplier) > 1e-12 * formula) ++cost_errors;
  }
  o.check(cost_errors == 0, "declared cost = T * sum r_k C_k on every row (" + std::to_string(cost_errors) + " errors)");

  auto c = config("default.json");
  c.emulated_work_per_cost = 1000;
  c.benchmark.chains = 2048;
  std::ostringstream log;
  const auto rows = cmd_benchmark(c, OutputLayout{fresh("c10_bench")}, log);
  bool monotone = true;
  std::string trace;
  for (std::size_t i = 0; i < rows.size(); ++i) {
    trace += (i ? " " : "") + fmt(rows[i].report.wall_clock_s, 3);
    // rows run from r_small = 0 to 1
    if (i && !(rows[i].report.wall_clock_s < rows[i - 1].report.wall_clock_s)) monotone = false;
  }
  o.check(monotone, "median wall clock by r_small: " + trace + " s");
  return o;
}

struct Criterion {
  int id;
  const char* name;
  double limit_s;
  std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
  const std::vector<Criterion> all{
      {1, "schedule arithmetic", 10, schedule_arithmetic},
      {2, "oracle correctness", 120, oracle_correctness},
      {3, "sampler convergence", 180, sampler_convergence},
      {4, "stitched schedule near oracle quality at lower cost", 300, headline_trend},
      {5, "small-to-large ordering", 300, baseline_ordering},
      {6, "allocator equivalence", 10, allocator_equivalence},
      {7, "similarity trend", 180, similarity_trend},
      {8, "spectrum trend", 300, spectrum_trend},
      {9, "interval finetuning", 900, interval_finetuning},
      {10, "determinism and cost accounting", 600, determinism_and_cost},
  };
  std::set<int> only;
  for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
  int failures = 0;
  if (only.empty() || only.count(6) || only.count(10)) {
    const auto start = std::chrono::steady_clock::now();
    g_default_sweep = default_sweep(fresh("default_sweep_a"));
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    std::printf("setup: default sweep measured in %s s\n", fmt(elapsed, 3).c_str());
  }
  for (const auto& c : all) {
    if (!only.empty() && !only.count(c.id)) continue;
    const auto start = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o.check(false, std::string("exception: ") + e.what());
    }
    const double elapsed = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    o.check(elapsed <= c.limit_s, "runtime " + fmt(elapsed, 3) + " s (limit " + fmt(c.limit_s, 3) + " s)");
    std::printf("%s criterion %d (%s): %s\n", o.pass ? "PASS" : "FAIL", c.id, c.name, o.detail.c_str());
    std::fflush(stdout);
    failures += !o.pass;
  }
  return failures == 0 ? 0 : 1;
}
