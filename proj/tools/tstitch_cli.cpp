// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// tstitch: train denoisers, sweep stitch schedules, pick one under a budget,
// and run the similarity / spectrum / finetuning / timing experiments.
//
// Exit codes: 0 ok, 2 usage or config error, 3 infeasible budget, 4 runtime failure.

#include "tstitch/experiment.hpp"

#include "CLI11.hpp"

#include <iostream>

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitInfeasible = 3;
constexpr int kExitRuntime = 4;

struct Globals {
  std::string config_path;
  std::string out;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> workers;
  std::string format = "csv";
};

tstitch::ExperimentConfig load(const Globals& g) {
  if (g.config_path.empty()) throw tstitch::ConfigError("--config is required for this command");
  auto c = tstitch::load_config(g.config_path);
  if (g.seed) {
    c.seed = *g.seed;
    c.raw["seed"] = *g.seed;
  }
  if (g.workers) {
    if (*g.workers == 0) throw tstitch::ConfigError("--workers must be >= 1");
    c.workers = *g.workers;
  }
  return c;
}

tstitch::OutputLayout layout(const Globals& g, const tstitch::ExperimentConfig& c) {
  return tstitch::OutputLayout{g.out.empty() ? c.output : g.out};
}

nlohmann::json row_json(const tstitch::LookupRow& r) {
  nlohmann::json j{{"index", r.index}, {"schedule", r.schedule.label}, {"total_cost", r.total_cost}};
  j["quality"] = r.quality ? nlohmann::json(*r.quality) : nlohmann::json(nullptr);
  return j;
}

void print_rows(std::ostream& out, const std::vector<tstitch::LookupRow>& rows, const std::string& format) {
  if (format == "json") {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows) arr.push_back(row_json(r));
    out << arr.dump(2) << '\n';
    return;
  }
  tstitch::csv::write_row(out, {"index", "schedule", "total_cost", "quality"});
  for (const auto& r : rows) {
    tstitch::csv::write_row(out, {std::to_string(r.index), r.schedule.label, tstitch::format_double(r.total_cost),
                                  r.quality ? tstitch::format_double(*r.quality) : ""});
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Trajectory stitching lab: mix cheap and expensive denoisers along one sampling trajectory"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "Experiment config (JSON)");
  app.add_option("--out", g.out, "Output directory (overrides the config)");
  app.add_option("--seed", g.seed, "Experiment seed (overrides the config)");
  app.add_option("--workers", g.workers, "Worker threads (overrides the config)");
  app.add_option("--format", g.format, "Report format on stdout")->check(CLI::IsMember({"csv", "json"}));

  auto* train = app.add_subcommand("train", "Train the mlp roster entries and write checkpoints");
  auto* sweep = app.add_subcommand("sweep", "Measure every enumerated schedule; write lookup and frontier tables");

  auto* allocate = app.add_subcommand("allocate", "Pick the best schedule under a cost budget");
  std::string table_path;
  double budget = 0.0;
  allocate->add_option("--table", table_path, "Lookup table CSV (default <out>/tables/lookup.csv)");
  allocate->add_option("--budget", budget, "Cost budget C_R per trajectory")->required();

  auto* analyze = app.add_subcommand("analyze", "Per-step similarity or spectrum profiles");
  std::string mode = "similarity";
  analyze->add_option("--mode", mode, "similarity or spectrum")->check(CLI::IsMember({"similarity", "spectrum"}));

  auto* finetune = app.add_subcommand("finetune-interval", "Finetune stitched mlp denoisers on their noise interval");
  std::string schedule;
  finetune->add_option("--schedule", schedule, "Stitch literal, e.g. small:0.5,mlp:0.5 (default from config)");

  auto* bench = app.add_subcommand("benchmark", "Time every enumerated schedule");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitUsage;
  }

  try {
    if (allocate->parsed()) {
      std::string path = table_path;
      if (path.empty()) {
        std::string root = g.out;
        if (root.empty() && !g.config_path.empty()) root = load(g).output;
        if (root.empty()) throw tstitch::ConfigError("give --table, --out or --config");
        path = (std::filesystem::path(root) / "tables" / "lookup.csv").string();
      }
      const auto res = tstitch::cmd_allocate(path, budget);
      if (g.format == "json") {
        nlohmann::json j{{"chosen", row_json(res.chosen)}, {"feasible", nlohmann::json::array()}};
        for (const auto& r : res.feasible) j["feasible"].push_back(row_json(r));
        std::cout << j.dump(2) << '\n';
      } else {
        std::cout << "chosen," << tstitch::csv::quote(res.chosen.schedule.label) << '\n';
        print_rows(std::cout, res.feasible, g.format);
      }
      return 0;
    }

    const auto cfg = load(g);
    const auto out = layout(g, cfg);
    if (train->parsed()) {
      const auto res = tstitch::cmd_train(cfg, out);
      std::cout << "trained " << res.trained.size() << " denoiser(s) into " << out.checkpoints().string() << '\n';
    } else if (sweep->parsed()) {
      const auto res = tstitch::cmd_sweep(cfg, out);
      std::cerr << "computed " << res.computed_rows << " row(s), reused " << res.skipped_rows << '\n';
      print_rows(std::cout, res.table.rows, g.format);
      bool failed = false;
      for (const auto& r : res.table.rows) failed = failed || r.error.has_value();
      if (failed) {
        std::cerr << "some rows failed; see the error column of " << (out.tables() / "lookup.csv").string() << '\n';
        return kExitRuntime;
      }
    } else if (analyze->parsed()) {
      const auto res = tstitch::cmd_analyze(cfg, out, tstitch::analyze_mode_from_string(mode));
      for (const auto& f : res.files) std::cout << f.string() << '\n';
    } else if (finetune->parsed()) {
      const std::string lit = schedule.empty() ? cfg.finetune.schedule : schedule;
      if (lit.empty()) throw tstitch::ConfigError("no schedule: pass --schedule or set finetune.schedule");
      const auto res = tstitch::cmd_finetune_interval(cfg, out, lit);
      tstitch::csv::write_row(std::cout, {"variant", "mean_quality", "std_error"});
      for (const auto& v : res.variants) {
        tstitch::csv::write_row(std::cout, {v.variant, tstitch::format_double(tstitch::mean_of(v.per_seed)),
                                            tstitch::format_double(tstitch::std_error_of(v.per_seed))});
      }
    } else if (bench->parsed()) {
      const auto rows = tstitch::cmd_benchmark(cfg, out);
      tstitch::csv::write_row(std::cout, {"schedule", "declared_cost", "wall_clock_s"});
      for (const auto& r : rows) {
        tstitch::csv::write_row(std::cout, {r.row.schedule.label, tstitch::format_double(r.report.declared_cost),
                                            tstitch::format_double(r.report.wall_clock_s)});
      }
    }
    return 0;
  } catch (const tstitch::NoFeasibleScheduleError& e) {
    std::cerr << "infeasible: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const tstitch::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const tstitch::ParseError& e) {
    std::cerr << "parse error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const tstitch::UnsupportedDataError& e) {
    std::cerr << "unsupported data: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitRuntime;
  }
}
