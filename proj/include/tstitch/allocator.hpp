// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Budget allocation over enumerated stitch schedules:
//   maximize quality(r_1..r_K)  subject to  T * sum_k r_k C_k * m <= C_R,  sum_k r_k = 1
// solved exactly by scanning a precomputed lookup table.

#pragma once

#include "tstitch/csv.hpp"
#include "tstitch/stitch.hpp"

#include "json.hpp"

#include <fstream>
#include <optional>
#include <sstream>

namespace tstitch {

struct RosterCost {
  std::string id;
  double cost = 0.0;  // C_k, declared cost per evaluation
  bool operator==(const RosterCost&) const = default;
};

struct LookupRow {
  std::size_t index = 0;
  StitchSchedule schedule;
  double total_cost = 0.0;
  std::optional<double> quality;  // raw metric value
  std::optional<double> wall_clock_s;
  std::optional<std::string> error;
};

struct LookupTable {
  std::vector<LookupRow> rows;
  std::vector<RosterCost> roster;
  int granularity = 10;
  int steps = 100;
  int guidance_multiplier = 1;
  std::string quality_metric = "sliced-wasserstein";
  bool lower_is_better = true;

  /// Quality with orientation applied, so larger is always better.
  double oriented(double raw) const { return lower_is_better ? -raw : raw; }

  bool all_measured() const {
    return std::all_of(rows.begin(), rows.end(), [](const LookupRow& r) { return r.quality.has_value(); });
  }
};

/// T * sum_k r_k C_k * guidance multiplier.
inline double schedule_cost(const StitchSchedule& s, const std::vector<RosterCost>& roster, int steps, int multiplier) {
  double per_step = 0.0;
  for (const auto& seg : s.segments) {
    auto it = std::find_if(roster.begin(), roster.end(), [&](const RosterCost& r) { return r.id == seg.denoiser_id; });
    if (it == roster.end()) throw DomainError("schedule names unknown denoiser '" + seg.denoiser_id + "'");
    per_step += seg.fraction * it->cost;
  }
  return static_cast<double>(steps) * per_step * static_cast<double>(multiplier);
}

inline LookupTable build_lookup(const std::vector<RosterCost>& roster, int granularity, int steps,
                                int guidance_multiplier = 1) {
  if (roster.empty()) throw DomainError("lookup table needs a nonempty roster");
  for (const auto& r : roster) {
    if (!(r.cost > 0.0)) throw DomainError("roster cost for '" + r.id + "' must be positive");
  }
  if (guidance_multiplier != 1 && guidance_multiplier != 2) throw DomainError("guidance multiplier must be 1 or 2");
  LookupTable t;
  t.roster = roster;
  t.granularity = granularity;
  t.steps = steps;
  t.guidance_multiplier = guidance_multiplier;
  std::vector<std::string> ids;
  for (const auto& r : roster) ids.push_back(r.id);
  std::size_t index = 0;
  for (auto& s : enumerate_configs(ids, granularity)) {
    LookupRow row;
    row.index = index++;
    row.total_cost = schedule_cost(s, roster, steps, guidance_multiplier);
    row.schedule = std::move(s);
    t.rows.push_back(std::move(row));
  }
  return t;
}

/// Rows with total_cost <= budget. Ordered by quality (best first) when every
/// feasible row is measured, otherwise by total_cost descending; ties by row index.
inline std::vector<LookupRow> query_budget(const LookupTable& table, double budget) {
  if (!(budget > 0.0)) throw DomainError("budget must be positive");
  std::vector<LookupRow> out;
  for (const auto& r : table.rows) {
    if (r.total_cost <= budget) out.push_back(r);
  }
  const bool by_quality = !out.empty() && std::all_of(out.begin(), out.end(), [](const LookupRow& r) { return r.quality.has_value(); });
  std::stable_sort(out.begin(), out.end(), [&](const LookupRow& a, const LookupRow& b) {
    if (by_quality) {
      const double qa = table.oriented(*a.quality), qb = table.oriented(*b.quality);
      if (qa != qb) return qa > qb;
    } else if (a.total_cost != b.total_cost) {
      return a.total_cost > b.total_cost;
    }
    return a.index < b.index;
  });
  return out;
}

/// Best feasible row; ties go to the cheaper row, then the lower index.
inline LookupRow select_best(const LookupTable& table, double budget) {
  if (!(budget > 0.0)) throw DomainError("budget must be positive");
  if (!table.all_measured()) throw DomainError("select_best needs quality measured on every row");
  const LookupRow* best = nullptr;
  for (const auto& r : table.rows) {
    if (r.total_cost > budget) continue;
    if (!best) {
      best = &r;
      continue;
    }
    const double q = table.oriented(*r.quality), qb = table.oriented(*best->quality);
    if (q > qb || (q == qb && (r.total_cost < best->total_cost || (r.total_cost == best->total_cost && r.index < best->index)))) {
      best = &r;
    }
  }
  if (!best) throw NoFeasibleScheduleError("no schedule fits the budget " + format_double(budget));
  return *best;
}

// ---------------------------------------------------------------- persistence

inline std::vector<std::string> lookup_header(std::size_t k) {
  std::vector<std::string> h{"schedule"};
  for (std::size_t i = 1; i <= k; ++i) h.push_back("r_" + std::to_string(i));
  for (const char* c : {"total_cost", "quality", "quality_metric", "wall_clock_s", "error"}) h.emplace_back(c);
  return h;
}

inline std::vector<std::string> lookup_fields(const LookupTable& t, const LookupRow& r) {
  std::vector<std::string> f{r.schedule.label.empty() ? to_literal(r.schedule) : r.schedule.label};
  for (const auto& seg : r.schedule.segments) f.push_back(format_double(seg.fraction));
  f.push_back(format_double(r.total_cost));
  f.push_back(r.quality ? format_double(*r.quality) : "");
  f.push_back(t.quality_metric);
  f.push_back(r.wall_clock_s ? format_double(*r.wall_clock_s) : "");
  f.push_back(r.error.value_or(""));
  return f;
}

inline void write_lookup_csv(std::ostream& out, const LookupTable& t) {
  csv::write_row(out, lookup_header(t.roster.size()));
  for (const auto& r : t.rows) csv::write_row(out, lookup_fields(t, r));
}

inline nlohmann::json lookup_sidecar(const LookupTable& t) {
  nlohmann::json j;
  j["roster"] = nlohmann::json::array();
  for (const auto& r : t.roster) j["roster"].push_back({{"id", r.id}, {"cost", format_double(r.cost)}});
  j["steps"] = t.steps;
  j["granularity"] = t.granularity;
  j["guidance_multiplier"] = t.guidance_multiplier;
  j["quality_metric"] = t.quality_metric;
  j["lower_is_better"] = t.lower_is_better;
  return j;
}

/// Table CSV at `csv_path` plus a JSON sidecar (roster, T, ...) at `csv_path + ".json"`.
inline void save_lookup(const LookupTable& t, const std::string& csv_path) {
  {
    std::ofstream f(csv_path, std::ios::trunc);
    if (!f) throw IoError("cannot write '" + csv_path + "'");
    write_lookup_csv(f, t);
  }
  std::ofstream s(csv_path + ".json", std::ios::trunc);
  if (!s) throw IoError("cannot write '" + csv_path + ".json'");
  s << lookup_sidecar(t).dump(2) << '\n';
}

inline LookupTable parse_lookup(std::istream& csv_in, const nlohmann::json& side) {
  LookupTable t;
  for (const auto& r : side.at("roster")) t.roster.push_back({r.at("id").get<std::string>(), parse_double(r.at("cost").get<std::string>())});
  t.steps = side.at("steps").get<int>();
  t.granularity = side.at("granularity").get<int>();
  t.guidance_multiplier = side.at("guidance_multiplier").get<int>();
  t.quality_metric = side.at("quality_metric").get<std::string>();
  t.lower_is_better = side.at("lower_is_better").get<bool>();
  const auto rows = csv::read_all(csv_in);
  const std::size_t k = t.roster.size();
  if (rows.empty() || rows.front() != lookup_header(k)) throw ParseError("lookup CSV header does not match the roster");
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const auto& f = rows[i];
    if (f.size() != k + 6) throw ParseError("lookup CSV row " + std::to_string(i) + " has the wrong field count");
    LookupRow row;
    row.index = i - 1;
    for (std::size_t s = 0; s < k; ++s) row.schedule.segments.push_back({t.roster[s].id, parse_double(f[1 + s])});
    row.schedule.label = f[0];
    row.total_cost = parse_double(f[k + 1]);
    if (!f[k + 2].empty()) row.quality = parse_double(f[k + 2]);
    if (!f[k + 4].empty()) row.wall_clock_s = parse_double(f[k + 4]);
    if (!f[k + 5].empty()) row.error = f[k + 5];
    t.rows.push_back(std::move(row));
  }
  return t;
}

inline LookupTable load_lookup(const std::string& csv_path) {
  std::ifstream s(csv_path + ".json");
  if (!s) throw IoError("missing lookup sidecar '" + csv_path + ".json'");
  const auto side = nlohmann::json::parse(s);
  std::ifstream f(csv_path);
  if (!f) throw IoError("cannot read '" + csv_path + "'");
  return parse_lookup(f, side);
}

}  // namespace tstitch
