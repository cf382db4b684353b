// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Stitch schedules: which denoiser handles which contiguous block of
// sampling steps. Segment 0 runs first, at the highest noise levels.

#pragma once

#include "tstitch/core.hpp"

#include <optional>
#include <sstream>

namespace tstitch {

struct Segment {
  std::string denoiser_id;
  double fraction = 0.0;
  bool operator==(const Segment&) const = default;
};

struct StitchSchedule {
  std::vector<Segment> segments;
  std::string label;

  void validate() const {
    if (segments.empty()) throw DomainError("stitch schedule has no segments");
    double total = 0.0;
    for (const auto& s : segments) {
      if (s.denoiser_id.empty()) throw DomainError("stitch segment has an empty denoiser id");
      if (!(s.fraction >= 0.0 && s.fraction <= 1.0)) {
        throw DomainError("segment fraction " + format_double(s.fraction) + " outside [0, 1]");
      }
      total += s.fraction;
    }
    if (std::abs(total - 1.0) > 1e-9) throw DomainError("segment fractions sum to " + format_double(total) + ", not 1");
  }

  /// Fraction assigned to `id`, summed over segments.
  double fraction_of(const std::string& id) const {
    double f = 0.0;
    for (const auto& s : segments) {
      if (s.denoiser_id == id) f += s.fraction;
    }
    return f;
  }

  static StitchSchedule single(const std::string& id) { return {{{id, 1.0}}, id + ":1"}; }
};

/// "small:0.4,large:0.6". Whitespace around tokens is not allowed.
inline std::string to_literal(const StitchSchedule& s) {
  std::string out;
  for (std::size_t i = 0; i < s.segments.size(); ++i) {
    if (i) out += ',';
    out += s.segments[i].denoiser_id + ':' + format_double(s.segments[i].fraction);
  }
  return out;
}

inline StitchSchedule parse_schedule_literal(std::string_view text) {
  StitchSchedule s;
  if (text.empty()) throw ParseError("empty schedule literal");
  std::size_t start = 0;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string_view token = text.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start);
    const std::size_t colon = token.find(':');
    if (colon == std::string_view::npos || colon == 0 || colon + 1 == token.size() ||
        token.find(':', colon + 1) != std::string_view::npos) {
      throw ParseError("bad schedule segment '" + std::string(token) + "' (expected id:fraction)");
    }
    const std::string id(token.substr(0, colon));
    for (char c : id) {
      if (std::isspace(static_cast<unsigned char>(c))) throw ParseError("whitespace in schedule id '" + id + "'");
    }
    s.segments.push_back({id, parse_double(token.substr(colon + 1))});
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  try {
    s.validate();
  } catch (const DomainError& e) {
    throw ParseError(std::string("invalid schedule literal: ") + e.what());
  }
  s.label = std::string(text);
  return s;
}

struct StepRange {
  std::string denoiser_id;
  int start = 0;  // inclusive, sampling order (0 = sigma_max side)
  int end = 0;    // exclusive
  int length() const { return end - start; }
  bool operator==(const StepRange&) const = default;
};

struct StepPartition {
  std::vector<StepRange> ranges;
  int steps = 0;

  /// Denoiser id for every sampling step.
  std::vector<std::string> assignment() const {
    std::vector<std::string> out(static_cast<std::size_t>(steps));
    for (const auto& r : ranges) {
      for (int s = r.start; s < r.end; ++s) out[static_cast<std::size_t>(s)] = r.denoiser_id;
    }
    return out;
  }
};

/// Segment k covers [b_{k-1}, b_k) with b_k = round(cumulative fraction * T),
/// rounding half away from zero; the last boundary is T. Empty ranges are dropped.
inline StepPartition partition_steps(const StitchSchedule& schedule, int steps) {
  schedule.validate();
  if (steps < 1) throw DomainError("partition needs T >= 1");
  StepPartition p;
  p.steps = steps;
  double cumulative = 0.0;
  int prev = 0;
  for (std::size_t k = 0; k < schedule.segments.size(); ++k) {
    cumulative += schedule.segments[k].fraction;
    int boundary = k + 1 == schedule.segments.size()
                       ? steps
                       : static_cast<int>(round_half_away(cumulative * static_cast<double>(steps)));
    boundary = std::clamp(boundary, prev, steps);
    if (boundary > prev) p.ranges.push_back({schedule.segments[k].denoiser_id, prev, boundary});
    prev = boundary;
  }
  return p;
}

namespace detail {
inline void compositions(int remaining, std::size_t k, std::vector<int>& parts, std::vector<std::vector<int>>& out) {
  if (k + 1 == parts.size()) {
    parts[k] = remaining;
    out.push_back(parts);
    return;
  }
  for (int v = 0; v <= remaining; ++v) {
    parts[k] = v;
    compositions(remaining - v, k + 1, parts, out);
  }
}
}  // namespace detail

/// Every (r_1..r_K) on the 1/g grid with sum 1, in lexicographic order of
/// (r_1, r_2, ...). There are C(g + K - 1, K - 1) of them.
inline std::vector<StitchSchedule> enumerate_configs(const std::vector<std::string>& ids, int granularity) {
  if (ids.empty()) throw DomainError("enumeration needs at least one denoiser");
  if (granularity < 1) throw DomainError("granularity must be >= 1");
  std::vector<std::vector<int>> parts_list;
  std::vector<int> parts(ids.size(), 0);
  detail::compositions(granularity, 0, parts, parts_list);
  std::vector<StitchSchedule> out;
  out.reserve(parts_list.size());
  for (const auto& parts_k : parts_list) {
    StitchSchedule s;
    for (std::size_t k = 0; k < ids.size(); ++k) {
      s.segments.push_back({ids[k], static_cast<double>(parts_k[k]) / static_cast<double>(granularity)});
    }
    s.label = to_literal(s);
    out.push_back(std::move(s));
  }
  return out;
}

enum class BaselineKind { SmallToLarge, LargeToSmall, Interleave, DecreasingProb };

inline std::string to_string(BaselineKind k) {
  switch (k) {
    case BaselineKind::SmallToLarge: return "small-to-large";
    case BaselineKind::LargeToSmall: return "large-to-small";
    case BaselineKind::Interleave: return "interleave";
    case BaselineKind::DecreasingProb: return "decreasing-prob";
  }
  return "?";
}

inline BaselineKind baseline_kind_from_string(std::string_view s) {
  if (s == "small-to-large") return BaselineKind::SmallToLarge;
  if (s == "large-to-small") return BaselineKind::LargeToSmall;
  if (s == "interleave") return BaselineKind::Interleave;
  if (s == "decreasing-prob") return BaselineKind::DecreasingProb;
  throw ParseError("unknown baseline '" + std::string(s) + "'");
}

struct BaselineAssignment {
  BaselineKind kind;
  std::vector<std::string> steps;  // denoiser id per sampling step
  std::optional<std::string> warning;

  double usage_of(const std::string& id) const {
    if (steps.empty()) return 0.0;
    return static_cast<double>(std::count(steps.begin(), steps.end(), id)) / static_cast<double>(steps.size());
  }
};

/// Per-step assignment for the ordering baselines. interleave and
/// decreasing-prob fix their own 50/50 usage; a different fraction_small is
/// reported as a warning and otherwise ignored.
inline BaselineAssignment baseline_schedule(BaselineKind kind, const std::string& small_id, const std::string& large_id,
                                            double fraction_small, int steps, Rng* rng = nullptr) {
  if (!(fraction_small >= 0.0 && fraction_small <= 1.0)) throw DomainError("fraction_small must lie in [0, 1]");
  if (steps < 1) throw DomainError("baseline needs T >= 1");
  BaselineAssignment a{kind, {}, {}};
  switch (kind) {
    case BaselineKind::SmallToLarge:
      a.steps = partition_steps({{{small_id, fraction_small}, {large_id, 1.0 - fraction_small}}, ""}, steps).assignment();
      break;
    case BaselineKind::LargeToSmall:
      a.steps = partition_steps({{{large_id, 1.0 - fraction_small}, {small_id, fraction_small}}, ""}, steps).assignment();
      break;
    case BaselineKind::Interleave:
      for (int s = 0; s < steps; ++s) a.steps.push_back(s % 2 == 0 ? small_id : large_id);
      break;
    case BaselineKind::DecreasingProb: {
      if (!rng) throw DomainError("decreasing-prob needs a random source");
      for (int s = 0; s < steps; ++s) {
        const double p = steps == 1 ? 0.5 : 1.0 - static_cast<double>(s) / static_cast<double>(steps - 1);
        a.steps.push_back(rng->bernoulli(p) ? small_id : large_id);
      }
      break;
    }
  }
  if ((kind == BaselineKind::Interleave || kind == BaselineKind::DecreasingProb) && fraction_small != 0.5) {
    a.warning = to_string(kind) + " fixes small-model usage at 0.5; fraction_small=" + format_double(fraction_small) +
                " ignored";
  }
  return a;
}

}  // namespace tstitch
