// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Reverse-process steppers in sigma space and the stitched sampling loop.

#pragma once

#include "tstitch/denoiser.hpp"
#include "tstitch/stitch.hpp"

#include <cstring>
#include <fstream>
#include <map>
#include <span>

namespace tstitch {

enum class SamplerKind { Ddpm, Ddim, DpmSolverPp2m };

inline std::string to_string(SamplerKind k) {
  switch (k) {
    case SamplerKind::Ddpm: return "ddpm";
    case SamplerKind::Ddim: return "ddim";
    case SamplerKind::DpmSolverPp2m: return "dpm-solver-pp-2m";
  }
  return "?";
}

inline SamplerKind sampler_kind_from_string(std::string_view s) {
  if (s == "ddpm") return SamplerKind::Ddpm;
  if (s == "ddim") return SamplerKind::Ddim;
  if (s == "dpm-solver-pp-2m") return SamplerKind::DpmSolverPp2m;
  throw ParseError("unknown sampler '" + std::string(s) + "'");
}

struct SamplerConfig {
  SamplerKind kind = SamplerKind::Ddim;
  NoiseSchedule schedule = NoiseSchedule::karras(100);
  std::optional<GuidanceSpec> guidance;
  bool record_trajectory = false;
  /// Also keep each step's denoiser output in the trajectory.
  bool record_denoised = false;

  int steps() const { return schedule.steps(); }

  void validate() const {
    if (schedule.steps() < 1) throw DomainError("sampler needs steps >= 1");
    if (kind == SamplerKind::DpmSolverPp2m && schedule.steps() < 2) throw DomainError("dpm-solver-pp-2m needs steps >= 2");
    if (guidance) guidance->validate();
  }

  static SamplerConfig make(SamplerKind kind, int steps) {
    SamplerConfig c;
    c.kind = kind;
    c.schedule = NoiseSchedule::karras(steps);
    return c;
  }
};

namespace detail {
inline void check_step_order(double sigma_cur, double sigma_next) {
  if (!(sigma_next < sigma_cur) || sigma_next < 0.0) {
    throw OrderingError("step must move to a lower noise level (" + format_double(sigma_cur) + " -> " +
                        format_double(sigma_next) + ")");
  }
}
}  // namespace detail

/// Euler step of the probability-flow ODE in sigma:
///   d = (x - D) / sigma,  x' = x + (sigma_next - sigma) d.
/// This is DDIM with eta = 0 under the VP <-> VE change of variables.
inline LatentState ddim_step(const Matrix& denoised, const LatentState& x, double sigma_next) {
  detail::check_step_order(x.sigma, sigma_next);
  require_same_shape(denoised, x.data, "ddim_step");
  Matrix d = (x.data - denoised) / x.sigma;
  return LatentState(x.data + (sigma_next - x.sigma) * d, x.shape, sigma_next);
}

/// Ancestral (DDPM) step. Samples the VE forward-process posterior between
/// adjacent levels: drift deterministically to sigma_down = sigma_next^2 / sigma,
/// then add noise of std sigma_up = sigma_next * sqrt(sigma^2 - sigma_next^2) / sigma.
/// One row of noise is drawn from rngs[row]; a terminal step adds none.
inline LatentState ddpm_step(const Matrix& denoised, const LatentState& x, double sigma_next, std::span<Rng> rngs) {
  detail::check_step_order(x.sigma, sigma_next);
  require_same_shape(denoised, x.data, "ddpm_step");
  if (sigma_next == 0.0) return ddim_step(denoised, x, sigma_next);
  if (rngs.size() != static_cast<std::size_t>(x.batch()) && rngs.size() != 1) {
    throw ShapeError("ddpm_step needs one random stream per row (or a single shared one)");
  }
  const double s = x.sigma;
  const double sigma_up = sigma_next * std::sqrt(s * s - sigma_next * sigma_next) / s;
  const double sigma_down = sigma_next * sigma_next / s;
  Matrix out = x.data + (sigma_down - s) * ((x.data - denoised) / s);
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    Rng& rng = rngs.size() == 1 ? rngs[0] : rngs[static_cast<std::size_t>(r)];
    for (Eigen::Index j = 0; j < out.cols(); ++j) out(r, j) += sigma_up * rng.normal();
  }
  return LatentState(std::move(out), x.shape, sigma_next);
}

inline LatentState ddpm_step(const Matrix& denoised, const LatentState& x, double sigma_next, Rng& rng) {
  return ddpm_step(denoised, x, sigma_next, std::span<Rng>(&rng, 1));
}

/// DPM-Solver++(2M), data-prediction multistep form in lambda = -log sigma:
///   h = lambda_next - lambda,  r = (lambda - lambda_prev) / h
///   D' = (1 + 1/(2r)) D - 1/(2r) D_prev          (D' = D without history)
///   x' = (sigma_next / sigma) x - (exp(-h) - 1) D'
/// The first step and the step onto sigma = 0 are first order.
inline LatentState dpm_solver_pp_2m_step(const Matrix& denoised_cur, const Matrix* denoised_prev, const LatentState& x,
                                         double sigma_prev, double sigma_next) {
  detail::check_step_order(x.sigma, sigma_next);
  require_same_shape(denoised_cur, x.data, "dpm_solver_pp_2m_step");
  const double s = x.sigma;
  if (sigma_next == 0.0) return LatentState(denoised_cur, x.shape, 0.0);
  const double lambda = -std::log(s);
  const double lambda_next = -std::log(sigma_next);
  const double h = lambda_next - lambda;
  const double ratio = sigma_next / s;
  const double coef = -std::expm1(-h);  // 1 - sigma_next / sigma
  if (!denoised_prev) return LatentState(ratio * x.data + coef * denoised_cur, x.shape, sigma_next);
  require_same_shape(*denoised_prev, x.data, "dpm_solver_pp_2m_step");
  if (!(sigma_prev > s)) throw OrderingError("previous sigma must exceed the current one");
  const double r = (lambda - (-std::log(sigma_prev))) / h;
  const double a = 1.0 + 1.0 / (2.0 * r);
  const double b = 1.0 / (2.0 * r);
  Matrix corrected = a * denoised_cur - b * (*denoised_prev);
  return LatentState(ratio * x.data + coef * corrected, x.shape, sigma_next);
}

// ---------------------------------------------------------------- plans

/// The denoiser dispatched at every sampling step.
struct StepPlan {
  std::vector<DenoiserPtr> steps;
  std::string label;

  std::string id_at(std::size_t s) const { return steps.at(s)->id(); }
};

using Roster = std::map<std::string, DenoiserPtr>;

inline DenoiserPtr roster_get(const Roster& roster, const std::string& id) {
  auto it = roster.find(id);
  if (it == roster.end()) throw DomainError("denoiser '" + id + "' is not in the roster");
  return it->second;
}

inline StepPlan make_plan(const StitchSchedule& schedule, const Roster& roster, int steps) {
  StepPlan plan;
  plan.label = schedule.label.empty() ? to_literal(schedule) : schedule.label;
  for (const auto& id : partition_steps(schedule, steps).assignment()) plan.steps.push_back(roster_get(roster, id));
  return plan;
}

inline StepPlan make_plan(const BaselineAssignment& baseline, const Roster& roster) {
  StepPlan plan;
  plan.label = to_string(baseline.kind);
  for (const auto& id : baseline.steps) plan.steps.push_back(roster_get(roster, id));
  return plan;
}

// ---------------------------------------------------------------- trajectories

struct TrajectoryEntry {
  int t = 0;  // noise-ladder index of the state entering this step
  double sigma = 0.0;
  std::vector<double> latent;    // x_t entering the step
  std::vector<double> denoised;  // denoiser output (when recorded)
  std::string denoiser_id;
  std::uint64_t eval_count = 0;  // evaluations spent on this step
};

struct Trajectory {
  std::size_t chain = 0;
  SampleShape shape;
  std::vector<TrajectoryEntry> entries;  // one per sampling step, sigma decreasing
  std::vector<double> final_latent;      // state at sigma = 0
};

struct SampleOptions {
  std::size_t workers = 1;
  /// Chains per task; fixed so output does not depend on the worker count.
  std::size_t chunk = 256;
};

struct SampleResult {
  LatentState samples;
  std::vector<Trajectory> trajectories;  // one per chain when recorded
  CostLedger ledger;
  /// Declared cost of one trajectory: sum over steps of cost * evaluations per step.
  double declared_cost_per_chain = 0.0;
};

/// Run the reverse process from x_T ~ N(0, sigma_max^2 I).
/// Chain c draws its initial noise (and DDPM noise) from Rng(seed, c).
inline SampleResult sample(const StepPlan& plan, const SamplerConfig& cfg, std::size_t n_chains, std::uint64_t seed,
                           const SampleOptions& options = {}) {
  cfg.validate();
  const int steps = cfg.steps();
  if (plan.steps.size() != static_cast<std::size_t>(steps)) {
    throw ShapeError("plan covers " + std::to_string(plan.steps.size()) + " steps but the sampler runs " +
                     std::to_string(steps));
  }
  if (n_chains == 0) throw DomainError("need at least one chain");
  const SampleShape shape = plan.steps.front()->shape();
  for (const auto& d : plan.steps) {
    if (!(d->shape() == shape)) throw ShapeError("denoisers in one plan disagree on the data shape");
  }
  const auto dim = static_cast<Eigen::Index>(shape.size());

  SampleResult result;
  result.samples = LatentState(Matrix(static_cast<Eigen::Index>(n_chains), dim), shape, 0.0);
  if (cfg.record_trajectory) result.trajectories.resize(n_chains);
  const int mult = cfg.guidance ? cfg.guidance->multiplier() : 1;
  for (const auto& d : plan.steps) result.declared_cost_per_chain += d->cost_per_eval() * mult;

  const std::size_t chunk = std::max<std::size_t>(1, options.chunk);
  const std::size_t n_tasks = (n_chains + chunk - 1) / chunk;
  std::vector<CostLedger> ledgers(n_tasks);

  parallel_for(n_tasks, options.workers, [&](std::size_t task) {
    const std::size_t c0 = task * chunk;
    const std::size_t c1 = std::min(n_chains, c0 + chunk);
    const auto rows = static_cast<Eigen::Index>(c1 - c0);
    std::vector<Rng> rngs;
    rngs.reserve(c1 - c0);
    for (std::size_t c = c0; c < c1; ++c) rngs.emplace_back(seed, c);

    const double sigma_max = cfg.schedule.sigma_at(steps);
    Matrix init(rows, dim);
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index j = 0; j < dim; ++j) init(r, j) = sigma_max * rngs[static_cast<std::size_t>(r)].normal();
    }
    LatentState x(std::move(init), shape, sigma_max);
    std::optional<Matrix> prev_denoised;
    double prev_sigma = 0.0;
    CostLedger& ledger = ledgers[task];

    for (int s = 0; s < steps; ++s) {
      const int t = steps - s;
      const double sigma_next = cfg.schedule.sigma_at(t - 1);
      const Denoiser& den = *plan.steps[static_cast<std::size_t>(s)];
      const std::uint64_t before = ledger.total_evaluations();
      Matrix denoised = evaluate(den, x, cfg.guidance, &ledger);
      const std::uint64_t per_chain = (ledger.total_evaluations() - before) / static_cast<std::uint64_t>(rows);
      if (cfg.record_trajectory) {
        for (Eigen::Index r = 0; r < rows; ++r) {
          TrajectoryEntry e;
          e.t = t;
          e.sigma = x.sigma;
          e.latent.assign(x.data.row(r).data(), x.data.row(r).data() + dim);
          if (cfg.record_denoised) e.denoised.assign(denoised.row(r).data(), denoised.row(r).data() + dim);
          e.denoiser_id = den.id();
          e.eval_count = per_chain;
          result.trajectories[c0 + static_cast<std::size_t>(r)].entries.push_back(std::move(e));
        }
      }
      switch (cfg.kind) {
        case SamplerKind::Ddim: x = ddim_step(denoised, x, sigma_next); break;
        case SamplerKind::Ddpm: x = ddpm_step(denoised, x, sigma_next, std::span<Rng>(rngs)); break;
        case SamplerKind::DpmSolverPp2m: {
          const double sigma_cur = x.sigma;
          x = dpm_solver_pp_2m_step(denoised, prev_denoised ? &*prev_denoised : nullptr, x, prev_sigma, sigma_next);
          prev_denoised = std::move(denoised);
          prev_sigma = sigma_cur;
          break;
        }
      }
    }
    if (!x.finite()) throw DomainError("sampling produced non-finite latents (plan '" + plan.label + "')");
    result.samples.data.middleRows(static_cast<Eigen::Index>(c0), rows) = x.data;
    if (cfg.record_trajectory) {
      for (Eigen::Index r = 0; r < rows; ++r) {
        auto& tr = result.trajectories[c0 + static_cast<std::size_t>(r)];
        tr.chain = c0 + static_cast<std::size_t>(r);
        tr.shape = shape;
        tr.final_latent.assign(x.data.row(r).data(), x.data.row(r).data() + dim);
      }
    }
  });
  for (const auto& l : ledgers) result.ledger.merge(l);
  return result;
}

inline SampleResult sample(const StitchSchedule& schedule, const Roster& roster, const SamplerConfig& cfg,
                           std::size_t n_chains, std::uint64_t seed, const SampleOptions& options = {}) {
  return sample(make_plan(schedule, roster, cfg.steps()), cfg, n_chains, seed, options);
}

// ---------------------------------------------------------------- dumps

/// CSV: chain_id, step, t, sigma, denoiser_id, then the flattened latent.
/// Grid data carries per-step summary statistics (mean, std, min, max) instead.
inline void write_trajectories_csv(std::ostream& out, const std::vector<Trajectory>& trajectories) {
  if (trajectories.empty()) return;
  const SampleShape& shape = trajectories.front().shape;
  out << "chain_id,step,t,sigma,denoiser_id";
  if (shape.is_grid()) {
    out << ",mean,std,min,max\n";
  } else {
    for (std::size_t j = 0; j < shape.size(); ++j) out << ",x" << j;
    out << '\n';
  }
  for (const auto& tr : trajectories) {
    for (std::size_t s = 0; s < tr.entries.size(); ++s) {
      const auto& e = tr.entries[s];
      out << tr.chain << ',' << s << ',' << e.t << ',' << format_double(e.sigma) << ',' << e.denoiser_id;
      if (shape.is_grid()) {
        Eigen::Map<const Vector> v(e.latent.data(), static_cast<Eigen::Index>(e.latent.size()));
        const double m = v.mean();
        const double sd = std::sqrt((v.array() - m).square().mean());
        out << ',' << format_double(m) << ',' << format_double(sd) << ',' << format_double(v.minCoeff()) << ','
            << format_double(v.maxCoeff());
      } else {
        for (double val : e.latent) out << ',' << format_double(val);
      }
      out << '\n';
    }
  }
}

/// Binary dump: "TSTJ" | u32 version | u32 chains | u32 steps | u32 rank | u32 dims[rank]
/// then per chain, per step: u32 t | f64 sigma | u32 id length | id bytes | f64 latent[dim],
/// then the final latent f64[dim]. Little-endian.
inline std::string encode_trajectories(const std::vector<Trajectory>& trajectories) {
  std::string out = "TSTJ";
  auto put32 = [&](std::uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
  };
  auto put64f = [&](double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    out.append(b, 8);
  };
  put32(1);
  put32(static_cast<std::uint32_t>(trajectories.size()));
  const std::size_t steps = trajectories.empty() ? 0 : trajectories.front().entries.size();
  put32(static_cast<std::uint32_t>(steps));
  const SampleShape shape = trajectories.empty() ? SampleShape{} : trajectories.front().shape;
  put32(static_cast<std::uint32_t>(shape.dims.size()));
  for (auto d : shape.dims) put32(static_cast<std::uint32_t>(d));
  for (const auto& tr : trajectories) {
    for (const auto& e : tr.entries) {
      put32(static_cast<std::uint32_t>(e.t));
      put64f(e.sigma);
      put32(static_cast<std::uint32_t>(e.denoiser_id.size()));
      out += e.denoiser_id;
      for (double v : e.latent) put64f(v);
    }
    for (double v : tr.final_latent) put64f(v);
  }
  return out;
}

inline std::vector<Trajectory> decode_trajectories(const std::string& bytes) {
  std::size_t at = 0;
  auto need = [&](std::size_t n) {
    if (at + n > bytes.size()) throw IoError("trajectory dump truncated");
  };
  auto get32 = [&]() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes[at + static_cast<std::size_t>(i)])) << (8 * i);
    at += 4;
    return v;
  };
  auto get64f = [&]() {
    need(8);
    double v;
    std::memcpy(&v, bytes.data() + at, 8);
    at += 8;
    return v;
  };
  need(4);
  if (bytes.compare(0, 4, "TSTJ") != 0) throw IoError("not a trajectory dump");
  at = 4;
  if (get32() != 1) throw IoError("unsupported trajectory dump version");
  const std::uint32_t chains = get32();
  const std::uint32_t steps = get32();
  const std::uint32_t rank = get32();
  SampleShape shape;
  shape.dims.clear();
  for (std::uint32_t i = 0; i < rank; ++i) shape.dims.push_back(get32());
  const std::size_t dim = shape.size();
  std::vector<Trajectory> out(chains);
  for (std::uint32_t c = 0; c < chains; ++c) {
    out[c].chain = c;
    out[c].shape = shape;
    for (std::uint32_t s = 0; s < steps; ++s) {
      TrajectoryEntry e;
      e.t = static_cast<int>(get32());
      e.sigma = get64f();
      const std::uint32_t len = get32();
      need(len);
      e.denoiser_id = bytes.substr(at, len);
      at += len;
      e.latent.resize(dim);
      for (auto& v : e.latent) v = get64f();
      out[c].entries.push_back(std::move(e));
    }
    out[c].final_latent.resize(dim);
    for (auto& v : out[c].final_latent) v = get64f();
  }
  return out;
}

}  // namespace tstitch
