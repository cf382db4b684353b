// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Sample-quality distances and cost accounting.

#pragma once

#include "tstitch/gmm.hpp"
#include "tstitch/sampler.hpp"

#include <chrono>

namespace tstitch {

enum class QualityMetric { SlicedWasserstein, MeanError, CovarianceError };

inline std::string to_string(QualityMetric m) {
  switch (m) {
    case QualityMetric::SlicedWasserstein: return "sliced-wasserstein";
    case QualityMetric::MeanError: return "mean-error";
    case QualityMetric::CovarianceError: return "covariance-error";
  }
  return "?";
}

inline QualityMetric quality_metric_from_string(std::string_view s) {
  if (s == "sliced-wasserstein") return QualityMetric::SlicedWasserstein;
  if (s == "mean-error") return QualityMetric::MeanError;
  if (s == "covariance-error") return QualityMetric::CovarianceError;
  throw ParseError("unknown quality metric '" + std::string(s) + "'");
}

/// All shipped metrics are distances: lower is better.
inline bool lower_is_better(QualityMetric) { return true; }

struct QualityReport {
  QualityMetric metric = QualityMetric::SlicedWasserstein;
  double value = 0.0;
  std::size_t n_samples = 0;
  std::size_t n_projections = 0;
  std::uint64_t seed = 0;
};

/// Exact Wasserstein-1 between two 1-D empirical distributions:
/// the integral of |F_a - F_b|. Inputs are sorted in place.
inline double wasserstein1_1d(std::vector<double>& a, std::vector<double>& b) {
  if (a.empty() || b.empty()) throw DomainError("wasserstein1 needs nonempty samples");
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  if (a.size() == b.size()) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) acc += std::abs(a[i] - b[i]);
    return acc / static_cast<double>(a.size());
  }
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double prev = std::min(a.front(), b.front());
  double acc = 0.0;
  while (i < a.size() || j < b.size()) {
    const double next = (j >= b.size() || (i < a.size() && a[i] <= b[j])) ? a[i] : b[j];
    acc += std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb) * (next - prev);
    prev = next;
    while (i < a.size() && a[i] == next) ++i;
    while (j < b.size() && b[j] == next) ++j;
  }
  return acc;
}

/// Average over the given unit directions (rows) of W1 between projections.
inline double sliced_wasserstein_along(const Matrix& a, const Matrix& b, const Matrix& directions) {
  if (a.cols() != b.cols() || a.cols() != directions.cols()) throw ShapeError("sliced wasserstein: dimension mismatch");
  if (directions.rows() == 0) throw DomainError("sliced wasserstein needs at least one direction");
  double total = 0.0;
  std::vector<double> pa(static_cast<std::size_t>(a.rows())), pb(static_cast<std::size_t>(b.rows()));
  for (Eigen::Index p = 0; p < directions.rows(); ++p) {
    for (Eigen::Index r = 0; r < a.rows(); ++r) pa[static_cast<std::size_t>(r)] = a.row(r).dot(directions.row(p));
    for (Eigen::Index r = 0; r < b.rows(); ++r) pb[static_cast<std::size_t>(r)] = b.row(r).dot(directions.row(p));
    total += wasserstein1_1d(pa, pb);
  }
  return total / static_cast<double>(directions.rows());
}

inline Matrix random_directions(std::size_t n, Eigen::Index dim, std::uint64_t seed) {
  Rng rng(seed, 0x5157);
  Matrix dirs(static_cast<Eigen::Index>(n), dim);
  for (Eigen::Index p = 0; p < dirs.rows(); ++p) {
    double norm = 0.0;
    do {
      for (Eigen::Index j = 0; j < dim; ++j) dirs(p, j) = rng.normal();
      norm = dirs.row(p).norm();
    } while (norm < 1e-12);
    dirs.row(p) /= norm;
  }
  return dirs;
}

inline constexpr std::size_t kDefaultProjections = 128;

/// Sliced Wasserstein-1 with random unit projections drawn from `seed`.
inline QualityReport sliced_wasserstein(const Matrix& a, const Matrix& b, std::size_t n_projections, std::uint64_t seed) {
  if (a.cols() != b.cols()) throw ShapeError("sliced wasserstein: dimension mismatch");
  if (a.rows() < 100 || b.rows() < 100) throw DomainError("sliced wasserstein needs >= 100 samples per set");
  QualityReport r;
  r.metric = QualityMetric::SlicedWasserstein;
  r.value = sliced_wasserstein_along(a, b, random_directions(n_projections, a.cols(), seed));
  r.n_samples = static_cast<std::size_t>(std::min(a.rows(), b.rows()));
  r.n_projections = n_projections;
  r.seed = seed;
  return r;
}

/// ||empirical mean - mixture mean|| and ||empirical cov - mixture cov||_F
/// (population covariance, 1/n).
inline std::pair<QualityReport, QualityReport> moment_errors(const Matrix& samples, const GmmParams& target) {
  if (samples.rows() < 100) throw DomainError("moment errors need >= 100 samples");
  if (static_cast<std::size_t>(samples.cols()) != target.dim()) throw ShapeError("moment errors: dimension mismatch");
  const Vector m = samples.colwise().mean().transpose();
  const Matrix centered = samples.rowwise() - m.transpose();
  const Eigen::MatrixXd cov = (centered.transpose() * centered) / static_cast<double>(samples.rows());
  QualityReport mean_err{QualityMetric::MeanError, (m - target.mean()).norm(), static_cast<std::size_t>(samples.rows()), 0, 0};
  QualityReport cov_err{QualityMetric::CovarianceError, (cov - target.covariance()).norm(),
                        static_cast<std::size_t>(samples.rows()), 0, 0};
  return {mean_err, cov_err};
}

struct CostReport {
  double declared_cost = 0.0;  // per trajectory
  double wall_clock_s = 0.0;   // median over repetitions
  std::vector<double> wall_clock_runs;
  std::map<std::string, std::uint64_t> evals_by_denoiser;
  std::size_t workers = 1;
  std::size_t n_chains = 0;
  int steps = 0;
};

/// Declared cost of one trajectory under a plan: sum of per-step cost times
/// evaluations per step (2 under classifier-free guidance).
inline double declared_cost(const StepPlan& plan, const SamplerConfig& cfg) {
  const int mult = cfg.guidance ? cfg.guidance->multiplier() : 1;
  double c = 0.0;
  for (const auto& d : plan.steps) c += d->cost_per_eval() * mult;
  return c;
}

/// Run the sampler `repetitions` times, timing only the sampling loop.
inline CostReport benchmark_schedule(const StepPlan& plan, const SamplerConfig& cfg, std::size_t n_chains,
                                     std::size_t repetitions, std::uint64_t seed, const SampleOptions& options = {}) {
  if (repetitions == 0) throw DomainError("benchmark needs at least one repetition");
  CostReport report;
  report.workers = options.workers;
  report.n_chains = n_chains;
  report.steps = cfg.steps();
  report.declared_cost = declared_cost(plan, cfg);
  SamplerConfig quiet = cfg;
  quiet.record_trajectory = false;
  for (std::size_t rep = 0; rep < repetitions; ++rep) {
    const auto start = std::chrono::steady_clock::now();
    SampleResult res = sample(plan, quiet, n_chains, seed, options);
    const auto stop = std::chrono::steady_clock::now();
    report.wall_clock_runs.push_back(std::chrono::duration<double>(stop - start).count());
    if (rep == 0) {
      for (const auto& [id, e] : res.ledger.entries()) report.evals_by_denoiser[id] = e.evaluations;
    }
  }
  report.wall_clock_s = median_of(report.wall_clock_runs);
  return report;
}

}  // namespace tstitch
