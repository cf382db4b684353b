// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Helpers shared by the test binaries.

#pragma once

#include "tstitch/core.hpp"
#include "tstitch/gmm.hpp"

#include <cmath>
#include <filesystem>
#include <numeric>
#include <utility>
#include <vector>
#include <string>

namespace tstitch::testing {

/// Inverse standard normal CDF (Acklam's rational approximation refined by
/// one Halley step), accurate to ~1e-15.
inline double normal_quantile(double p) {
  static const double a[] = {-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
                             1.383577518672690e+02,  -3.066479806614716e+01, 2.506628277459239e+00};
  static const double b[] = {-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
                             6.680131188771972e+01,  -1.328068155288572e+01};
  static const double c[] = {-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
                             -2.549732539343734e+00, 4.374664141464968e+00,  2.938163982698783e+00};
  static const double d[] = {7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
                             3.754408661907416e+00};
  double x;
  if (p < 0.02425) {
    const double q = std::sqrt(-2 * std::log(p));
    x = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else if (p > 1 - 0.02425) {
    const double q = std::sqrt(-2 * std::log1p(-p));
    x = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) /
        ((((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1);
  } else {
    const double q = p - 0.5, r = q * q;
    x = (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q /
        (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1);
  }
  const double e = 0.5 * std::erfc(-x / std::sqrt(2.0)) - p;
  const double u = e * std::sqrt(2 * 3.14159265358979323846) * std::exp(x * x / 2);
  return x - u / (1 + x * u / 2);
}

/// Quantile grid Phi^-1((i + 0.5) / m): a deterministic stand-in for m draws of N(0, 1).
inline Matrix normal_quantile_grid(std::size_t m) {
  Matrix out(static_cast<Eigen::Index>(m), 1);
  for (std::size_t i = 0; i < m; ++i) {
    out(static_cast<Eigen::Index>(i), 0) = normal_quantile((static_cast<double>(i) + 0.5) / static_cast<double>(m));
  }
  return out;
}

inline std::filesystem::path scratch_dir(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("tstitch_test_" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline GmmParams random_mixture(Rng& rng, std::size_t k, std::size_t d) {
  GmmParams p;
  double total = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    p.weights.push_back(0.2 + rng.uniform());
    total += p.weights.back();
  }
  for (double& w : p.weights) w /= total;
  p.weights.back() = 1.0 - std::accumulate(p.weights.begin(), p.weights.end() - 1, 0.0);
  p.means.resize(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(d));
  for (Eigen::Index i = 0; i < p.means.size(); ++i) p.means.data()[i] = 4 * rng.uniform() - 2;
  for (std::size_t i = 0; i < k; ++i) p.variances.push_back(0.05 + 0.5 * rng.uniform());
  return p;
}

/// Self-normalized importance estimate of E[x0 | x] from prior draws, with
/// its delta-method standard error per coordinate.
inline std::pair<Eigen::RowVectorXd, Eigen::RowVectorXd> monte_carlo_posterior(const Matrix& prior, const Matrix& x, double sigma) {
  const auto n = prior.rows();
  std::vector<double> logw(static_cast<std::size_t>(n));
  double best = -1e300;
  for (Eigen::Index i = 0; i < n; ++i) {
    logw[static_cast<std::size_t>(i)] = -0.5 * (prior.row(i) - x.row(0)).squaredNorm() / (sigma * sigma);
    best = std::max(best, logw[static_cast<std::size_t>(i)]);
  }
  double sw = 0.0;
  Eigen::RowVectorXd m = Eigen::RowVectorXd::Zero(prior.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = std::exp(logw[static_cast<std::size_t>(i)] - best);
    sw += w;
    m += w * prior.row(i);
  }
  m /= sw;
  Eigen::RowVectorXd var = Eigen::RowVectorXd::Zero(prior.cols());
  for (Eigen::Index i = 0; i < n; ++i) {
    const double w = std::exp(logw[static_cast<std::size_t>(i)] - best) / sw;
    var += (w * w) * (prior.row(i) - m).array().square().matrix();
  }
  return {m, var.array().sqrt().matrix()};
}

}  // namespace tstitch::testing
