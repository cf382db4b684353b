// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Isotropic Gaussian mixtures and their exact posterior-mean denoiser.

#pragma once

#include "tstitch/core.hpp"

#include <limits>
#include <numbers>
#include <optional>

namespace tstitch {

struct GmmParams {
  std::vector<double> weights;    // simplex
  Matrix means;                   // K x d
  std::vector<double> variances;  // isotropic s_i^2
  std::vector<int> labels;        // class label per component, empty = unlabeled

  std::size_t components() const { return weights.size(); }
  std::size_t dim() const { return static_cast<std::size_t>(means.cols()); }
  bool labeled() const { return !labels.empty(); }

  int num_classes() const {
    if (labels.empty()) return 0;
    return *std::max_element(labels.begin(), labels.end()) + 1;
  }

  void validate() const {
    const std::size_t k = weights.size();
    if (k == 0) throw DomainError("mixture needs at least one component");
    if (static_cast<std::size_t>(means.rows()) != k || variances.size() != k) {
      throw ShapeError("mixture weights/means/variances disagree on component count");
    }
    if (!labels.empty() && labels.size() != k) throw ShapeError("mixture labels must cover every component");
    double total = 0.0;
    for (double w : weights) {
      if (!(w >= 0.0)) throw DomainError("mixture weights must be nonnegative");
      total += w;
    }
    if (std::abs(total - 1.0) > 1e-12) throw DomainError("mixture weights must sum to 1");
    for (double v : variances) {
      if (!(v > 0.0)) throw DomainError("mixture variances must be positive");
    }
    for (int l : labels) {
      if (l < 0) throw DomainError("mixture labels must be nonnegative");
    }
  }

  bool has_class(int c) const {
    if (c == -1) return true;
    return std::find(labels.begin(), labels.end(), c) != labels.end();
  }

  Vector mean() const {
    Vector m = Vector::Zero(means.cols());
    for (std::size_t i = 0; i < components(); ++i) m += weights[i] * means.row(static_cast<Eigen::Index>(i)).transpose();
    return m;
  }

  Eigen::MatrixXd covariance() const {
    const Eigen::Index d = means.cols();
    Eigen::MatrixXd c = Eigen::MatrixXd::Zero(d, d);
    for (std::size_t i = 0; i < components(); ++i) {
      Vector mu = means.row(static_cast<Eigen::Index>(i)).transpose();
      c += weights[i] * (variances[i] * Eigen::MatrixXd::Identity(d, d) + mu * mu.transpose());
    }
    Vector m = mean();
    return c - m * m.transpose();
  }

  /// Draw n samples; component indices are written to `components_out` when given.
  Matrix sample(std::size_t n, Rng& rng, std::vector<int>* components_out = nullptr) const {
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    Matrix x(static_cast<Eigen::Index>(n), means.cols());
    if (components_out) components_out->resize(n);
    for (std::size_t r = 0; r < n; ++r) {
      const std::size_t k = pick(rng.engine());
      const double s = std::sqrt(variances[k]);
      for (Eigen::Index j = 0; j < means.cols(); ++j) {
        x(static_cast<Eigen::Index>(r), j) = means(static_cast<Eigen::Index>(k), j) + s * rng.normal();
      }
      if (components_out) (*components_out)[r] = static_cast<int>(k);
    }
    return x;
  }

  /// Log density of one point.
  double log_density(const double* x) const {
    const Eigen::Index d = means.cols();
    double best = -std::numeric_limits<double>::infinity();
    std::vector<double> terms(components());
    for (std::size_t i = 0; i < components(); ++i) {
      double sq = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        const double diff = x[j] - means(static_cast<Eigen::Index>(i), j);
        sq += diff * diff;
      }
      terms[i] = std::log(weights[i]) - 0.5 * static_cast<double>(d) * std::log(2.0 * std::numbers::pi * variances[i]) -
                 0.5 * sq / variances[i];
      best = std::max(best, terms[i]);
    }
    double acc = 0.0;
    for (double t : terms) acc += std::exp(t - best);
    return best + std::log(acc);
  }

  /// Equal-weight mixture on a ring; component k sits at angle 2*pi*k/n.
  static GmmParams ring(std::size_t n, double radius, double std_dev) {
    GmmParams p;
    p.weights.assign(n, 1.0 / static_cast<double>(n));
    p.means.resize(static_cast<Eigen::Index>(n), 2);
    p.variances.assign(n, std_dev * std_dev);
    p.labels.resize(n);
    for (std::size_t k = 0; k < n; ++k) {
      const double a = 2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
      p.means(static_cast<Eigen::Index>(k), 0) = radius * std::cos(a);
      p.means(static_cast<Eigen::Index>(k), 1) = radius * std::sin(a);
      p.labels[k] = static_cast<int>(k);
    }
    // fix the sum exactly for n that do not divide evenly
    p.weights.back() = 1.0 - std::accumulate(p.weights.begin(), p.weights.end() - 1, 0.0);
    return p;
  }

  static GmmParams standard_normal(std::size_t d) {
    GmmParams p;
    p.weights = {1.0};
    p.means = Matrix::Zero(1, static_cast<Eigen::Index>(d));
    p.variances = {1.0};
    return p;
  }
};

/// Knobs for evaluating a (possibly tempered) mixture posterior mean.
struct PosteriorOptions {
  /// Multiplies every component log-weight before normalization; 1 is the
  /// exact posterior, 0 makes responsibilities uniform.
  double logit_scale = 1.0;
  /// Restrict to components carrying this class label (-1: whole mixture).
  int condition = -1;
};

/// E[x0 | x_t = x] for one row, with x_t = x0 + sigma * n.
///
/// Per-component posterior mean is (s_i^2 x + sigma^2 mu_i) / (s_i^2 + sigma^2);
/// responsibilities are w_i N(x; mu_i, (s_i^2 + sigma^2) I), normalized in log space.
inline void gmm_posterior_mean_row(const GmmParams& p, const double* x, double sigma, const PosteriorOptions& opt,
                                   double* out, std::vector<double>& scratch) {
  const Eigen::Index d = p.means.cols();
  if (sigma == 0.0) {
    std::copy(x, x + d, out);
    return;
  }
  const std::size_t k = p.components();
  scratch.assign(k, -std::numeric_limits<double>::infinity());
  const double s2 = sigma * sigma;
  double best = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < k; ++i) {
    if (opt.condition >= 0 && p.labels[i] != opt.condition) continue;
    if (p.weights[i] == 0.0) continue;
    const double v = p.variances[i] + s2;
    double sq = 0.0;
    for (Eigen::Index j = 0; j < d; ++j) {
      const double diff = x[j] - p.means(static_cast<Eigen::Index>(i), j);
      sq += diff * diff;
    }
    const double logit = std::log(p.weights[i]) - 0.5 * static_cast<double>(d) * std::log(v) - 0.5 * sq / v;
    scratch[i] = opt.logit_scale * logit;
    best = std::max(best, scratch[i]);
  }
  if (!std::isfinite(best)) throw ConditionError("no mixture component carries class " + std::to_string(opt.condition));
  double norm = 0.0;
  for (std::size_t i = 0; i < k; ++i) {
    scratch[i] = std::isfinite(scratch[i]) ? std::exp(scratch[i] - best) : 0.0;
    norm += scratch[i];
  }
  std::fill(out, out + d, 0.0);
  for (std::size_t i = 0; i < k; ++i) {
    if (scratch[i] == 0.0) continue;
    const double r = scratch[i] / norm;
    const double v = p.variances[i] + s2;
    const double a = p.variances[i] / v;
    const double b = s2 / v;
    for (Eigen::Index j = 0; j < d; ++j) out[j] += r * (a * x[j] + b * p.means(static_cast<Eigen::Index>(i), j));
  }
}

inline Matrix gmm_posterior_mean(const GmmParams& p, const Matrix& x, double sigma, const PosteriorOptions& opt = {}) {
  if (static_cast<std::size_t>(x.cols()) != p.dim()) throw ShapeError("posterior mean: data dim does not match mixture");
  if (!(sigma >= 0.0)) throw DomainError("posterior mean needs sigma >= 0");
  Matrix out(x.rows(), x.cols());
  std::vector<double> scratch;
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    gmm_posterior_mean_row(p, x.row(r).data(), sigma, opt, out.row(r).data(), scratch);
  }
  return out;
}

inline Matrix gmm_posterior_mean(const GmmParams& p, const LatentState& x, const PosteriorOptions& opt = {}) {
  return gmm_posterior_mean(p, x.data, x.sigma, opt);
}

}  // namespace tstitch
