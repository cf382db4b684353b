// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tstitch/gmm.hpp"
#include "tstitch/schedule.hpp"

#include <map>
#include <memory>
#include <optional>

namespace tstitch {

enum class DenoiserKind { GmmOracle, DegradedOracle, Mlp };

inline std::string to_string(DenoiserKind k) {
  switch (k) {
    case DenoiserKind::GmmOracle: return "gmm-oracle";
    case DenoiserKind::DegradedOracle: return "degraded-oracle";
    case DenoiserKind::Mlp: return "mlp";
  }
  return "?";
}

inline DenoiserKind denoiser_kind_from_string(std::string_view s) {
  if (s == "gmm-oracle") return DenoiserKind::GmmOracle;
  if (s == "degraded-oracle") return DenoiserKind::DegradedOracle;
  if (s == "mlp") return DenoiserKind::Mlp;
  throw ParseError("unknown denoiser kind '" + std::string(s) + "'");
}

/// Evaluation counts per denoiser id. One entry per evaluated sample, so a
/// guided step over a batch of n chains records 2n evaluations.
class CostLedger {
 public:
  struct Entry {
    std::uint64_t evaluations = 0;
    double cost_per_eval = 0.0;
  };

  void record(const std::string& id, std::uint64_t evals, double cost_per_eval) {
    auto& e = entries_[id];
    e.evaluations += evals;
    e.cost_per_eval = cost_per_eval;
  }

  void merge(const CostLedger& other) {
    for (const auto& [id, e] : other.entries_) record(id, e.evaluations, e.cost_per_eval);
  }

  std::uint64_t evaluations(const std::string& id) const {
    auto it = entries_.find(id);
    return it == entries_.end() ? 0 : it->second.evaluations;
  }

  std::uint64_t total_evaluations() const {
    std::uint64_t n = 0;
    for (const auto& [id, e] : entries_) n += e.evaluations;
    return n;
  }

  double total_cost() const {
    double c = 0.0;
    for (const auto& [id, e] : entries_) c += static_cast<double>(e.evaluations) * e.cost_per_eval;
    return c;
  }

  const std::map<std::string, Entry>& entries() const { return entries_; }

 private:
  std::map<std::string, Entry> entries_;
};

/// A costed denoiser D(x; sigma, c). Implementations are immutable after
/// construction and safe to evaluate concurrently.
class Denoiser {
 public:
  Denoiser(std::string id, DenoiserKind kind, double cost_per_eval, SampleShape shape)
      : id_(std::move(id)), kind_(kind), cost_(cost_per_eval), shape_(std::move(shape)) {
    if (!(cost_per_eval > 0.0)) throw DomainError("cost_per_eval must be positive");
  }
  virtual ~Denoiser() = default;

  const std::string& id() const noexcept { return id_; }
  DenoiserKind kind() const noexcept { return kind_; }
  double cost_per_eval() const noexcept { return cost_; }
  const SampleShape& shape() const noexcept { return shape_; }
  std::size_t dim() const { return shape_.size(); }

  /// One raw evaluation at a given class label (kNullCondition = unconditional).
  virtual Matrix denoise(const Matrix& x, double sigma, int condition) const = 0;
  virtual bool supports_condition(int condition) const = 0;
  virtual std::unique_ptr<Denoiser> clone() const = 0;

  /// Synthetic arithmetic per sample per evaluation, emulating the latency
  /// of a network whose declared cost is cost_per_eval. Zero disables it.
  std::size_t emulated_work() const noexcept { return emulated_work_; }
  void set_emulated_work(std::size_t fmas_per_sample) { emulated_work_ = fmas_per_sample; }

  void rename(std::string id) { id_ = std::move(id); }
  void set_cost(double cost) {
    if (!(cost > 0.0)) throw DomainError("cost_per_eval must be positive");
    cost_ = cost;
  }

  void burn(std::size_t rows) const {
    if (emulated_work_ == 0) return;
    const std::size_t n = emulated_work_ * rows;
    // four independent FMA chains; the result feeds a sink so it stays live
    double a0 = 1.0, a1 = 1.0, a2 = 1.0, a3 = 1.0;
    const double m = 0.999999, c = 1e-7;
    for (std::size_t i = 0; i < n; i += 4) {
      a0 = a0 * m + c;
      a1 = a1 * m + c;
      a2 = a2 * m + c;
      a3 = a3 * m + c;
    }
    static thread_local volatile double sink = 0.0;
    sink = sink + a0 + a1 + a2 + a3;
  }

 protected:
  void check_input(const Matrix& x) const {
    if (static_cast<std::size_t>(x.cols()) != dim()) {
      throw ShapeError("denoiser '" + id_ + "' expects " + std::to_string(dim()) + " dims, got " +
                       std::to_string(x.cols()));
    }
  }

 private:
  std::string id_;
  DenoiserKind kind_;
  double cost_;
  SampleShape shape_;
  std::size_t emulated_work_ = 0;
};

using DenoiserPtr = std::shared_ptr<const Denoiser>;

/// Evaluate with optional classifier-free guidance and record the cost.
/// With guidance scale s > 0 this is two evaluations, else one.
inline Matrix evaluate(const Denoiser& d, const Matrix& x, double sigma, const std::optional<GuidanceSpec>& guidance,
                       CostLedger* ledger = nullptr) {
  const int cond = guidance ? guidance->condition : kNullCondition;
  if (!d.supports_condition(cond)) {
    throw ConditionError("denoiser '" + d.id() + "' does not know condition " + std::to_string(cond));
  }
  const auto rows = static_cast<std::uint64_t>(x.rows());
  if (guidance && guidance->scale > 0.0) {
    guidance->validate();
    if (!d.supports_condition(guidance->null_condition)) {
      throw ConditionError("denoiser '" + d.id() + "' has no null condition");
    }
    Matrix c = d.denoise(x, sigma, cond);
    Matrix u = d.denoise(x, sigma, guidance->null_condition);
    d.burn(2 * x.rows());
    if (ledger) ledger->record(d.id(), 2 * rows, d.cost_per_eval());
    return cfg_combine(c, u, guidance->scale);
  }
  Matrix out = d.denoise(x, sigma, cond);
  d.burn(static_cast<std::size_t>(x.rows()));
  if (ledger) ledger->record(d.id(), rows, d.cost_per_eval());
  return out;
}

inline Matrix evaluate(const Denoiser& d, const LatentState& x, const std::optional<GuidanceSpec>& guidance = std::nullopt,
                       CostLedger* ledger = nullptr) {
  return evaluate(d, x.data, x.sigma, guidance, ledger);
}

/// The exact posterior-mean denoiser of a Gaussian mixture; the "large model".
class GmmOracle : public Denoiser {
 public:
  GmmOracle(std::string id, GmmParams params, double cost_per_eval = 10.0, std::optional<SampleShape> shape = {})
      : Denoiser(std::move(id), DenoiserKind::GmmOracle, cost_per_eval,
                 shape.value_or(SampleShape::point(static_cast<std::size_t>(params.means.cols())))),
        params_(std::move(params)) {
    params_.validate();
    if (this->shape().size() != params_.dim()) throw ShapeError("oracle shape does not match mixture dim");
  }

  const GmmParams& params() const noexcept { return params_; }

  Matrix denoise(const Matrix& x, double sigma, int condition) const override {
    check_input(x);
    PosteriorOptions opt;
    opt.condition = condition;
    return gmm_posterior_mean(params_, x, sigma, opt);
  }

  bool supports_condition(int condition) const override { return params_.has_class(condition); }

  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<GmmOracle>(*this); }

 private:
  GmmParams params_;
};

enum class DegradeMode { BlurResponsibilities, BiasNoise };

inline std::string to_string(DegradeMode m) {
  return m == DegradeMode::BlurResponsibilities ? "blur-responsibilities" : "bias-noise";
}

inline DegradeMode degrade_mode_from_string(std::string_view s) {
  if (s == "blur-responsibilities") return DegradeMode::BlurResponsibilities;
  if (s == "bias-noise") return DegradeMode::BiasNoise;
  throw ParseError("unknown degradation mode '" + std::string(s) + "'");
}

/// A controllably weaker copy of a mixture oracle, standing in for a small
/// network with a known quality gap.
///
/// blur-responsibilities tempers the component responsibilities: log-weights
/// are scaled by (1 - level), so level 1 gives uniform responsibilities and
/// the output collapses to shrinkage toward the average component mean.
/// bias-noise adds a fixed smooth error field level * amp * sin(f x_j + phi_j).
class DegradedOracle : public Denoiser {
 public:
  static constexpr double kBiasAmplitude = 0.5;
  static constexpr double kBiasFrequency = 1.3;

  DegradedOracle(std::string id, GmmParams params, double level, DegradeMode mode, double cost_per_eval = 1.0,
                 std::optional<SampleShape> shape = {})
      : Denoiser(std::move(id), DenoiserKind::DegradedOracle, cost_per_eval,
                 shape.value_or(SampleShape::point(static_cast<std::size_t>(params.means.cols())))),
        params_(std::move(params)),
        level_(level),
        mode_(mode) {
    if (!(level >= 0.0 && level <= 1.0)) throw DomainError("degradation level must lie in [0, 1]");
    params_.validate();
  }

  const GmmParams& params() const noexcept { return params_; }
  double level() const noexcept { return level_; }
  DegradeMode mode() const noexcept { return mode_; }

  Matrix denoise(const Matrix& x, double sigma, int condition) const override {
    check_input(x);
    PosteriorOptions opt;
    opt.condition = condition;
    if (mode_ == DegradeMode::BlurResponsibilities) {
      opt.logit_scale = 1.0 - level_;
      return gmm_posterior_mean(params_, x, sigma, opt);
    }
    Matrix out = gmm_posterior_mean(params_, x, sigma, opt);
    if (level_ == 0.0) return out;
    for (Eigen::Index r = 0; r < out.rows(); ++r) {
      for (Eigen::Index j = 0; j < out.cols(); ++j) {
        const double phase = 0.7 * static_cast<double>(j);
        out(r, j) += level_ * kBiasAmplitude * std::sin(kBiasFrequency * x(r, j) + phase);
      }
    }
    return out;
  }

  bool supports_condition(int condition) const override { return params_.has_class(condition); }

  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<DegradedOracle>(*this); }

 private:
  GmmParams params_;
  double level_;
  DegradeMode mode_;
};

/// Default declared cost of a degraded oracle relative to its source.
inline constexpr double kDegradedCostRatio = 0.1;

inline std::unique_ptr<DegradedOracle> degrade_oracle(const Denoiser& oracle, double level, DegradeMode mode,
                                                       std::optional<std::string> id = {},
                                                       std::optional<double> cost = {}) {
  const auto* src = dynamic_cast<const GmmOracle*>(&oracle);
  if (!src) throw DomainError("degrade_oracle needs a gmm-oracle denoiser");
  if (!(level >= 0.0 && level <= 1.0)) throw DomainError("degradation level must lie in [0, 1]");
  return std::make_unique<DegradedOracle>(id.value_or(oracle.id() + "-degraded"), src->params(), level, mode,
                                          cost.value_or(oracle.cost_per_eval() * kDegradedCostRatio), src->shape());
}

/// Mean squared denoising error (per sample, summed over dims) on fixed pairs.
inline double denoising_mse(const Denoiser& d, const Matrix& clean, const Matrix& noisy, const std::vector<double>& sigmas) {
  double total = 0.0;
  for (Eigen::Index r = 0; r < clean.rows(); ++r) {
    Matrix row = noisy.row(r);
    Matrix out = d.denoise(row, sigmas[static_cast<std::size_t>(r)], kNullCondition);
    total += (out - clean.row(r)).squaredNorm();
  }
  return total / static_cast<double>(clean.rows());
}

}  // namespace tstitch
