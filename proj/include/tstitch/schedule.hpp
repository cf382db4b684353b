// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include "tstitch/core.hpp"

#include <optional>
#include <string>

namespace tstitch {

enum class ScheduleKind { VpLinear, KarrasPower };

inline std::string to_string(ScheduleKind k) {
  return k == ScheduleKind::VpLinear ? "variance-preserving-linear" : "karras-power";
}

inline ScheduleKind schedule_kind_from_string(std::string_view s) {
  if (s == "variance-preserving-linear" || s == "vp-linear") return ScheduleKind::VpLinear;
  if (s == "karras-power" || s == "karras") return ScheduleKind::KarrasPower;
  throw ParseError("unknown noise schedule kind '" + std::string(s) + "'");
}

/// Discrete noise ladder sigma(0) = 0 < sigma(1) = sigma_min < ... < sigma(T) = sigma_max.
///
/// karras-power spaces sigma^(1/rho) linearly between the endpoints.
/// variance-preserving-linear is the DDPM linear-beta process
/// (beta(u) = 0.1 + 19.9 u) written in sigma space, sigma(u)^2 = 1/alpha_bar(u) - 1,
/// with u spaced uniformly between the times that hit sigma_min and sigma_max.
class NoiseSchedule {
 public:
  static constexpr double kVpBetaMin = 0.1;
  static constexpr double kVpBetaMax = 20.0;

  NoiseSchedule() : NoiseSchedule(ScheduleKind::KarrasPower, 100) {}

  NoiseSchedule(ScheduleKind kind, int steps, double sigma_min = 0.002, double sigma_max = 80.0,
                double rho = 7.0)
      : kind_(kind), steps_(steps), sigma_min_(sigma_min), sigma_max_(sigma_max), rho_(rho) {
    if (steps < 1) throw DomainError("noise schedule needs T >= 1");
    if (!(sigma_min > 0.0)) throw DomainError("sigma_min must be positive");
    if (!(sigma_max > sigma_min)) throw DomainError("sigma_max must exceed sigma_min");
    if (!(rho > 0.0)) throw DomainError("rho must be positive");
    ladder_.resize(static_cast<std::size_t>(steps) + 1);
    for (int t = 0; t <= steps; ++t) ladder_[static_cast<std::size_t>(t)] = compute(t);
  }

  static NoiseSchedule karras(int steps, double sigma_min = 0.002, double sigma_max = 80.0, double rho = 7.0) {
    return NoiseSchedule(ScheduleKind::KarrasPower, steps, sigma_min, sigma_max, rho);
  }
  static NoiseSchedule vp_linear(int steps, double sigma_min = 0.002, double sigma_max = 80.0) {
    return NoiseSchedule(ScheduleKind::VpLinear, steps, sigma_min, sigma_max);
  }

  ScheduleKind kind() const noexcept { return kind_; }
  int steps() const noexcept { return steps_; }
  double sigma_min() const noexcept { return sigma_min_; }
  double sigma_max() const noexcept { return sigma_max_; }
  double rho() const noexcept { return rho_; }

  double sigma_at(int t) const {
    if (t < 0 || t > steps_) {
      throw RangeError("step index " + std::to_string(t) + " outside [0, " + std::to_string(steps_) + "]");
    }
    return ladder_[static_cast<std::size_t>(t)];
  }

  /// Same ladder with a different step count.
  NoiseSchedule with_steps(int steps) const { return NoiseSchedule(kind_, steps, sigma_min_, sigma_max_, rho_); }

 private:
  double compute(int t) const {
    if (t == 0) return 0.0;
    if (t == steps_) return sigma_max_;
    if (t == 1) return sigma_min_;
    // fraction of the way from sigma_max (0) to sigma_min (1)
    const double frac = static_cast<double>(steps_ - t) / static_cast<double>(steps_ - 1);
    if (kind_ == ScheduleKind::KarrasPower) {
      const double hi = std::pow(sigma_max_, 1.0 / rho_);
      const double lo = std::pow(sigma_min_, 1.0 / rho_);
      return std::pow(hi + frac * (lo - hi), rho_);
    }
    const double u_hi = vp_time_for(sigma_max_);
    const double u_lo = vp_time_for(sigma_min_);
    return vp_sigma(u_hi + frac * (u_lo - u_hi));
  }

  static double vp_sigma(double u) {
    const double integral = kVpBetaMin * u + 0.5 * (kVpBetaMax - kVpBetaMin) * u * u;
    return std::sqrt(std::expm1(integral));
  }

  static double vp_time_for(double sigma) {
    const double d = kVpBetaMax - kVpBetaMin;
    const double target = std::log1p(sigma * sigma);
    return (-kVpBetaMin + std::sqrt(kVpBetaMin * kVpBetaMin + 2.0 * d * target)) / d;
  }

  ScheduleKind kind_;
  int steps_;
  double sigma_min_;
  double sigma_max_;
  double rho_;
  std::vector<double> ladder_;
};

inline double sigma_at(const NoiseSchedule& schedule, int t) { return schedule.sigma_at(t); }

/// x0 + sigma * n with n standard normal, drawn row-major from `rng`.
inline LatentState perturb(const LatentState& x0, double sigma, Rng& rng) {
  if (x0.sigma != 0.0) throw DomainError("perturb expects clean data (sigma == 0)");
  if (!(sigma > 0.0)) throw DomainError("perturb needs a positive sigma");
  Matrix out = x0.data;
  for (Eigen::Index i = 0; i < out.size(); ++i) out.data()[i] += sigma * rng.normal();
  return LatentState(std::move(out), x0.shape, sigma);
}

/// Score of p(x; sigma) from a denoiser output: (D - x) / sigma^2.
inline Matrix score_from_denoiser(const Matrix& denoised, const LatentState& x) {
  if (x.sigma == 0.0) throw SingularityError("score is undefined at sigma = 0");
  require_same_shape(denoised, x.data, "score_from_denoiser");
  return (denoised - x.data) / (x.sigma * x.sigma);
}

/// Classifier-free guidance: (1 + s) * cond - s * uncond.
inline Matrix cfg_combine(const Matrix& cond_out, const Matrix& uncond_out, double scale) {
  require_same_shape(cond_out, uncond_out, "cfg_combine");
  if (!(scale >= 0.0)) throw DomainError("guidance scale must be >= 0");
  if (scale == 0.0) return cond_out;
  return (1.0 + scale) * cond_out - scale * uncond_out;
}

/// Integer class label; the reserved null label selects the unconditional model.
inline constexpr int kNullCondition = -1;

struct GuidanceSpec {
  double scale = 0.0;
  int condition = kNullCondition;
  int null_condition = kNullCondition;

  void validate() const {
    if (!(scale >= 0.0)) throw DomainError("guidance scale must be >= 0");
  }
  /// Denoiser evaluations per step.
  int multiplier() const { return scale > 0.0 ? 2 : 1; }
};

}  // namespace tstitch
