// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Diagnostics over sampled trajectories: paired latent similarity, radial
// Fourier spectra per step, and Pareto frontiers of (cost, quality) points.

#pragma once

#include "tstitch/csv.hpp"
#include "tstitch/sampler.hpp"

#include <fftw3.h>

#include <complex>
#include <mutex>

namespace tstitch {

// ---------------------------------------------------------------- similarity

enum class SimilarityOperand { State, Denoised };

inline std::string to_string(SimilarityOperand o) { return o == SimilarityOperand::State ? "state" : "denoised"; }

inline SimilarityOperand similarity_operand_from_string(std::string_view s) {
  if (s == "state") return SimilarityOperand::State;
  if (s == "denoised") return SimilarityOperand::Denoised;
  throw ParseError("unknown similarity operand '" + std::string(s) + "'");
}

struct SimilarityStep {
  int step = 0;  // sampling order, 0 = sigma_max
  int t = 0;
  double sigma = 0.0;
  double similarity = 0.0;
};

struct SimilarityProfile {
  std::string id_a, id_b;
  std::size_t n_chains = 0;
  SimilarityOperand operand = SimilarityOperand::State;
  std::vector<SimilarityStep> per_step;

  /// Mean similarity over sampling steps [begin, end).
  double mean_over(int begin, int end) const {
    if (begin < 0 || end > static_cast<int>(per_step.size()) || begin >= end) throw RangeError("bad step window");
    double acc = 0.0;
    for (int s = begin; s < end; ++s) acc += per_step[static_cast<std::size_t>(s)].similarity;
    return acc / static_cast<double>(end - begin);
  }
};

/// Cosine of the angle between a and b; two zero vectors count as identical.
inline double cosine_similarity(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size()) throw PairingError("paired latents differ in size");
  double ab = 0.0, aa = 0.0, bb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    ab += a[i] * b[i];
    aa += a[i] * a[i];
    bb += b[i] * b[i];
  }
  if (aa == 0.0 && bb == 0.0) return 1.0;
  if (aa == 0.0 || bb == 0.0) return 0.0;
  return std::clamp(ab / std::sqrt(aa * bb), -1.0, 1.0);
}

/// Chain i of `a` is paired with chain i of `b`; both must come from the same
/// seed so their initial noise agrees.
inline SimilarityProfile trajectory_similarity(const std::vector<Trajectory>& a, const std::vector<Trajectory>& b,
                                               SimilarityOperand operand = SimilarityOperand::State) {
  if (a.empty()) throw PairingError("no trajectories to compare");
  if (a.size() != b.size()) {
    throw PairingError("chain counts differ: " + std::to_string(a.size()) + " vs " + std::to_string(b.size()));
  }
  const std::size_t steps = a.front().entries.size();
  for (std::size_t c = 0; c < a.size(); ++c) {
    if (a[c].entries.size() != steps || b[c].entries.size() != steps) throw PairingError("trajectories differ in step count");
    if (a[c].chain != b[c].chain) throw PairingError("chain ids are not paired");
    if (!(a[c].shape == b[c].shape)) throw PairingError("paired trajectories differ in shape");
  }
  SimilarityProfile p;
  p.id_a = a.front().entries.empty() ? "" : a.front().entries.front().denoiser_id;
  p.id_b = b.front().entries.empty() ? "" : b.front().entries.front().denoiser_id;
  p.n_chains = a.size();
  p.operand = operand;
  for (std::size_t s = 0; s < steps; ++s) {
    double acc = 0.0;
    for (std::size_t c = 0; c < a.size(); ++c) {
      const auto& ea = a[c].entries[s];
      const auto& eb = b[c].entries[s];
      if (ea.t != eb.t) throw PairingError("paired steps sit at different noise levels");
      if (operand == SimilarityOperand::State) {
        acc += cosine_similarity(ea.latent, eb.latent);
      } else {
        if (ea.denoised.empty() || eb.denoised.empty()) throw PairingError("denoised outputs were not recorded");
        acc += cosine_similarity(ea.denoised, eb.denoised);
      }
    }
    const auto& e = a.front().entries[s];
    p.per_step.push_back({static_cast<int>(s), e.t, e.sigma, acc / static_cast<double>(a.size())});
  }
  return p;
}

inline void write_similarity_csv(std::ostream& out, const SimilarityProfile& p) {
  csv::write_row(out, {"step", "t", "sigma", "similarity", "pair", "operand", "n_chains"});
  for (const auto& s : p.per_step) {
    csv::write_row(out, {std::to_string(s.step), std::to_string(s.t), format_double(s.sigma), format_double(s.similarity),
                         p.id_a + "|" + p.id_b, to_string(p.operand), std::to_string(p.n_chains)});
  }
}

// ---------------------------------------------------------------- spectrum

inline constexpr double kLogFloor = 1e-12;

enum class SpectrumScaling { Raw, VariancePreserving };

inline std::string to_string(SpectrumScaling s) { return s == SpectrumScaling::Raw ? "raw" : "vp"; }

inline SpectrumScaling spectrum_scaling_from_string(std::string_view s) {
  if (s == "raw") return SpectrumScaling::Raw;
  if (s == "vp") return SpectrumScaling::VariancePreserving;
  throw ParseError("unknown spectrum scaling '" + std::string(s) + "'");
}

/// Unitary 2-D DFT of one H x W latent, reduced to integer-radius annuli.
struct LatentSpectrum {
  double dc_amplitude = 0.0;
  std::vector<double> mean_amplitude;  // per annulus 1..n_bins
  std::vector<double> power;           // sum of |F|^2 per annulus
  std::vector<std::size_t> count;
  double pixel_energy = 0.0;

  double spectral_energy() const {
    return dc_amplitude * dc_amplitude + std::accumulate(power.begin(), power.end(), 0.0);
  }
};

inline std::size_t spectrum_bins(std::size_t h, std::size_t w) { return std::min(h, w) / 2; }

/// Annulus of frequency (ky, kx) with signed wrap-around frequencies: round(radius)
/// clamped to [1, n_bins]; 0 only for DC.
inline std::size_t annulus_of(std::size_t ky, std::size_t kx, std::size_t h, std::size_t w) {
  if (ky == 0 && kx == 0) return 0;
  const double fy = ky <= h / 2 ? static_cast<double>(ky) : static_cast<double>(ky) - static_cast<double>(h);
  const double fx = kx <= w / 2 ? static_cast<double>(kx) : static_cast<double>(kx) - static_cast<double>(w);
  const auto b = static_cast<std::size_t>(round_half_away(std::sqrt(fy * fy + fx * fx)));
  return std::clamp<std::size_t>(b, 1, spectrum_bins(h, w));
}

class SpectrumTransform {
 public:
  SpectrumTransform(std::size_t h, std::size_t w) : h_(h), w_(w) {
    if (h < 8 || w < 8) throw UnsupportedDataError("spectrum needs grids of at least 8 x 8");
    std::lock_guard<std::mutex> lock(planner_mutex());
    in_ = fftw_alloc_complex(h * w);
    out_ = fftw_alloc_complex(h * w);
    plan_ = fftw_plan_dft_2d(static_cast<int>(h), static_cast<int>(w), in_, out_, FFTW_FORWARD, FFTW_ESTIMATE);
    if (!plan_) throw Error("FFT planning failed");
  }
  SpectrumTransform(const SpectrumTransform&) = delete;
  SpectrumTransform& operator=(const SpectrumTransform&) = delete;
  ~SpectrumTransform() {
    std::lock_guard<std::mutex> lock(planner_mutex());
    fftw_destroy_plan(plan_);
    fftw_free(in_);
    fftw_free(out_);
  }

  LatentSpectrum operator()(const double* x, double scale = 1.0) {
    const std::size_t n = h_ * w_;
    const std::size_t bins = spectrum_bins(h_, w_);
    LatentSpectrum s;
    s.mean_amplitude.assign(bins, 0.0);
    s.power.assign(bins, 0.0);
    s.count.assign(bins, 0);
    for (std::size_t i = 0; i < n; ++i) {
      const double v = x[i] * scale;
      in_[i][0] = v;
      in_[i][1] = 0.0;
      s.pixel_energy += v * v;
    }
    fftw_execute(plan_);
    const double norm = 1.0 / std::sqrt(static_cast<double>(n));
    for (std::size_t ky = 0; ky < h_; ++ky) {
      for (std::size_t kx = 0; kx < w_; ++kx) {
        const auto& f = out_[ky * w_ + kx];
        const double amp = std::hypot(f[0], f[1]) * norm;
        const std::size_t b = annulus_of(ky, kx, h_, w_);
        if (b == 0) {
          s.dc_amplitude = amp;
          continue;
        }
        s.mean_amplitude[b - 1] += amp;
        s.power[b - 1] += amp * amp;
        ++s.count[b - 1];
      }
    }
    for (std::size_t b = 0; b < bins; ++b) {
      if (s.count[b]) s.mean_amplitude[b] /= static_cast<double>(s.count[b]);
    }
    return s;
  }

 private:
  static std::mutex& planner_mutex() {
    static std::mutex m;
    return m;
  }
  std::size_t h_, w_;
  fftw_complex* in_ = nullptr;
  fftw_complex* out_ = nullptr;
  fftw_plan plan_ = nullptr;
};

struct SpectrumStep {
  int step = 0;
  int t = 0;
  double sigma = 0.0;
  double dc_log = 0.0;
  std::vector<double> log_amplitude;  // chain-averaged log of annulus mean amplitude
};

struct SpectrumProfile {
  std::size_t height = 0, width = 0, n_bins = 0, n_chains = 0;
  SpectrumScaling scaling = SpectrumScaling::VariancePreserving;
  std::vector<SpectrumStep> per_step;  // T entries plus the final sigma = 0 state
  double max_parseval_error = 0.0;     // worst relative error over all latents

  /// Fraction of annulus `bin`'s total log-amplitude change (first row to last)
  /// completed by each row. Bins are 1-based.
  std::vector<double> change_progress(std::size_t bin) const {
    if (bin < 1 || bin > n_bins) throw RangeError("annulus index out of range");
    if (per_step.size() < 2) throw DomainError("spectrum profile has fewer than two rows");
    const double l0 = per_step.front().log_amplitude[bin - 1];
    const double total = per_step.back().log_amplitude[bin - 1] - l0;
    std::vector<double> out;
    for (const auto& s : per_step) out.push_back(total == 0.0 ? 1.0 : (s.log_amplitude[bin - 1] - l0) / total);
    return out;
  }
};

inline double parseval_relative_error(const LatentSpectrum& s) {
  const double denom = std::max(s.pixel_energy, std::numeric_limits<double>::min());
  return std::abs(s.spectral_energy() - s.pixel_energy) / denom;
}

/// Per-step radial spectra. With VP scaling each latent is divided by
/// sqrt(1 + sigma^2) so the noise and data contributions share one scale.
inline SpectrumProfile spectrum_profile(const std::vector<Trajectory>& trajectories,
                                        SpectrumScaling scaling = SpectrumScaling::VariancePreserving,
                                        std::size_t workers = 1) {
  if (trajectories.empty()) throw DomainError("no trajectories to analyze");
  const SampleShape shape = trajectories.front().shape;
  if (!shape.is_grid()) throw UnsupportedDataError("spectrum analysis needs grid-shaped data, got point data");
  const std::size_t h = shape.height(), w = shape.width();
  if (h < 8 || w < 8) throw UnsupportedDataError("spectrum needs grids of at least 8 x 8");
  const std::size_t steps = trajectories.front().entries.size();
  for (const auto& tr : trajectories) {
    if (!(tr.shape == shape) || tr.entries.size() != steps) throw PairingError("trajectories disagree on shape or length");
    if (tr.final_latent.size() != h * w) throw ShapeError("trajectory lacks a final latent");
  }
  SpectrumProfile p;
  p.height = h;
  p.width = w;
  p.n_bins = spectrum_bins(h, w);
  p.n_chains = trajectories.size();
  p.scaling = scaling;
  const std::size_t rows = steps + 1;
  p.per_step.resize(rows);
  std::vector<double> worst(rows, 0.0);
  parallel_for(rows, workers, [&](std::size_t s) {
    SpectrumTransform fft(h, w);
    SpectrumStep out;
    out.step = static_cast<int>(s);
    const bool final_row = s == steps;
    out.t = final_row ? 0 : trajectories.front().entries[s].t;
    out.sigma = final_row ? 0.0 : trajectories.front().entries[s].sigma;
    out.log_amplitude.assign(p.n_bins, 0.0);
    const double scale = scaling == SpectrumScaling::VariancePreserving ? 1.0 / std::sqrt(1.0 + out.sigma * out.sigma) : 1.0;
    for (const auto& tr : trajectories) {
      const double* x = final_row ? tr.final_latent.data() : tr.entries[s].latent.data();
      const LatentSpectrum ls = fft(x, scale);
      worst[s] = std::max(worst[s], parseval_relative_error(ls));
      out.dc_log += std::log(std::max(ls.dc_amplitude, kLogFloor));
      for (std::size_t b = 0; b < p.n_bins; ++b) out.log_amplitude[b] += std::log(std::max(ls.mean_amplitude[b], kLogFloor));
    }
    const double n = static_cast<double>(trajectories.size());
    out.dc_log /= n;
    for (double& v : out.log_amplitude) v /= n;
    p.per_step[s] = std::move(out);
  });
  p.max_parseval_error = *std::max_element(worst.begin(), worst.end());
  return p;
}

inline void write_spectrum_csv(std::ostream& out, const SpectrumProfile& p) {
  std::vector<std::string> header{"step", "t", "sigma", "dc"};
  for (std::size_t b = 1; b <= p.n_bins; ++b) header.push_back("bin_" + std::to_string(b));
  csv::write_row(out, header);
  for (const auto& s : p.per_step) {
    std::vector<std::string> row{std::to_string(s.step), std::to_string(s.t), format_double(s.sigma), format_double(s.dc_log)};
    for (double v : s.log_amplitude) row.push_back(format_double(v));
    csv::write_row(out, row);
  }
}

// ---------------------------------------------------------------- pareto

struct ParetoPoint {
  std::string label;
  double cost = 0.0;
  double quality = 0.0;  // higher is better
  bool operator==(const ParetoPoint&) const = default;
};

/// Non-dominated points (cheaper is better, higher quality is better), sorted
/// by cost. Of several identical (cost, quality) points the first one is kept.
inline std::vector<ParetoPoint> pareto_frontier(const std::vector<ParetoPoint>& points) {
  for (const auto& p : points) {
    if (!std::isfinite(p.cost) || !std::isfinite(p.quality)) throw DomainError("pareto point '" + p.label + "' is not finite");
  }
  std::vector<ParetoPoint> sorted = points;
  std::stable_sort(sorted.begin(), sorted.end(), [](const ParetoPoint& a, const ParetoPoint& b) {
    if (a.cost != b.cost) return a.cost < b.cost;
    return a.quality > b.quality;
  });
  std::vector<ParetoPoint> out;
  for (const auto& p : sorted) {
    if (out.empty() || p.quality > out.back().quality) out.push_back(p);
  }
  return out;
}

inline void write_pareto_csv(std::ostream& out, const std::vector<ParetoPoint>& frontier) {
  csv::write_row(out, {"schedule", "cost", "quality"});
  for (const auto& p : frontier) csv::write_row(out, {p.label, format_double(p.cost), format_double(p.quality)});
}

}  // namespace tstitch
