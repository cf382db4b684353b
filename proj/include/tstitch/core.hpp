// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Shared vocabulary: error types, seeded random streams, the dense latent
// container and a small fixed-partition parallel loop.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <functional>
#include <mutex>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <system_error>
#include <thread>
#include <vector>

namespace tstitch {

// ---------------------------------------------------------------- errors

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct RangeError : Error {
  using Error::Error;
};
struct DomainError : Error {
  using Error::Error;
};
struct ShapeError : Error {
  using Error::Error;
};
struct SingularityError : Error {
  using Error::Error;
};
struct OrderingError : Error {
  using Error::Error;
};
struct ConditionError : Error {
  using Error::Error;
};
struct PairingError : Error {
  using Error::Error;
};
struct UnsupportedDataError : Error {
  using Error::Error;
};
struct NoFeasibleScheduleError : Error {
  using Error::Error;
};
struct ParseError : Error {
  using Error::Error;
};
struct ConfigError : Error {
  using Error::Error;
};
struct IoError : Error {
  using Error::Error;
};

// ---------------------------------------------------------------- numbers

/// Shortest decimal text that parses back to the identical double.
inline std::string format_double(double v) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view text) {
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw ParseError("not a number: '" + std::string(text) + "'");
  }
  return v;
}

/// Half-away-from-zero rounding to the nearest integer.
inline long long round_half_away(double v) { return std::llround(v); }

// ---------------------------------------------------------------- randomness

/// A reproducible random stream identified by (seed, stream id).
///
/// Distinct stream ids give statistically independent sequences, so a chain
/// that owns stream `c` produces the same draws whether it runs alone, in a
/// batch, or on another thread.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0, std::uint64_t stream = 0) : seed_(seed), stream_(stream) {
    std::uint64_t a = splitmix(seed ^ 0x9E3779B97F4A7C15ULL);
    std::uint64_t b = splitmix(stream + 0xD1B54A32D192ED03ULL);
    std::seed_seq seq{static_cast<std::uint32_t>(a), static_cast<std::uint32_t>(a >> 32),
                      static_cast<std::uint32_t>(b), static_cast<std::uint32_t>(b >> 32)};
    engine_.seed(seq);
  }

  std::uint64_t seed() const noexcept { return seed_; }
  std::uint64_t stream() const noexcept { return stream_; }

  double normal() { return normal_(engine_); }
  double uniform() { return uniform_(engine_); }
  bool bernoulli(double p) { return uniform() < p; }
  std::size_t index(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }
  std::mt19937_64& engine() noexcept { return engine_; }

  /// Derive an independent child stream; used to split one experiment seed
  /// into purpose-specific streams (data, noise, projections...).
  static std::uint64_t derive(std::uint64_t seed, std::string_view purpose) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (char c : purpose) {
      h ^= static_cast<unsigned char>(c);
      h *= 0x100000001b3ULL;
    }
    return splitmix(seed ^ h);
  }

 private:
  static std::uint64_t splitmix(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
  std::uint64_t stream_;
  std::mt19937_64 engine_;
  std::normal_distribution<double> normal_{0.0, 1.0};
  std::uniform_real_distribution<double> uniform_{0.0, 1.0};
};

// ---------------------------------------------------------------- tensors

/// Rows are samples (chains), columns the flattened per-sample dims.
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;

/// Per-sample shape: {d} for point data, {H, W} for grid data.
struct SampleShape {
  std::vector<std::size_t> dims{2};

  std::size_t size() const {
    return std::accumulate(dims.begin(), dims.end(), std::size_t{1}, std::multiplies<>{});
  }
  bool is_grid() const { return dims.size() == 2; }
  std::size_t height() const { return is_grid() ? dims[0] : 1; }
  std::size_t width() const { return is_grid() ? dims[1] : dims[0]; }
  bool operator==(const SampleShape&) const = default;

  static SampleShape point(std::size_t d) { return SampleShape{{d}}; }
  static SampleShape grid(std::size_t h, std::size_t w) { return SampleShape{{h, w}}; }
};

/// A batch of latents x_t at a common noise level.
struct LatentState {
  Matrix data;
  SampleShape shape;
  double sigma = 0.0;

  LatentState() = default;
  LatentState(Matrix d, SampleShape s, double sig) : data(std::move(d)), shape(std::move(s)), sigma(sig) {
    if (static_cast<std::size_t>(data.cols()) != shape.size()) {
      throw ShapeError("latent columns (" + std::to_string(data.cols()) +
                       ") do not match sample shape size (" + std::to_string(shape.size()) + ")");
    }
  }

  Eigen::Index batch() const { return data.rows(); }
  Eigen::Index dim() const { return data.cols(); }
  bool finite() const { return data.allFinite(); }
};

inline void require_same_shape(const Matrix& a, const Matrix& b, std::string_view what) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(what) + ": shape mismatch (" + std::to_string(a.rows()) + "x" +
                     std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) + "x" +
                     std::to_string(b.cols()) + ")");
  }
}

// ---------------------------------------------------------------- parallelism

/// Run body(i) for i in [0, n) on up to `workers` threads. Task boundaries
/// are fixed by the caller, so results do not depend on the worker count.
/// The first exception thrown by any task is rethrown after all threads join.
inline void parallel_for(std::size_t n, std::size_t workers, const std::function<void(std::size_t)>& body) {
  workers = std::max<std::size_t>(1, std::min(workers, n));
  if (workers <= 1) {
    for (std::size_t i = 0; i < n; ++i) body(i);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  std::vector<std::thread> pool;
  pool.reserve(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&] {
      for (std::size_t i = next++; i < n; i = next++) {
        try {
          body(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------- statistics

inline double mean_of(const std::vector<double>& v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

inline double median_of(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

/// Standard error of the mean (sample standard deviation / sqrt(n)).
inline double std_error_of(const std::vector<double>& v) {
  if (v.size() < 2) return 0.0;
  const double m = mean_of(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1)) / std::sqrt(static_cast<double>(v.size()));
}

/// 64-bit FNV-1a, stable across platforms; used for config and file hashes.
inline std::uint64_t fnv1a(std::string_view bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (char c : bytes) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace tstitch
