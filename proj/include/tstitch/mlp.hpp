// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Trainable MLP denoisers and denoising score matching.

#pragma once

#include "tstitch/denoiser.hpp"

#include "json.hpp"

#include <functional>

namespace tstitch {

using MatF = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using RowF = Eigen::Matrix<float, 1, Eigen::Dynamic>;

/// Draws n clean samples and their class labels (-1 when unlabeled).
using DataSampler = std::function<Matrix(std::size_t n, Rng& rng, std::vector<int>& labels)>;

enum class LossWeighting { Uniform, Snr };

struct SigmaSampling {
  enum class Kind { LogNormal, LogUniform };
  Kind kind = Kind::LogUniform;
  double p_mean = -1.2;  // log-normal
  double p_std = 1.2;
  double lo = 0.002;  // log-uniform
  double hi = 80.0;

  double draw(Rng& rng) const {
    if (kind == Kind::LogNormal) return std::exp(p_mean + p_std * rng.normal());
    return std::exp(std::log(lo) + rng.uniform() * (std::log(hi) - std::log(lo)));
  }
};

struct LrSchedule {
  double base = 2e-3;
  std::size_t warmup = 100;
  bool cosine = true;
  double final_fraction = 0.05;

  double at(std::size_t step, std::size_t total) const {
    double lr = base;
    if (warmup > 0 && step < warmup) lr *= static_cast<double>(step + 1) / static_cast<double>(warmup);
    if (cosine && total > 1) {
      const double p = static_cast<double>(step) / static_cast<double>(total - 1);
      lr *= final_fraction + (1.0 - final_fraction) * 0.5 * (1.0 + std::cos(std::numbers::pi * p));
    }
    return lr;
  }
};

struct TrainingConfig {
  LossWeighting loss_weighting = LossWeighting::Snr;
  SigmaSampling sigma_sampling;
  /// When set, sigma is drawn log-uniformly inside [lo, hi] only.
  std::optional<std::pair<double, double>> sigma_range_restriction;
  std::size_t steps = 5000;
  std::size_t batch = 256;
  LrSchedule lr;
  std::size_t width = 128;
  std::size_t depth = 3;
  double label_dropout = 0.1;
  /// Data scale used by the preconditioning; estimated from data when unset.
  std::optional<double> sigma_data;

  void validate(bool allow_zero_steps = false) const {
    if (sigma_range_restriction && !(sigma_range_restriction->first < sigma_range_restriction->second)) {
      throw DomainError("sigma range restriction needs lo < hi");
    }
    if (sigma_range_restriction && !(sigma_range_restriction->first > 0.0)) {
      throw DomainError("sigma range restriction needs lo > 0");
    }
    if (!allow_zero_steps && steps == 0) throw DomainError("training needs steps > 0");
    if (batch == 0) throw DomainError("training needs batch > 0");
    if (width == 0 || depth == 0) throw DomainError("MLP width and depth must be positive");
    if (!(label_dropout >= 0.0 && label_dropout <= 1.0)) throw DomainError("label dropout must lie in [0, 1]");
    if (!(lr.base > 0.0)) throw DomainError("learning rate must be positive");
  }

  double draw_sigma(Rng& rng) const {
    if (sigma_range_restriction) {
      const double lo = std::log(sigma_range_restriction->first);
      const double hi = std::log(sigma_range_restriction->second);
      return std::exp(lo + rng.uniform() * (hi - lo));
    }
    return sigma_sampling.draw(rng);
  }
};

inline void to_json(nlohmann::json& j, const TrainingConfig& c) {
  j = nlohmann::json{
      {"loss_weighting", c.loss_weighting == LossWeighting::Snr ? "snr" : "uniform"},
      {"sigma_sampling",
       {{"kind", c.sigma_sampling.kind == SigmaSampling::Kind::LogNormal ? "log-normal" : "log-uniform"},
        {"p_mean", c.sigma_sampling.p_mean},
        {"p_std", c.sigma_sampling.p_std},
        {"lo", c.sigma_sampling.lo},
        {"hi", c.sigma_sampling.hi}}},
      {"steps", c.steps},
      {"batch", c.batch},
      {"lr",
       {{"base", c.lr.base}, {"warmup", c.lr.warmup}, {"cosine", c.lr.cosine}, {"final_fraction", c.lr.final_fraction}}},
      {"width", c.width},
      {"depth", c.depth},
      {"label_dropout", c.label_dropout}};
  j["sigma_range_restriction"] = c.sigma_range_restriction
                                     ? nlohmann::json::array({c.sigma_range_restriction->first, c.sigma_range_restriction->second})
                                     : nlohmann::json(nullptr);
  j["sigma_data"] = c.sigma_data ? nlohmann::json(*c.sigma_data) : nlohmann::json(nullptr);
}

namespace detail {
inline void require_keys(const nlohmann::json& j, std::initializer_list<std::string_view> allowed, std::string_view where) {
  if (!j.is_object()) throw ConfigError(std::string(where) + ": expected an object");
  for (auto it = j.begin(); it != j.end(); ++it) {
    if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end()) {
      throw ConfigError(std::string(where) + ": unknown key '" + it.key() + "'");
    }
  }
}
}  // namespace detail

/// Fields absent from `j` keep the values already in `c`; unknown keys are errors.
inline void merge_training_config(const nlohmann::json& j, TrainingConfig& c) {
  detail::require_keys(j,
                       {"loss_weighting", "sigma_sampling", "sigma_range_restriction", "steps", "batch", "lr", "width",
                        "depth", "label_dropout", "sigma_data"},
                       "training config");
  if (j.contains("loss_weighting")) {
    const auto w = j.at("loss_weighting").get<std::string>();
    if (w == "snr") c.loss_weighting = LossWeighting::Snr;
    else if (w == "uniform") c.loss_weighting = LossWeighting::Uniform;
    else throw ConfigError("unknown loss weighting '" + w + "'");
  }
  if (j.contains("sigma_sampling")) {
    const auto& s = j.at("sigma_sampling");
    detail::require_keys(s, {"kind", "p_mean", "p_std", "lo", "hi"}, "sigma_sampling");
    if (s.contains("kind")) {
      const auto k = s.at("kind").get<std::string>();
      if (k == "log-normal") c.sigma_sampling.kind = SigmaSampling::Kind::LogNormal;
      else if (k == "log-uniform") c.sigma_sampling.kind = SigmaSampling::Kind::LogUniform;
      else throw ConfigError("unknown sigma sampling '" + k + "'");
    }
    if (s.contains("p_mean")) c.sigma_sampling.p_mean = s.at("p_mean").get<double>();
    if (s.contains("p_std")) c.sigma_sampling.p_std = s.at("p_std").get<double>();
    if (s.contains("lo")) c.sigma_sampling.lo = s.at("lo").get<double>();
    if (s.contains("hi")) c.sigma_sampling.hi = s.at("hi").get<double>();
  }
  if (j.contains("sigma_range_restriction")) {
    const auto& r = j.at("sigma_range_restriction");
    if (r.is_null()) c.sigma_range_restriction.reset();
    else c.sigma_range_restriction = std::make_pair(r.at(0).get<double>(), r.at(1).get<double>());
  }
  if (j.contains("steps")) c.steps = j.at("steps").get<std::size_t>();
  if (j.contains("batch")) c.batch = j.at("batch").get<std::size_t>();
  if (j.contains("lr")) {
    const auto& l = j.at("lr");
    detail::require_keys(l, {"base", "warmup", "cosine", "final_fraction"}, "lr");
    if (l.contains("base")) c.lr.base = l.at("base").get<double>();
    if (l.contains("warmup")) c.lr.warmup = l.at("warmup").get<std::size_t>();
    if (l.contains("cosine")) c.lr.cosine = l.at("cosine").get<bool>();
    if (l.contains("final_fraction")) c.lr.final_fraction = l.at("final_fraction").get<double>();
  }
  if (j.contains("width")) c.width = j.at("width").get<std::size_t>();
  if (j.contains("depth")) c.depth = j.at("depth").get<std::size_t>();
  if (j.contains("label_dropout")) c.label_dropout = j.at("label_dropout").get<double>();
  if (j.contains("sigma_data")) {
    const auto& s = j.at("sigma_data");
    if (s.is_null()) c.sigma_data.reset();
    else c.sigma_data = s.get<double>();
  }
}

struct MlpArchitecture {
  std::size_t data_dim = 2;
  std::size_t width = 128;
  std::size_t depth = 3;
  std::size_t noise_frequencies = 6;  // features: c_noise plus sin/cos at 2^j
  std::size_t class_embedding = 8;
  int num_classes = 0;
  double sigma_data = 1.0;

  std::size_t noise_features() const { return 1 + 2 * noise_frequencies; }
  std::size_t input_dim() const { return data_dim + noise_features() + class_embedding; }
};

/// MLP denoiser with EDM-style preconditioning:
///   D(x; sigma, c) = c_skip x + c_out F(c_in x, embed(log sigma), embed(c)).
/// Parameters are float32 so checkpoints round-trip bit-exactly.
class MlpDenoiser : public Denoiser {
 public:
  struct Layer {
    MatF weight;  // in x out
    RowF bias;
  };

  MlpDenoiser(std::string id, MlpArchitecture arch, double cost_per_eval, SampleShape shape)
      : Denoiser(std::move(id), DenoiserKind::Mlp, cost_per_eval, std::move(shape)), arch_(arch) {
    if (arch_.data_dim != this->shape().size()) throw ShapeError("MLP data_dim does not match sample shape");
    std::size_t in = arch_.input_dim();
    for (std::size_t l = 0; l <= arch_.depth; ++l) {
      const std::size_t out = l == arch_.depth ? arch_.data_dim : arch_.width;
      layers_.push_back({MatF::Zero(static_cast<Eigen::Index>(in), static_cast<Eigen::Index>(out)),
                         RowF::Zero(static_cast<Eigen::Index>(out))});
      in = out;
    }
    embedding_ = MatF::Zero(arch_.num_classes + 1, static_cast<Eigen::Index>(arch_.class_embedding));
  }

  /// He-uniform hidden weights, small output layer.
  void initialize(Rng& rng) {
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      auto& w = layers_[l].weight;
      const bool last = l + 1 == layers_.size();
      const double bound = (last ? 0.1 : 1.0) * std::sqrt(6.0 / static_cast<double>(w.rows()));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = static_cast<float>((2.0 * rng.uniform() - 1.0) * bound);
      layers_[l].bias.setZero();
    }
    for (Eigen::Index i = 0; i < embedding_.size(); ++i) embedding_.data()[i] = static_cast<float>(rng.normal());
  }

  const MlpArchitecture& architecture() const noexcept { return arch_; }
  std::vector<Layer>& layers() noexcept { return layers_; }
  const std::vector<Layer>& layers() const noexcept { return layers_; }
  MatF& embedding() noexcept { return embedding_; }
  const MatF& embedding() const noexcept { return embedding_; }

  std::size_t parameter_count() const {
    std::size_t n = static_cast<std::size_t>(embedding_.size());
    for (const auto& l : layers_) n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
    return n;
  }

  /// All parameters in checkpoint order: per layer weight (row-major) then bias, then the class table.
  std::vector<float> flat_parameters() const {
    std::vector<float> out;
    out.reserve(parameter_count());
    for (const auto& l : layers_) {
      out.insert(out.end(), l.weight.data(), l.weight.data() + l.weight.size());
      out.insert(out.end(), l.bias.data(), l.bias.data() + l.bias.size());
    }
    out.insert(out.end(), embedding_.data(), embedding_.data() + embedding_.size());
    return out;
  }

  void set_flat_parameters(const std::vector<float>& p) {
    if (p.size() != parameter_count()) throw ShapeError("parameter payload size does not match architecture");
    std::size_t at = 0;
    auto take = [&](float* dst, Eigen::Index n) {
      std::copy(p.begin() + static_cast<std::ptrdiff_t>(at), p.begin() + static_cast<std::ptrdiff_t>(at) + n, dst);
      at += static_cast<std::size_t>(n);
    };
    for (auto& l : layers_) {
      take(l.weight.data(), l.weight.size());
      take(l.bias.data(), l.bias.size());
    }
    take(embedding_.data(), embedding_.size());
  }

  const TrainingConfig& training_config() const noexcept { return training_; }
  void set_training_config(const TrainingConfig& c) { training_ = c; }

  bool supports_condition(int condition) const override {
    return condition == kNullCondition || (condition >= 0 && condition < arch_.num_classes);
  }

  Matrix denoise(const Matrix& x, double sigma, int condition) const override {
    check_input(x);
    if (!supports_condition(condition)) throw ConditionError("MLP '" + id() + "' has no class " + std::to_string(condition));
    if (sigma == 0.0) return x;
    std::vector<double> sigmas(static_cast<std::size_t>(x.rows()), sigma);
    std::vector<int> labels(static_cast<std::size_t>(x.rows()), condition);
    Cache cache;
    return forward(x, sigmas, labels, cache);
  }

  std::unique_ptr<Denoiser> clone() const override { return std::make_unique<MlpDenoiser>(*this); }

  // ------------------------------------------------------------ training internals

  struct Cache {
    std::vector<MatF> pre;  // pre-activations per hidden layer
    std::vector<MatF> act;  // act[0] = input features
    std::vector<double> c_skip, c_out;
    std::vector<int> rows_class;  // embedding row used by each sample
  };

  struct Preconditioning {
    double c_skip, c_out, c_in, c_noise;
  };

  Preconditioning precondition(double sigma) const {
    const double sd2 = arch_.sigma_data * arch_.sigma_data;
    const double s2 = sigma * sigma;
    return {sd2 / (s2 + sd2), sigma * arch_.sigma_data / std::sqrt(s2 + sd2), 1.0 / std::sqrt(s2 + sd2),
            0.25 * std::log(sigma)};
  }

  Matrix forward(const Matrix& x, const std::vector<double>& sigmas, const std::vector<int>& labels, Cache& cache) const {
    const Eigen::Index b = x.rows();
    const auto d = static_cast<Eigen::Index>(arch_.data_dim);
    const auto nf = static_cast<Eigen::Index>(arch_.noise_features());
    const auto ce = static_cast<Eigen::Index>(arch_.class_embedding);
    MatF input(b, d + nf + ce);
    cache.c_skip.resize(static_cast<std::size_t>(b));
    cache.c_out.resize(static_cast<std::size_t>(b));
    cache.rows_class.resize(static_cast<std::size_t>(b));
    for (Eigen::Index r = 0; r < b; ++r) {
      const auto p = precondition(sigmas[static_cast<std::size_t>(r)]);
      cache.c_skip[static_cast<std::size_t>(r)] = p.c_skip;
      cache.c_out[static_cast<std::size_t>(r)] = p.c_out;
      for (Eigen::Index j = 0; j < d; ++j) input(r, j) = static_cast<float>(p.c_in * x(r, j));
      input(r, d) = static_cast<float>(p.c_noise);
      for (std::size_t k = 0; k < arch_.noise_frequencies; ++k) {
        const double f = std::ldexp(1.0, static_cast<int>(k)) * p.c_noise;
        input(r, d + 1 + 2 * static_cast<Eigen::Index>(k)) = static_cast<float>(std::sin(f));
        input(r, d + 2 + 2 * static_cast<Eigen::Index>(k)) = static_cast<float>(std::cos(f));
      }
      const int label = labels[static_cast<std::size_t>(r)];
      const int row = label < 0 ? arch_.num_classes : label;
      cache.rows_class[static_cast<std::size_t>(r)] = row;
      input.block(r, d + nf, 1, ce) = embedding_.row(row);
    }
    cache.act.clear();
    cache.pre.clear();
    cache.act.push_back(std::move(input));
    for (std::size_t l = 0; l < layers_.size(); ++l) {
      MatF z = cache.act.back() * layers_[l].weight;
      z.rowwise() += layers_[l].bias;
      if (l + 1 == layers_.size()) {
        cache.act.push_back(std::move(z));
        break;
      }
      MatF a = z.unaryExpr([](float v) { return v / (1.0f + std::exp(-v)); });
      cache.pre.push_back(std::move(z));
      cache.act.push_back(std::move(a));
    }
    const MatF& f = cache.act.back();
    Matrix out(b, d);
    for (Eigen::Index r = 0; r < b; ++r) {
      for (Eigen::Index j = 0; j < d; ++j) {
        out(r, j) = cache.c_skip[static_cast<std::size_t>(r)] * x(r, j) +
                    cache.c_out[static_cast<std::size_t>(r)] * static_cast<double>(f(r, j));
      }
    }
    return out;
  }

  struct Gradients {
    std::vector<MatF> weight;
    std::vector<RowF> bias;
    MatF embedding;
  };

  /// Backpropagate dLoss/dF (batch x data_dim) through the cached forward pass.
  Gradients backward(const MatF& d_out, const Cache& cache) const {
    Gradients g;
    const std::size_t n = layers_.size();
    g.weight.resize(n);
    g.bias.resize(n);
    MatF delta = d_out;
    for (std::size_t l = n; l-- > 0;) {
      g.weight[l] = cache.act[l].transpose() * delta;
      g.bias[l] = delta.colwise().sum();
      MatF prev = delta * layers_[l].weight.transpose();
      if (l > 0) {
        const MatF& z = cache.pre[l - 1];
        for (Eigen::Index i = 0; i < prev.size(); ++i) {
          const float s = 1.0f / (1.0f + std::exp(-z.data()[i]));
          prev.data()[i] *= s * (1.0f + z.data()[i] * (1.0f - s));
        }
      } else {
        const auto off = static_cast<Eigen::Index>(arch_.data_dim + arch_.noise_features());
        const auto ce = static_cast<Eigen::Index>(arch_.class_embedding);
        g.embedding = MatF::Zero(embedding_.rows(), embedding_.cols());
        for (Eigen::Index r = 0; r < prev.rows(); ++r) {
          g.embedding.row(cache.rows_class[static_cast<std::size_t>(r)]) += prev.block(r, off, 1, ce);
        }
      }
      delta = std::move(prev);
    }
    return g;
  }

 private:
  MlpArchitecture arch_;
  std::vector<Layer> layers_;
  MatF embedding_;
  TrainingConfig training_;
};

/// Training diverged; the loss trace up to the failure is attached.
struct TrainingError : Error {
  TrainingError(const std::string& what, std::vector<double> trace) : Error(what), loss_trace(std::move(trace)) {}
  std::vector<double> loss_trace;
};

struct TrainingResult {
  std::unique_ptr<MlpDenoiser> model;
  std::vector<double> loss_trace;
};

/// Trailing moving average used to judge training progress.
inline std::vector<double> smooth_trace(const std::vector<double>& trace, std::size_t window) {
  std::vector<double> out(trace.size());
  double acc = 0.0;
  for (std::size_t i = 0; i < trace.size(); ++i) {
    acc += trace[i];
    if (i >= window) acc -= trace[i - window];
    out[i] = acc / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

namespace detail {

struct AdamState {
  std::vector<MatF> mw, vw;
  std::vector<RowF> mb, vb;
  MatF me, ve;
  std::size_t t = 0;

  explicit AdamState(const MlpDenoiser& m) {
    for (const auto& l : m.layers()) {
      mw.push_back(MatF::Zero(l.weight.rows(), l.weight.cols()));
      vw.push_back(MatF::Zero(l.weight.rows(), l.weight.cols()));
      mb.push_back(RowF::Zero(l.bias.size()));
      vb.push_back(RowF::Zero(l.bias.size()));
    }
    me = MatF::Zero(m.embedding().rows(), m.embedding().cols());
    ve = me;
  }

  template <typename P, typename G, typename S>
  static void update(P& param, const G& grad, S& m, S& v, float lr, float c1, float c2) {
    constexpr float b1 = 0.9f, b2 = 0.999f, eps = 1e-8f;
    m = b1 * m + (1.0f - b1) * grad;
    v = b2 * v + (1.0f - b2) * grad.cwiseProduct(grad);
    param.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
  }

  void step(MlpDenoiser& model, const MlpDenoiser::Gradients& g, double lr) {
    ++t;
    const auto c1 = static_cast<float>(1.0 - std::pow(0.9, static_cast<double>(t)));
    const auto c2 = static_cast<float>(1.0 - std::pow(0.999, static_cast<double>(t)));
    const auto lrf = static_cast<float>(lr);
    auto& layers = model.layers();
    for (std::size_t l = 0; l < layers.size(); ++l) {
      update(layers[l].weight, g.weight[l], mw[l], vw[l], lrf, c1, c2);
      update(layers[l].bias, g.bias[l], mb[l], vb[l], lrf, c1, c2);
    }
    update(model.embedding(), g.embedding, me, ve, lrf, c1, c2);
  }
};

inline double estimate_sigma_data(const DataSampler& data, Rng& rng) {
  std::vector<int> labels;
  Matrix x = data(4096, rng, labels);
  const double mean = x.mean();
  const double var = (x.array() - mean).square().mean();
  return std::max(1e-3, std::sqrt(var));
}

/// Continue training `model` in place; returns the per-step loss trace.
inline std::vector<double> run_training(MlpDenoiser& model, const DataSampler& data, const TrainingConfig& cfg, Rng& rng) {
  AdamState adam(model);
  std::vector<double> trace;
  trace.reserve(cfg.steps);
  const auto& arch = model.architecture();
  const double sd2 = arch.sigma_data * arch.sigma_data;
  std::vector<int> labels;
  std::vector<double> sigmas(cfg.batch);
  MlpDenoiser::Cache cache;
  for (std::size_t step = 0; step < cfg.steps; ++step) {
    Matrix x0 = data(cfg.batch, rng, labels);
    if (static_cast<std::size_t>(x0.cols()) != arch.data_dim) throw ShapeError("training data dim does not match model");
    labels.resize(cfg.batch, kNullCondition);
    Matrix x = x0;
    for (std::size_t r = 0; r < cfg.batch; ++r) {
      sigmas[r] = cfg.draw_sigma(rng);
      for (Eigen::Index j = 0; j < x.cols(); ++j) x(static_cast<Eigen::Index>(r), j) += sigmas[r] * rng.normal();
      if (arch.num_classes == 0 || labels[r] < 0 || rng.bernoulli(cfg.label_dropout)) labels[r] = kNullCondition;
    }
    Matrix denoised = model.forward(x, sigmas, labels, cache);
    MatF d_out(x.rows(), x.cols());
    double loss = 0.0;
    for (std::size_t r = 0; r < cfg.batch; ++r) {
      const double s2 = sigmas[r] * sigmas[r];
      const double weight = cfg.loss_weighting == LossWeighting::Snr ? (s2 + sd2) / (s2 * sd2) : 1.0;
      const auto ri = static_cast<Eigen::Index>(r);
      for (Eigen::Index j = 0; j < x.cols(); ++j) {
        const double res = denoised(ri, j) - x0(ri, j);
        loss += weight * res * res;
        d_out(ri, j) = static_cast<float>(2.0 * weight * res * cache.c_out[r] / static_cast<double>(cfg.batch));
      }
    }
    loss /= static_cast<double>(cfg.batch);
    trace.push_back(loss);
    if (!std::isfinite(loss)) {
      throw TrainingError("training of '" + model.id() + "' diverged at step " + std::to_string(step), trace);
    }
    adam.step(model, model.backward(d_out, cache), cfg.lr.at(step, cfg.steps));
  }
  return trace;
}

}  // namespace detail

/// Fit an MLP denoiser by denoising score matching:
///   min E[ lambda(sigma) || D(x0 + n; sigma, c) - x0 ||^2 ].
inline TrainingResult train_denoiser(const DataSampler& data, const SampleShape& shape, int num_classes,
                                     const TrainingConfig& cfg, Rng& rng, const std::string& id = "mlp",
                                     std::optional<double> cost_per_eval = {}) {
  cfg.validate();
  MlpArchitecture arch;
  arch.data_dim = shape.size();
  arch.width = cfg.width;
  arch.depth = cfg.depth;
  arch.num_classes = num_classes;
  TrainingConfig resolved = cfg;
  arch.sigma_data = cfg.sigma_data ? *cfg.sigma_data : detail::estimate_sigma_data(data, rng);
  resolved.sigma_data = arch.sigma_data;
  // default declared cost grows with width: 1 unit per 64 hidden units
  const double cost = cost_per_eval.value_or(static_cast<double>(cfg.width) / 64.0);
  auto model = std::make_unique<MlpDenoiser>(id, arch, cost, shape);
  model->initialize(rng);
  model->set_training_config(resolved);
  TrainingResult result;
  result.loss_trace = detail::run_training(*model, data, resolved, rng);
  result.model = std::move(model);
  return result;
}

/// Continue training a copy of `base`. With a sigma range restriction this is
/// interval finetuning; zero steps returns an identical copy.
inline TrainingResult finetune_denoiser(const MlpDenoiser& base, const DataSampler& data, TrainingConfig cfg, Rng& rng,
                                        std::optional<std::string> id = {}) {
  cfg.validate(/*allow_zero_steps=*/true);
  auto model = std::make_unique<MlpDenoiser>(base);
  if (id) model->rename(*id);
  TrainingResult result;
  if (cfg.steps > 0) result.loss_trace = detail::run_training(*model, data, cfg, rng);
  result.model = std::move(model);
  return result;
}

}  // namespace tstitch
