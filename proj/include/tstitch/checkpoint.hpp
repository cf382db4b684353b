// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Denoiser checkpoint file:
//   "TSTD" | u32 version | u32 metadata length | metadata (JSON text) | f32 payload
// All integers and floats little-endian. Mixture oracles keep their
// parameters in the metadata (as shortest round-trip decimals) and have an
// empty payload; MLPs store every parameter in the payload.

#pragma once

#include "tstitch/mlp.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace tstitch {

inline constexpr char kCheckpointMagic[4] = {'T', 'S', 'T', 'D'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

namespace detail {

inline void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xFFu));
}

inline std::uint32_t get_u32(const std::string& in, std::size_t at) {
  if (at + 4 > in.size()) throw IoError("checkpoint truncated");
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(in[at + static_cast<std::size_t>(i)])) << (8 * i);
  return v;
}

inline nlohmann::json gmm_to_json(const GmmParams& p) {
  nlohmann::json j;
  j["weights"] = nlohmann::json::array();
  for (double w : p.weights) j["weights"].push_back(format_double(w));
  j["variances"] = nlohmann::json::array();
  for (double v : p.variances) j["variances"].push_back(format_double(v));
  j["means"] = nlohmann::json::array();
  for (Eigen::Index i = 0; i < p.means.rows(); ++i) {
    nlohmann::json row = nlohmann::json::array();
    for (Eigen::Index k = 0; k < p.means.cols(); ++k) row.push_back(format_double(p.means(i, k)));
    j["means"].push_back(row);
  }
  j["labels"] = p.labels;
  return j;
}

inline GmmParams gmm_from_json(const nlohmann::json& j) {
  GmmParams p;
  for (const auto& w : j.at("weights")) p.weights.push_back(parse_double(w.get<std::string>()));
  for (const auto& v : j.at("variances")) p.variances.push_back(parse_double(v.get<std::string>()));
  const auto& means = j.at("means");
  const auto k = static_cast<Eigen::Index>(means.size());
  const auto d = k > 0 ? static_cast<Eigen::Index>(means.at(0).size()) : 0;
  p.means.resize(k, d);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index c = 0; c < d; ++c) p.means(i, c) = parse_double(means.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(c)).get<std::string>());
  }
  p.labels = j.at("labels").get<std::vector<int>>();
  return p;
}

}  // namespace detail

/// Serialize a denoiser to the checkpoint byte layout.
inline std::string encode_checkpoint(const Denoiser& d) {
  static_assert(std::endian::native == std::endian::little, "checkpoint writer assumes a little-endian host");
  nlohmann::json meta;
  meta["kind"] = to_string(d.kind());
  meta["id"] = d.id();
  meta["cost_per_eval"] = format_double(d.cost_per_eval());
  meta["shape"] = d.shape().dims;
  std::vector<float> payload;
  if (const auto* o = dynamic_cast<const GmmOracle*>(&d)) {
    meta["mixture"] = detail::gmm_to_json(o->params());
  } else if (const auto* g = dynamic_cast<const DegradedOracle*>(&d)) {
    meta["mixture"] = detail::gmm_to_json(g->params());
    meta["level"] = format_double(g->level());
    meta["mode"] = to_string(g->mode());
  } else if (const auto* m = dynamic_cast<const MlpDenoiser*>(&d)) {
    const auto& a = m->architecture();
    meta["architecture"] = {{"data_dim", a.data_dim},
                            {"width", a.width},
                            {"depth", a.depth},
                            {"noise_frequencies", a.noise_frequencies},
                            {"class_embedding", a.class_embedding},
                            {"num_classes", a.num_classes},
                            {"sigma_data", format_double(a.sigma_data)}};
    meta["training"] = m->training_config();
    meta["parameter_count"] = m->parameter_count();
    payload = m->flat_parameters();
  } else {
    throw IoError("cannot checkpoint denoiser '" + d.id() + "'");
  }
  const std::string text = meta.dump();
  std::string out(kCheckpointMagic, 4);
  detail::put_u32(out, kCheckpointVersion);
  detail::put_u32(out, static_cast<std::uint32_t>(text.size()));
  out += text;
  const std::size_t at = out.size();
  out.resize(at + payload.size() * sizeof(float));
  if (!payload.empty()) std::memcpy(out.data() + at, payload.data(), payload.size() * sizeof(float));
  return out;
}

inline std::unique_ptr<Denoiser> decode_checkpoint(const std::string& bytes) {
  if (bytes.size() < 12 || std::memcmp(bytes.data(), kCheckpointMagic, 4) != 0) throw IoError("not a tstitch checkpoint");
  const std::uint32_t version = detail::get_u32(bytes, 4);
  if (version != kCheckpointVersion) throw IoError("unsupported checkpoint version " + std::to_string(version));
  const std::uint32_t len = detail::get_u32(bytes, 8);
  if (12 + static_cast<std::size_t>(len) > bytes.size()) throw IoError("checkpoint metadata truncated");
  const auto meta = nlohmann::json::parse(bytes.substr(12, len));
  const std::size_t payload_bytes = bytes.size() - 12 - len;
  if (payload_bytes % sizeof(float) != 0) throw IoError("checkpoint payload is not whole f32 values");

  const auto kind = denoiser_kind_from_string(meta.at("kind").get<std::string>());
  const auto id = meta.at("id").get<std::string>();
  const double cost = parse_double(meta.at("cost_per_eval").get<std::string>());
  SampleShape shape{meta.at("shape").get<std::vector<std::size_t>>()};
  switch (kind) {
    case DenoiserKind::GmmOracle:
      return std::make_unique<GmmOracle>(id, detail::gmm_from_json(meta.at("mixture")), cost, shape);
    case DenoiserKind::DegradedOracle:
      return std::make_unique<DegradedOracle>(id, detail::gmm_from_json(meta.at("mixture")),
                                              parse_double(meta.at("level").get<std::string>()),
                                              degrade_mode_from_string(meta.at("mode").get<std::string>()), cost, shape);
    case DenoiserKind::Mlp: {
      const auto& a = meta.at("architecture");
      MlpArchitecture arch;
      arch.data_dim = a.at("data_dim").get<std::size_t>();
      arch.width = a.at("width").get<std::size_t>();
      arch.depth = a.at("depth").get<std::size_t>();
      arch.noise_frequencies = a.at("noise_frequencies").get<std::size_t>();
      arch.class_embedding = a.at("class_embedding").get<std::size_t>();
      arch.num_classes = a.at("num_classes").get<int>();
      arch.sigma_data = parse_double(a.at("sigma_data").get<std::string>());
      auto m = std::make_unique<MlpDenoiser>(id, arch, cost, shape);
      std::vector<float> payload(payload_bytes / sizeof(float));
      if (payload_bytes) std::memcpy(payload.data(), bytes.data() + 12 + len, payload_bytes);
      m->set_flat_parameters(payload);
      TrainingConfig tc;
      merge_training_config(meta.at("training"), tc);
      m->set_training_config(tc);
      return m;
    }
  }
  throw IoError("unknown checkpoint kind");
}

inline void save_checkpoint(const Denoiser& d, const std::string& path) {
  std::ofstream f(path, std::ios::binary | std::ios::trunc);
  if (!f) throw IoError("cannot write checkpoint '" + path + "'");
  const std::string bytes = encode_checkpoint(d);
  f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  if (!f) throw IoError("failed writing checkpoint '" + path + "'");
}

inline std::string read_file_bytes(const std::string& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw IoError("cannot read '" + path + "'");
  std::ostringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

inline std::unique_ptr<Denoiser> load_checkpoint(const std::string& path) { return decode_checkpoint(read_file_bytes(path)); }

}  // namespace tstitch
