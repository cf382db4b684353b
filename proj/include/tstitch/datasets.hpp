// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0
//
// Toy data distributions. gmm and blob-images are Gaussian mixtures and so
// come with an exact posterior-mean denoiser; checkerboard and spiral do not.

#pragma once

#include "tstitch/gmm.hpp"
#include "tstitch/mlp.hpp"

namespace tstitch {

enum class DatasetKind { Gmm, Checkerboard, Spiral, BlobImages };

inline std::string to_string(DatasetKind k) {
  switch (k) {
    case DatasetKind::Gmm: return "gmm";
    case DatasetKind::Checkerboard: return "checkerboard";
    case DatasetKind::Spiral: return "spiral";
    case DatasetKind::BlobImages: return "blob-images";
  }
  return "?";
}

inline DatasetKind dataset_kind_from_string(std::string_view s) {
  if (s == "gmm") return DatasetKind::Gmm;
  if (s == "checkerboard") return DatasetKind::Checkerboard;
  if (s == "spiral") return DatasetKind::Spiral;
  if (s == "blob-images") return DatasetKind::BlobImages;
  throw ConfigError("unknown dataset kind '" + std::string(s) + "'");
}

struct DatasetSpec {
  DatasetKind kind = DatasetKind::Gmm;
  std::uint64_t seed = 0;

  // gmm: ring layout unless explicit parameters are given
  std::size_t components = 8;
  double radius = 4.0;
  double component_std = 0.5;
  std::optional<GmmParams> mixture;

  // checkerboard: points uniform over the dark cells of a cells x cells board on [-extent, extent]^2
  int cells = 4;
  double extent = 4.0;

  // spiral: two-armed, radius growing linearly with angle
  double turns = 1.5;
  double spiral_noise = 0.1;

  // blob-images: mixture whose means are smooth blob images
  std::size_t height = 16;
  std::size_t width = 16;
  std::size_t templates = 16;
  double blob_amplitude = 20.0;
  double blob_width = 2.0;
  double pixel_std = 1e-3;
};

struct Dataset {
  DatasetSpec spec;
  SampleShape shape;
  DataSampler sampler;
  std::optional<GmmParams> gmm;  // present for mixture-backed kinds
  int num_classes = 0;

  /// n clean samples from the stream `stream` of the dataset seed.
  Matrix draw(std::size_t n, std::uint64_t stream, std::vector<int>* labels = nullptr) const {
    Rng rng(spec.seed, stream);
    std::vector<int> l;
    Matrix x = sampler(n, rng, l);
    if (labels) *labels = std::move(l);
    return x;
  }
};

/// Mixture of `templates` images, each a sum of two Gaussian blobs with
/// positions drawn from `seed`; pixel noise pixel_std around each template.
inline GmmParams blob_image_mixture(const DatasetSpec& spec) {
  if (spec.height < 8 || spec.width < 8) throw ConfigError("blob images need at least 8 x 8 pixels");
  if (spec.templates == 0) throw ConfigError("blob images need at least one template");
  if (!(spec.pixel_std > 0.0) || !(spec.blob_width > 0.0)) throw ConfigError("blob width and pixel std must be positive");
  Rng rng(spec.seed, 0xB10B);
  const auto h = static_cast<double>(spec.height), w = static_cast<double>(spec.width);
  GmmParams p;
  const std::size_t k = spec.templates;
  p.weights.assign(k, 1.0 / static_cast<double>(k));
  p.weights.back() = 1.0 - std::accumulate(p.weights.begin(), p.weights.end() - 1, 0.0);
  p.variances.assign(k, spec.pixel_std * spec.pixel_std);
  p.means = Matrix::Zero(static_cast<Eigen::Index>(k), static_cast<Eigen::Index>(spec.height * spec.width));
  p.labels.resize(k);
  for (std::size_t c = 0; c < k; ++c) {
    p.labels[c] = static_cast<int>(c);
    for (int blob = 0; blob < 2; ++blob) {
      const double cy = rng.uniform() * h, cx = rng.uniform() * w;
      const double amp = spec.blob_amplitude * (0.5 + rng.uniform());
      for (std::size_t y = 0; y < spec.height; ++y) {
        for (std::size_t x = 0; x < spec.width; ++x) {
          // periodic distance so blobs wrap around the image edges
          double dy = std::abs(static_cast<double>(y) - cy), dx = std::abs(static_cast<double>(x) - cx);
          dy = std::min(dy, h - dy);
          dx = std::min(dx, w - dx);
          const double r2 = (dy * dy + dx * dx) / (spec.blob_width * spec.blob_width);
          p.means(static_cast<Eigen::Index>(c), static_cast<Eigen::Index>(y * spec.width + x)) += amp * std::exp(-0.5 * r2);
        }
      }
    }
  }
  return p;
}

inline Dataset make_dataset(const DatasetSpec& spec) {
  Dataset d;
  d.spec = spec;
  switch (spec.kind) {
    case DatasetKind::Gmm: {
      GmmParams p = spec.mixture ? *spec.mixture : GmmParams::ring(spec.components, spec.radius, spec.component_std);
      p.validate();
      d.shape = SampleShape::point(p.dim());
      d.num_classes = p.num_classes();
      d.gmm = p;
      d.sampler = [p](std::size_t n, Rng& rng, std::vector<int>& labels) {
        std::vector<int> comps;
        Matrix x = p.sample(n, rng, &comps);
        labels.assign(n, kNullCondition);
        if (p.labeled()) {
          for (std::size_t i = 0; i < n; ++i) labels[i] = p.labels[static_cast<std::size_t>(comps[i])];
        }
        return x;
      };
      break;
    }
    case DatasetKind::BlobImages: {
      GmmParams p = blob_image_mixture(spec);
      d.shape = SampleShape::grid(spec.height, spec.width);
      d.num_classes = p.num_classes();
      d.gmm = p;
      d.sampler = [p](std::size_t n, Rng& rng, std::vector<int>& labels) {
        std::vector<int> comps;
        Matrix x = p.sample(n, rng, &comps);
        labels.resize(n);
        for (std::size_t i = 0; i < n; ++i) labels[i] = p.labels[static_cast<std::size_t>(comps[i])];
        return x;
      };
      break;
    }
    case DatasetKind::Checkerboard: {
      if (spec.cells < 1 || !(spec.extent > 0.0)) throw ConfigError("checkerboard needs cells >= 1 and extent > 0");
      const int cells = spec.cells;
      const double extent = spec.extent;
      d.shape = SampleShape::point(2);
      d.sampler = [cells, extent](std::size_t n, Rng& rng, std::vector<int>& labels) {
        const double cell = 2.0 * extent / cells;
        std::vector<std::pair<int, int>> dark;
        for (int i = 0; i < cells; ++i) {
          for (int j = 0; j < cells; ++j) {
            if ((i + j) % 2 == 0) dark.emplace_back(i, j);
          }
        }
        Matrix x(static_cast<Eigen::Index>(n), 2);
        for (std::size_t r = 0; r < n; ++r) {
          const auto [i, j] = dark[rng.index(dark.size())];
          x(static_cast<Eigen::Index>(r), 0) = -extent + (i + rng.uniform()) * cell;
          x(static_cast<Eigen::Index>(r), 1) = -extent + (j + rng.uniform()) * cell;
        }
        labels.assign(n, kNullCondition);
        return x;
      };
      break;
    }
    case DatasetKind::Spiral: {
      if (!(spec.turns > 0.0) || !(spec.extent > 0.0) || spec.spiral_noise < 0.0) {
        throw ConfigError("spiral needs turns > 0, extent > 0, noise >= 0");
      }
      const double turns = spec.turns, extent = spec.extent, noise = spec.spiral_noise;
      d.shape = SampleShape::point(2);
      d.sampler = [turns, extent, noise](std::size_t n, Rng& rng, std::vector<int>& labels) {
        Matrix x(static_cast<Eigen::Index>(n), 2);
        const double span = 2.0 * std::numbers::pi * turns;
        for (std::size_t r = 0; r < n; ++r) {
          const double u = std::sqrt(rng.uniform());
          const double theta = u * span + (rng.bernoulli(0.5) ? std::numbers::pi : 0.0);
          const double rad = u * extent;
          x(static_cast<Eigen::Index>(r), 0) = rad * std::cos(theta) + noise * rng.normal();
          x(static_cast<Eigen::Index>(r), 1) = rad * std::sin(theta) + noise * rng.normal();
        }
        labels.assign(n, kNullCondition);
        return x;
      };
      break;
    }
  }
  return d;
}

}  // namespace tstitch
