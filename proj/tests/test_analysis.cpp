// Copyright (C) 2026 tstitch contributors
// SPDX-License-Identifier: Apache-2.0

#include "tstitch/analysis.hpp"
#include "tstitch/datasets.hpp"
#include "tstitch/denoiser.hpp"
#include "tstitch/sampler.hpp"

#include <gtest/gtest.h>

using namespace tstitch;

namespace {

std::vector<Trajectory> run(const Roster& roster, const std::string& literal, int steps, std::size_t chains,
                            std::uint64_t seed) {
  auto cfg = SamplerConfig::make(SamplerKind::Ddim, steps);
  cfg.record_trajectory = true;
  cfg.record_denoised = true;
  return sample(parse_schedule_literal(literal), roster, cfg, chains, seed).trajectories;
}

Roster ring_roster() {
  Roster r;
  r["large"] = std::make_shared<GmmOracle>("large", GmmParams::ring(8, 2.0, 0.25), 10.0);
  r["small"] = degrade_oracle(*r["large"], 0.5, DegradeMode::BiasNoise, "small", 1.0);
  return r;
}

Roster blob_roster() {
  DatasetSpec spec;
  spec.kind = DatasetKind::BlobImages;
  const Dataset data = make_dataset(spec);
  Roster r;
  r["oracle"] = std::make_shared<GmmOracle>("oracle", *data.gmm, 10.0, data.shape);
  return r;
}

Trajectory grid_trajectory(const std::vector<double>& latent, std::size_t h, std::size_t w) {
  Trajectory tr;
  tr.shape = SampleShape::grid(h, w);
  tr.entries.push_back({1, 1.0, latent, {}, "x", 1});
  tr.final_latent = latent;
  return tr;
}

}  // namespace

TEST(Cosine, BasicCases) {
  EXPECT_DOUBLE_EQ(cosine_similarity({1, 2, 3}, {2, 4, 6}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({1, 0}, {0, 5}), 0.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({1, 1}, {-1, -1}), -1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({0, 0}, {0, 0}), 1.0);
  EXPECT_DOUBLE_EQ(cosine_similarity({0, 0}, {1, 0}), 0.0);
  EXPECT_THROW(cosine_similarity({1}, {1, 2}), PairingError);
}

TEST(Similarity, SelfPairIsOneEverywhere) {
  const auto tr = run(ring_roster(), "small:0.5,large:0.5", 40, 32, 3);
  for (auto operand : {SimilarityOperand::State, SimilarityOperand::Denoised}) {
    const auto p = trajectory_similarity(tr, tr, operand);
    ASSERT_EQ(p.per_step.size(), 40u);
    for (const auto& s : p.per_step) EXPECT_NEAR(s.similarity, 1.0, 1e-12);
  }
}

TEST(Similarity, OrthogonalStepGivesZero) {
  auto a = run(ring_roster(), "large:1", 10, 8, 1);
  auto b = a;
  for (std::size_t c = 0; c < a.size(); ++c) {
    a[c].entries[4].latent = {1.0, 0.0};
    b[c].entries[4].latent = {0.0, -3.0};
  }
  const auto p = trajectory_similarity(a, b);
  EXPECT_DOUBLE_EQ(p.per_step[4].similarity, 0.0);
  EXPECT_NEAR(p.per_step[3].similarity, 1.0, 1e-12);
}

TEST(Similarity, SymmetricAndBounded) {
  const auto roster = ring_roster();
  const auto a = run(roster, "small:1", 50, 64, 9);
  const auto b = run(roster, "large:1", 50, 64, 9);
  for (auto operand : {SimilarityOperand::State, SimilarityOperand::Denoised}) {
    const auto ab = trajectory_similarity(a, b, operand);
    const auto ba = trajectory_similarity(b, a, operand);
    ASSERT_EQ(ab.per_step.size(), 50u);
    for (std::size_t s = 0; s < 50; ++s) {
      EXPECT_EQ(ab.per_step[s].similarity, ba.per_step[s].similarity);
      EXPECT_GE(ab.per_step[s].similarity, -1.0);
      EXPECT_LE(ab.per_step[s].similarity, 1.0);
    }
  }
}

TEST(Similarity, PairingErrors) {
  const auto roster = ring_roster();
  const auto a = run(roster, "large:1", 10, 8, 1);
  EXPECT_THROW(trajectory_similarity(a, run(roster, "large:1", 10, 7, 1)), PairingError);
  EXPECT_THROW(trajectory_similarity(a, run(roster, "large:1", 12, 8, 1)), PairingError);
  EXPECT_THROW(trajectory_similarity({}, {}), PairingError);
  auto shuffled = a;
  std::swap(shuffled[0], shuffled[1]);
  EXPECT_THROW(trajectory_similarity(a, shuffled), PairingError);
}

TEST(Similarity, CsvHasOneRowPerStep) {
  const auto a = run(ring_roster(), "large:1", 15, 4, 2);
  std::ostringstream out;
  write_similarity_csv(out, trajectory_similarity(a, a));
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 16);
  EXPECT_EQ(text.substr(0, text.find('\n')), "step,t,sigma,similarity,pair,operand,n_chains");
}

TEST(Spectrum, AnnulusBinning) {
  EXPECT_EQ(spectrum_bins(16, 16), 8u);
  EXPECT_EQ(spectrum_bins(8, 12), 4u);
  EXPECT_EQ(annulus_of(0, 0, 16, 16), 0u);
  EXPECT_EQ(annulus_of(0, 1, 16, 16), 1u);
  EXPECT_EQ(annulus_of(15, 0, 16, 16), 1u);  // wraps to frequency -1
  EXPECT_EQ(annulus_of(1, 1, 16, 16), 1u);   // radius 1.414 rounds to 1
  EXPECT_EQ(annulus_of(2, 2, 16, 16), 3u);   // radius 2.83
  EXPECT_EQ(annulus_of(8, 8, 16, 16), 8u);   // corner clamps to the last bin
}

TEST(Spectrum, ConstantImageHasOnlyDc) {
  SpectrumTransform fft(16, 16);
  std::vector<double> x(256, 3.0);
  const auto s = fft(x.data());
  EXPECT_NEAR(s.dc_amplitude, 3.0 * 16.0, 1e-12);
  for (double a : s.mean_amplitude) EXPECT_LE(a, kLogFloor);
  const auto p = spectrum_profile({grid_trajectory(x, 16, 16)}, SpectrumScaling::Raw);
  for (double v : p.per_step[0].log_amplitude) EXPECT_DOUBLE_EQ(v, std::log(kLogFloor));
}

TEST(Spectrum, ParsevalPerLatent) {
  Rng rng(4);
  for (auto [h, w] : {std::pair<std::size_t, std::size_t>{8, 8}, {16, 16}, {12, 20}, {9, 15}}) {
    SpectrumTransform fft(h, w);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> x(h * w);
      for (auto& v : x) v = rng.normal() * 5 + (trial % 3);
      EXPECT_LE(parseval_relative_error(fft(x.data())), 1e-6) << h << "x" << w;
    }
  }
}

TEST(Spectrum, WhiteNoiseAtSigmaMaxIsFlat) {
  const auto tr = run(blob_roster(), "oracle:1", 10, 256, 21);
  const auto p = spectrum_profile(tr, SpectrumScaling::Raw);
  ASSERT_EQ(p.per_step.size(), 11u);
  EXPECT_LE(p.max_parseval_error, 1e-6);
  const auto& first = p.per_step.front().log_amplitude;
  const double hi = *std::max_element(first.begin(), first.end());
  const double lo = *std::min_element(first.begin(), first.end());
  EXPECT_LE(std::exp(hi - lo), 1.2);
}

TEST(Spectrum, ProfileShapeAndCsv) {
  const auto tr = run(blob_roster(), "oracle:1", 10, 8, 2);
  const auto p = spectrum_profile(tr);
  EXPECT_EQ(p.n_bins, 8u);
  for (const auto& s : p.per_step) {
    ASSERT_EQ(s.log_amplitude.size(), 8u);
    for (double v : s.log_amplitude) EXPECT_TRUE(std::isfinite(v));
  }
  EXPECT_EQ(p.per_step.back().sigma, 0.0);
  const auto progress = p.change_progress(1);
  EXPECT_DOUBLE_EQ(progress.front(), 0.0);
  EXPECT_DOUBLE_EQ(progress.back(), 1.0);
  EXPECT_THROW(p.change_progress(0), RangeError);
  std::ostringstream out;
  write_spectrum_csv(out, p);
  const std::string text = out.str();
  EXPECT_EQ(std::count(text.begin(), text.end(), '\n'), 12);
}

TEST(Spectrum, RejectsPointAndTinyData) {
  const auto pts = run(ring_roster(), "large:1", 5, 4, 1);
  EXPECT_THROW(spectrum_profile(pts), UnsupportedDataError);
  EXPECT_THROW(spectrum_profile({grid_trajectory(std::vector<double>(49, 1.0), 7, 7)}), UnsupportedDataError);
  EXPECT_THROW(SpectrumTransform(4, 16), UnsupportedDataError);
}

TEST(Pareto, WorkedExamples) {
  const ParetoPoint solo{"a", 3.0, 1.0};
  EXPECT_EQ(pareto_frontier({solo}), (std::vector<ParetoPoint>{solo}));
  const std::vector<ParetoPoint> pts{{"a", 1, 1}, {"b", 2, 2}, {"c", 3, 1.5}};
  EXPECT_EQ(pareto_frontier(pts), (std::vector<ParetoPoint>{{"a", 1, 1}, {"b", 2, 2}}));
  EXPECT_TRUE(pareto_frontier({}).empty());
  // duplicates collapse to the first occurrence
  EXPECT_EQ(pareto_frontier({{"x", 1, 1}, {"y", 1, 1}}), (std::vector<ParetoPoint>{{"x", 1, 1}}));
  EXPECT_THROW(pareto_frontier({{"nan", 1, std::nan("")}}), DomainError);
}

TEST(Pareto, MatchesBruteForceAndIsIdempotent) {
  Rng rng(8);
  for (int trial = 0; trial < 5; ++trial) {
    std::vector<ParetoPoint> pts;
    for (int i = 0; i < 1000; ++i) {
      // coarse grid so ties and duplicates occur
      pts.push_back({"p" + std::to_string(i), std::round(rng.uniform() * 50), std::round(rng.uniform() * 50)});
    }
    const auto front = pareto_frontier(pts);
    std::vector<ParetoPoint> brute;
    for (std::size_t i = 0; i < pts.size(); ++i) {
      bool dominated = false;
      for (std::size_t j = 0; j < pts.size() && !dominated; ++j) {
        if (i == j) continue;
        const auto &p = pts[i], &q = pts[j];
        const bool better = q.cost <= p.cost && q.quality >= p.quality && (q.cost < p.cost || q.quality > p.quality);
        const bool earlier_twin = q.cost == p.cost && q.quality == p.quality && j < i;
        dominated = better || earlier_twin;
      }
      if (!dominated) brute.push_back(pts[i]);
    }
    std::sort(brute.begin(), brute.end(), [](const ParetoPoint& a, const ParetoPoint& b) { return a.cost < b.cost; });
    EXPECT_EQ(front, brute);
    EXPECT_EQ(pareto_frontier(front), front);
  }
}
