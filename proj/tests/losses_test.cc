// tests/losses_test.cc

// Copyright 2026  The mppt Authors

// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#include "mppt/losses.h"

#include <cmath>
#include <limits>
#include <random>

#include <gtest/gtest.h>

namespace mppt {
namespace {

MatrixD RandomLogProbs(int64_t T, int64_t V, std::mt19937_64 &rng) {
  std::normal_distribution<double> z(0.0, 1.5);
  MatrixD logits(T, V);
  for (int64_t i = 0; i < T; ++i)
    for (int64_t j = 0; j < V; ++j) logits(i, j) = z(rng);
  return LogSoftmax(logits);
}

TokenSequence RandomTarget(int64_t max_len, int64_t V, std::mt19937_64 &rng) {
  std::uniform_int_distribution<int64_t> len(0, max_len);
  std::uniform_int_distribution<int32_t> tok(1, static_cast<int32_t>(V - 1));
  TokenSequence t(static_cast<size_t>(len(rng)));
  for (auto &x : t) x = tok(rng);
  return t;
}

TEST(CtcTest, EmptyTargetIsAllBlank) {
  std::mt19937_64 rng(1);
  MatrixD lp = RandomLogProbs(5, 3, rng);
  auto r = CtcLoss(lp, TokenSequence{});
  EXPECT_NEAR(r.loss, -lp.col(0).sum(), 1e-12);
  MatrixD lp2 = lp.topRows(2);
  EXPECT_NEAR(CtcBruteForce(lp2, TokenSequence{}), -(lp(0, 0) + lp(1, 0)), 1e-12);
}

TEST(CtcTest, SingleFrame) {
  std::mt19937_64 rng(2);
  MatrixD lp = RandomLogProbs(1, 4, rng);
  EXPECT_NEAR(CtcLoss(lp, TokenSequence{2}).loss, -lp(0, 2), 1e-12);
}

TEST(CtcTest, HalfProbabilityExample) {
  MatrixD lp = MatrixD::Constant(2, 2, std::log(0.5));
  EXPECT_NEAR(CtcLoss(lp, TokenSequence{1}).loss, -std::log(0.75), 1e-12);
  EXPECT_NEAR(CtcBruteForce(lp, TokenSequence{1}), -std::log(0.75), 1e-12);
}

TEST(CtcTest, MatchesBruteForce) {
  std::mt19937_64 rng(3);
  for (int i = 0; i < 300; ++i) {
    const int64_t T = 1 + static_cast<int64_t>(rng() % 6), V = 2 + static_cast<int64_t>(rng() % 3);
    MatrixD lp = RandomLogProbs(T, V, rng);
    TokenSequence target = RandomTarget(3, V, rng);
    auto r = CtcLoss(lp, target);
    double b = CtcBruteForce(lp, target);
    if (std::isinf(b)) {
      EXPECT_FALSE(r.feasible);
      EXPECT_TRUE(std::isinf(r.loss));
    } else {
      EXPECT_TRUE(r.feasible);
      EXPECT_NEAR(r.loss, b, 1e-9);
    }
  }
}

TEST(CtcTest, InfeasibleTargetIsSentinel) {
  MatrixD lp = MatrixD::Constant(2, 3, std::log(1.0 / 3));
  TokenSequence rep{1, 1};  // needs 3 frames
  EXPECT_EQ(CtcMinFrames(rep), 3);
  auto r = CtcLoss(lp, rep, 0, true);
  EXPECT_FALSE(r.feasible);
  EXPECT_EQ(r.loss, std::numeric_limits<double>::infinity());
  EXPECT_TRUE(std::isinf(CtcBruteForce(lp, rep)));
  EXPECT_THROW(CtcLoss(lp, TokenSequence{0}), InputError);
}

TEST(CtcTest, BruteForceRejectsLargeInstances) {
  MatrixD lp = MatrixD::Zero(9, 3);
  EXPECT_THROW(CtcBruteForce(lp, TokenSequence{1}), InputError);
}

TEST(CtcTest, PermutationCovariant) {
  std::mt19937_64 rng(4);
  MatrixD lp = RandomLogProbs(6, 4, rng);
  TokenSequence target{1, 3, 3};
  // Swap tokens 1 and 2, leave 3.
  MatrixD perm = lp;
  perm.col(1) = lp.col(2);
  perm.col(2) = lp.col(1);
  EXPECT_NEAR(CtcLoss(lp, target).loss, CtcLoss(perm, TokenSequence{2, 3, 3}).loss, 1e-12);
}

TEST(CtcTest, LongSequenceStaysFinite) {
  std::mt19937_64 rng(5);
  MatrixD lp = RandomLogProbs(1000, 30, rng);
  TokenSequence target = RandomTarget(0, 30, rng);
  for (int i = 0; i < 200; ++i) target.push_back(1 + static_cast<int32_t>(rng() % 29));
  auto r = CtcLoss(lp, target, 0, true);
  EXPECT_TRUE(r.feasible);
  EXPECT_TRUE(std::isfinite(r.loss));
  EXPECT_TRUE(r.grad_log_probs.allFinite());
  auto f = CtcLoss<float>(lp.cast<float>(), target);
  EXPECT_TRUE(std::isfinite(f.loss));
}

template <typename Real>
double CtcGradError(uint64_t seed) {
  std::mt19937_64 rng(seed);
  MatrixD base = RandomLogProbs(5, 4, rng);
  TokenSequence target{1, 2};
  Matrix<Real> lp = base.cast<Real>();
  auto r = CtcLoss(lp, target, 0, true);
  const Real h = std::is_same_v<Real, float> ? Real(1e-2) : Real(1e-5);
  double num = 0, den = 0;
  for (int64_t i = 0; i < lp.rows(); ++i)
    for (int64_t j = 0; j < lp.cols(); ++j) {
      Matrix<Real> p = lp, m = lp;
      p(i, j) += h;
      m(i, j) -= h;
      double fd = (static_cast<double>(CtcLoss(p, target).loss) - CtcLoss(m, target).loss) / (2.0 * h);
      num += std::pow(fd - r.grad_log_probs(i, j), 2);
      den += std::pow(fd, 2);
    }
  return std::sqrt(num / den);
}

TEST(CtcTest, GradientMatchesFiniteDifferences) {
  for (uint64_t seed = 0; seed < 5; ++seed) {
    EXPECT_LT(CtcGradError<double>(seed), 1e-5);
    EXPECT_LT(CtcGradError<float>(seed), 1e-3);
  }
}

TEST(CtcTest, GreedyDecode) {
  auto path = [](std::vector<int32_t> ids, int V) {
    MatrixD lp = MatrixD::Constant(static_cast<int64_t>(ids.size()), V, -5.0);
    for (size_t t = 0; t < ids.size(); ++t) lp(static_cast<int64_t>(t), ids[t]) = -0.1;
    return lp;
  };
  EXPECT_EQ(CtcGreedyDecode(path({0, 1, 1, 0, 2}, 3)), (TokenSequence{1, 2}));
  EXPECT_EQ(CtcGreedyDecode(path({0, 0, 0}, 3)), TokenSequence{});
  EXPECT_EQ(CtcGreedyDecode(path({1, 0, 1}, 3)), (TokenSequence{1, 1}));
  EXPECT_EQ(CtcCollapse(std::vector<int32_t>{2, 2, 0, 2, 1, 1}), (TokenSequence{2, 2, 1}));
}

TEST(MaskedPredictionTest, ConfidentCorrectLogitsGiveZeroLoss) {
  std::vector<int32_t> labels{0, 2, 1, 1};
  MatrixD logits = MatrixD::Zero(4, 3);
  for (int t = 0; t < 4; ++t) logits(t, labels[t]) = 100;
  MaskSpec m = MaskFromStarts(4, std::vector<int32_t>{1}, 2);
  auto r = MaskedPredictionLoss(logits, labels, m, LossConfig{0.5, 0.5, 0});
  EXPECT_NEAR(r.loss, 0.0, 1e-12);
}

TEST(MaskedPredictionTest, UniformLogits) {
  std::vector<int32_t> labels{0, 2, 1, 1, 0};
  MaskSpec m = MaskFromStarts(5, std::vector<int32_t>{1}, 2);
  auto r = MaskedPredictionLoss<double>(MatrixD::Zero(5, 3), labels, m, LossConfig{0.7, 0.4, 0});
  EXPECT_NEAR(r.loss, 1.1 * std::log(3.0), 1e-12);
  EXPECT_EQ(r.n_masked, 2);
  EXPECT_EQ(r.n_unmasked, 3);
}

TEST(MaskedPredictionTest, EmptyMaskedRegionContributesZero) {
  std::vector<int32_t> labels{0, 1, 1};
  MaskSpec none = MaskFromStarts(3, std::vector<int32_t>{}, 2);
  auto r = MaskedPredictionLoss<double>(MatrixD::Random(3, 2), labels, none, LossConfig{});
  EXPECT_EQ(r.loss, 0.0);
  EXPECT_EQ(r.n_masked, 0);
}

TEST(MaskedPredictionTest, UnmaskedLogitsIgnoredByDefault) {
  std::vector<int32_t> labels{0, 1, 2, 1, 0, 2};
  MaskSpec m = MaskFromStarts(6, std::vector<int32_t>{2}, 2);
  MatrixD logits = MatrixD::Random(6, 3);
  MatrixD zeroed = logits;
  for (int t = 0; t < 6; ++t)
    if (!m.masked[t]) zeroed.row(t).setZero();
  EXPECT_EQ(MaskedPredictionLoss(logits, labels, m, LossConfig{}).loss,
            MaskedPredictionLoss(zeroed, labels, m, LossConfig{}).loss);
}

TEST(MaskedPredictionTest, Errors) {
  MaskSpec m = MaskFromStarts(2, std::vector<int32_t>{0}, 1);
  EXPECT_THROW(MaskedPredictionLoss<double>(MatrixD::Zero(2, 3), std::vector<int32_t>{0, 3}, m, LossConfig{}),
               InputError);
  EXPECT_THROW(LossConfig({0, 0, 0}).Validate(), ConfigError);
  EXPECT_THROW(LossConfig({-1, 1, 0}).Validate(), ConfigError);
}

TEST(MaskedPredictionTest, GradientMatchesFiniteDifferences) {
  std::mt19937_64 rng(9);
  MatrixD logits = RandomLogProbs(6, 4, rng) * 2.0;
  std::vector<int32_t> labels{0, 3, 1, 1, 2, 0};
  MaskSpec m = MaskFromStarts(6, std::vector<int32_t>{1, 4}, 2);
  LossConfig cfg{0.5, 0.5, 0};
  auto r = MaskedPredictionLoss(logits, labels, m, cfg, true);
  for (int64_t i = 0; i < 6; ++i)
    for (int64_t j = 0; j < 4; ++j) {
      MatrixD p = logits, q = logits;
      p(i, j) += 1e-6;
      q(i, j) -= 1e-6;
      double fd = (MaskedPredictionLoss(p, labels, m, cfg).loss - MaskedPredictionLoss(q, labels, m, cfg).loss) / 2e-6;
      EXPECT_NEAR(fd, r.grad_logits(i, j), 1e-7);
    }
}

}  // namespace
}  // namespace mppt
