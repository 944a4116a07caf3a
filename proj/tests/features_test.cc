// tests/features_test.cc

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

#include "mppt/features.h"

#include <cmath>
#include <numbers>
#include <vector>

#include <gtest/gtest.h>

namespace mppt {
namespace {

std::vector<float> Sine(double freq, int32_t rate, double seconds, double amp = 0.5) {
  std::vector<float> x(static_cast<size_t>(std::llround(seconds * rate)));
  for (size_t i = 0; i < x.size(); ++i)
    x[i] = static_cast<float>(amp * std::sin(2 * std::numbers::pi * freq * i / rate));
  return x;
}

TEST(FbankTest, OneSecondShape) {
  auto f = ComputeFbank(Sine(440, 16000, 1.0), 16000);
  EXPECT_EQ(f.NumFrames(), 100);
  EXPECT_EQ(f.Dim(), 80);
  EXPECT_EQ(f.rate, 100);
}

TEST(FbankTest, FrameCountRoundsDuration) {
  EXPECT_EQ(ComputeFbank(Sine(300, 16000, 0.234), 16000).NumFrames(), 23);
  EXPECT_EQ(ComputeFbank(Sine(300, 16000, 0.236), 16000).NumFrames(), 24);
  EXPECT_EQ(ComputeFbank(std::vector<float>(5, 0.1f), 16000).NumFrames(), 1);
}

TEST(FbankTest, SilenceIsEnergyFloor) {
  FbankOptions opts;
  auto f = ComputeFbank(std::vector<float>(8000, 0.0f), 16000, opts);
  const float floor = static_cast<float>(std::log(opts.energy_floor));
  EXPECT_TRUE((f.frames.array() == floor).all());
}

TEST(FbankTest, NothingBelowFloor) {
  FbankOptions opts;
  std::vector<float> x = Sine(1000, 16000, 0.5, 1e-6);
  auto f = ComputeFbank(x, 16000, opts);
  EXPECT_GE(f.frames.minCoeff(), static_cast<float>(std::log(opts.energy_floor)));
}

TEST(FbankTest, EmptyInputThrows) {
  EXPECT_THROW(ComputeFbank(std::vector<float>{}, 16000), InputError);
  EXPECT_THROW(ComputeFbank(std::vector<float>(100, 0.f), 4000), InputError);
}

// The loudest mel bin of a pure tone is the bin whose centre is nearest to
// the tone, computed independently from the mel formula.
TEST(FbankTest, SineArgmaxIsNearestMelCentre) {
  FbankOptions opts;
  const int32_t rate = 16000;
  const double lo = HzToMel(opts.low_freq), hi = HzToMel(rate / 2.0);
  std::vector<double> centres;
  for (int m = 1; m <= opts.n_mels; ++m) centres.push_back(MelToHz(lo + (hi - lo) * m / (opts.n_mels + 1)));
  auto lib = MelBinCentres(opts, rate);
  ASSERT_EQ(lib.size(), centres.size());
  for (size_t i = 0; i < lib.size(); ++i) EXPECT_NEAR(lib[i], centres[i], 1e-6);

  for (double freq : {250.0, 700.0, 1500.0, 3100.0, 6000.0}) {
    size_t nearest = 0;
    for (size_t i = 1; i < centres.size(); ++i)
      if (std::abs(centres[i] - freq) < std::abs(centres[nearest] - freq)) nearest = i;
    auto f = ComputeFbank(Sine(freq, rate, 0.5), rate, opts);
    Eigen::Index arg;
    f.frames.row(25).maxCoeff(&arg);
    EXPECT_EQ(static_cast<size_t>(arg), nearest) << "freq " << freq;
  }
}

TEST(FbankTest, Deterministic) {
  auto x = Sine(523, 16000, 0.3);
  auto a = ComputeFbank(x, 16000), b = ComputeFbank(x, 16000);
  EXPECT_TRUE(a.frames == b.frames);
}

TEST(MfccTest, ShapeIs39) {
  auto f = ComputeMfccDeltas(Sine(440, 16000, 0.4), 16000);
  EXPECT_EQ(f.Dim(), 39);
  EXPECT_EQ(f.NumFrames(), 40);
  auto g = ComputeMfccDeltas(Sine(440, 16000, 0.4), 16000);
  EXPECT_TRUE(f.frames == g.frames);
}

TEST(MfccTest, ConstantInputHasZeroDeltas) {
  auto f = ComputeMfccDeltas(std::vector<float>(4000, 0.0f), 16000);
  EXPECT_TRUE((f.frames.rightCols(26).array() == 0.0f).all());
}

TEST(DeltaTest, RampGivesSlope) {
  // Slope 3 ramp: interior deltas equal the slope exactly under the
  // regression weights sum n^2 = 5, denominator 10.
  MatrixF x(12, 2);
  for (int t = 0; t < 12; ++t) {
    x(t, 0) = 3.0f * t;
    x(t, 1) = 7.0f;
  }
  MatrixF d = ComputeDeltas(x, 2);
  for (int t = 2; t < 10; ++t) {
    EXPECT_FLOAT_EQ(d(t, 0), 3.0f);
    EXPECT_FLOAT_EQ(d(t, 1), 0.0f);
  }
  // First frame with replicated edges: (1*(3-0) + 2*(6-0)) / 10.
  EXPECT_FLOAT_EQ(d(0, 0), 1.5f);
}

TEST(StackTest, Shapes) {
  FeatureSequence f;
  f.frames = MatrixF::Random(8, 80);
  auto s = StackFrames(f, 4);
  EXPECT_EQ(s.NumFrames(), 2);
  EXPECT_EQ(s.Dim(), 320);
  EXPECT_EQ(s.rate, 25);
  EXPECT_TRUE(StackFrames(f, 1).frames == f.frames);
  f.frames = MatrixF::Random(9, 3);
  EXPECT_EQ(StackFrames(f, 4).NumFrames(), 2);
  f.frames = MatrixF::Random(3, 3);
  EXPECT_THROW(StackFrames(f, 4), InputError);
}

TEST(StackTest, ConcatenatesConsecutiveFrames) {
  FeatureSequence f;
  f.frames = MatrixF::Random(11, 3);
  auto s = StackFrames(f, 4);
  for (int t = 0; t < 2; ++t)
    for (int k = 0; k < 4; ++k)
      for (int d = 0; d < 3; ++d) EXPECT_EQ(s.frames(t, k * 3 + d), f.frames(t * 4 + k, d));
  auto u = UnstackFrames(s, 4);
  EXPECT_EQ(u.rate, 100);
  EXPECT_TRUE(u.frames == f.frames.topRows(8));
}

}  // namespace
}  // namespace mppt
