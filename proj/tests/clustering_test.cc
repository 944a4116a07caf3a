// tests/clustering_test.cc

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

#include "mppt/clustering.h"

#include <random>

#include <gtest/gtest.h>

namespace mppt {
namespace {

MatrixF Blobs(int32_t n_per, const std::vector<std::vector<float>> &centres, float sigma, uint64_t seed,
              std::vector<int32_t> *truth) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> z(0.f, sigma);
  const int64_t d = static_cast<int64_t>(centres[0].size());
  MatrixF x(n_per * static_cast<int64_t>(centres.size()), d);
  for (size_t c = 0; c < centres.size(); ++c)
    for (int32_t i = 0; i < n_per; ++i) {
      const int64_t row = static_cast<int64_t>(c) * n_per + i;
      for (int64_t j = 0; j < d; ++j) x(row, j) = centres[c][j] + z(rng);
      if (truth) truth->push_back(static_cast<int32_t>(c));
    }
  return x;
}

TEST(CorpusSampleTest, FullFractionKeepsOrder) {
  MatrixF x = MatrixF::Random(20, 3);
  EXPECT_TRUE(CorpusSample(x, 1.0, 4) == x);
}

TEST(CorpusSampleTest, FloorRuleAndDeterminism) {
  MatrixF x = MatrixF::Random(1000, 2);
  MatrixF a = CorpusSample(x, 0.5, 9), b = CorpusSample(x, 0.5, 9);
  EXPECT_EQ(a.rows(), 500);
  EXPECT_TRUE(a == b);
  EXPECT_EQ(CorpusSample(x, 0.3333, 1).rows(), 333);
  EXPECT_THROW(CorpusSample(MatrixF(0, 2), 0.5, 1), InputError);
  EXPECT_THROW(CorpusSample(x, 0.0, 1), ConfigError);
}

TEST(KMeansTest, KEqualsNGivesZeroInertia) {
  MatrixF x(4, 2);
  x << 0, 0, 1, 0, 0, 5, 3, 3;
  auto r = KMeansFit(x, {.k = 4, .seed = 2});
  EXPECT_DOUBLE_EQ(r.inertia_history.back(), 0.0);
  for (int i = 0; i < 4; ++i) {
    bool found = false;
    for (int k = 0; k < 4; ++k) found |= r.model.centroids.row(k) == x.row(i);
    EXPECT_TRUE(found);
  }
}

TEST(KMeansTest, SingleClusterIsMean) {
  MatrixF x = MatrixF::Random(50, 3);
  auto r = KMeansFit(x, {.k = 1, .seed = 2});
  RowVector<double> mean = x.cast<double>().colwise().mean();
  for (int j = 0; j < 3; ++j) EXPECT_NEAR(r.model.centroids(0, j), mean(j), 1e-6);
}

TEST(KMeansTest, TooFewVectorsThrows) {
  EXPECT_THROW(KMeansFit(MatrixF::Random(3, 2), {.k = 4}), InputError);
}

TEST(KMeansTest, InertiaNonIncreasingAndStable) {
  for (uint64_t seed = 0; seed < 10; ++seed) {
    MatrixF x = Blobs(40, {{0, 0}, {3, 1}, {1, 4}, {5, 5}}, 1.0f, seed, nullptr);
    auto r = KMeansFit(x, {.k = 6, .seed = seed});
    for (size_t i = 1; i < r.inertia_history.size(); ++i)
      EXPECT_LE(r.inertia_history[i], r.inertia_history[i - 1] + 1e-9);
    if (r.converged) {
      // One more Lloyd step changes no assignment.
      auto ids = AssignIds(r.model, x);
      MatrixD sums = MatrixD::Zero(6, 2);
      std::vector<int> n(6, 0);
      for (int64_t i = 0; i < x.rows(); ++i) {
        sums.row(ids[i]) += x.row(i).cast<double>();
        ++n[ids[i]];
      }
      ClusterModel next = r.model;
      for (int k = 0; k < 6; ++k)
        if (n[k] > 0) next.centroids.row(k) = (sums.row(k) / n[k]).cast<float>();
      EXPECT_EQ(AssignIds(next, x), ids);
    }
  }
}

TEST(KMeansTest, TwoBlobsRecovered) {
  std::vector<int32_t> truth;
  MatrixF x = Blobs(100, {{0, 0, 0}, {10, 0, 0}}, 1.0f, 3, &truth);
  auto r = KMeansFit(x, {.k = 2, .seed = 5});
  auto ids = AssignIds(r.model, x);
  int agree = 0;
  for (size_t i = 0; i < ids.size(); ++i) agree += ids[i] == truth[i];
  EXPECT_TRUE(agree == 200 || agree == 0);
}

TEST(KMeansTest, DeterministicUnderSeed) {
  MatrixF x = Blobs(30, {{0, 0}, {4, 4}, {8, 0}}, 1.5f, 1, nullptr);
  auto a = KMeansFit(x, {.k = 3, .seed = 8}), b = KMeansFit(x, {.k = 3, .seed = 8});
  EXPECT_TRUE(a.model.centroids == b.model.centroids);
  EXPECT_EQ(a.inertia_history, b.inertia_history);
}

TEST(AssignTest, NearestAndTieBreak) {
  ClusterModel m;
  m.centroids.resize(5, 1);
  m.centroids << 0, -1, 10, 20, 1;
  MatrixF f(3, 1);
  f << 20, 0, 10;
  EXPECT_EQ(AssignIds(m, f), (std::vector<int32_t>{3, 0, 2}));
  // 0 is equidistant from centroids 1 (-1) and 4 (1) once centroid 0 moves.
  m.centroids(0, 0) = 100;
  MatrixF g(1, 1);
  g << 0;
  EXPECT_EQ(AssignIds(m, g), std::vector<int32_t>{1});
  EXPECT_THROW(AssignIds(m, MatrixF::Zero(2, 2)), InputError);
  MatrixF r = MatrixF::Random(30, 1);
  EXPECT_EQ(AssignIds(m, r), AssignIds(m, r));
}

TEST(SubsampleTest, TakeFirst) {
  FrameLabelSequence l{"u", {0, 0, 0, 0, 1, 1, 1, 1}, 100};
  auto s = SubsampleLabels(l, 4);
  EXPECT_EQ(s.ids, (std::vector<int32_t>{0, 1}));
  EXPECT_EQ(s.rate, 25);
  EXPECT_EQ(SubsampleIds({3, 1, 2}, 1), (std::vector<int32_t>{3, 1, 2}));
  EXPECT_EQ(SubsampleIds({1, 2, 3, 4, 5, 6, 7, 8, 9}, 4), (std::vector<int32_t>{1, 5}));
  EXPECT_THROW(SubsampleIds({1, 2, 3}, 4), InputError);
}

TEST(SubsampleTest, Majority) {
  EXPECT_EQ(SubsampleIds({2, 1, 1, 3, 0, 4, 4, 0}, 4, SubsampleRule::kMajority),
            (std::vector<int32_t>{1, 0}));
}

}  // namespace
}  // namespace mppt
