// tests/optimizer_test.cc

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

#include "mppt/optimizer.h"

#include <cmath>
#include <limits>

#include <gtest/gtest.h>

namespace mppt {
namespace {

ParameterSet<float> Single(float v) {
  ParameterSet<float> p;
  p["w"] = MatrixF::Constant(1, 1, v);
  return p;
}

TEST(AdamTest, ZeroGradientLeavesParameters) {
  ParameterSet<float> p = Single(1.5f);
  p["b"] = MatrixF::Random(2, 3);
  ParameterSet<float> before = p;
  AdamOptimizer adam;
  for (int i = 0; i < 10; ++i) adam.Step(&p, ZerosLike(p), 1e-2);
  for (const auto &[name, v] : before) EXPECT_TRUE(p.at(name) == v);
}

TEST(AdamTest, ConstantGradientDescends) {
  ParameterSet<float> p = Single(0.0f);
  AdamOptimizer adam;
  float last = 0;
  for (int i = 0; i < 50; ++i) {
    adam.Step(&p, Single(2.0f), 1e-2);
    EXPECT_LT(p.at("w")(0, 0), last);
    last = p.at("w")(0, 0);
  }
}

TEST(AdamTest, QuadraticConverges) {
  // f(w) = (w - 3)^2
  ParameterSet<float> p = Single(0.0f);
  AdamOptimizer adam;
  for (int i = 0; i < 500; ++i) adam.Step(&p, Single(2.0f * (p.at("w")(0, 0) - 3.0f)), 1e-2);
  EXPECT_NEAR(p.at("w")(0, 0), 3.0f, 1e-3);
}

TEST(AdamTest, NonFiniteGradientSkipsUpdate) {
  ParameterSet<float> p = Single(1.0f);
  p["b"] = MatrixF::Constant(1, 1, 2.0f);
  ParameterSet<float> g = Single(std::numeric_limits<float>::quiet_NaN());
  g["b"] = MatrixF::Constant(1, 1, 1.0f);
  AdamOptimizer adam;
  EXPECT_FALSE(adam.Step(&p, g, 1e-2));
  EXPECT_EQ(adam.skipped_updates(), 1);
  EXPECT_EQ(p.at("w")(0, 0), 1.0f);
  EXPECT_EQ(p.at("b")(0, 0), 2.0f);
}

TEST(AdamTest, FilterFreezesParameters) {
  ParameterSet<float> p = Single(1.0f);
  p["head.weight"] = MatrixF::Constant(1, 1, 1.0f);
  ParameterSet<float> g = Single(1.0f);
  g["head.weight"] = MatrixF::Constant(1, 1, 1.0f);
  AdamOptimizer adam;
  adam.Step(&p, g, 1e-2, [](const std::string &n) { return n == "head.weight"; });
  EXPECT_EQ(p.at("w")(0, 0), 1.0f);
  EXPECT_LT(p.at("head.weight")(0, 0), 1.0f);
}

TEST(AdamTest, Deterministic) {
  auto run = [] {
    ParameterSet<float> p = Single(0.3f);
    p["m"] = MatrixF::Constant(2, 2, 0.1f);
    AdamOptimizer adam;
    for (int i = 0; i < 20; ++i) {
      ParameterSet<float> g = p;
      for (auto &[n, v] : g) v = v.array().sin();
      adam.Step(&p, g, 1e-2);
    }
    return p;
  };
  auto a = run(), b = run();
  for (const auto &[n, v] : a) EXPECT_TRUE(b.at(n) == v);
}

}  // namespace
}  // namespace mppt
