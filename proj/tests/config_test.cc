// tests/config_test.cc

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

#include "mppt/config.h"

#include <gtest/gtest.h>

namespace mppt {
namespace {

TEST(KeyValueConfigTest, SectionsCommentsAndOverrides) {
  auto kv = KeyValueConfig::FromString(
      "seed = 3  # run seed\n"
      "[encoder]\n"
      "n_layers = 4\n"
      "\n"
      "[finetune]\n"
      "spec_augment = true\n"
      "lr_reduction = 40\n");
  EXPECT_EQ(kv.GetInt("seed"), 3);
  EXPECT_EQ(kv.GetInt("encoder.n_layers"), 4);
  EXPECT_TRUE(kv.GetBool("finetune.spec_augment", false));
  EXPECT_DOUBLE_EQ(kv.GetDouble("finetune.lr_reduction"), 40.0);
  EXPECT_EQ(kv.GetInt("missing", 9), 9);
  kv.SetAssignment("encoder.n_layers=2");
  EXPECT_EQ(kv.GetInt("encoder.n_layers"), 2);
}

TEST(KeyValueConfigTest, Errors) {
  EXPECT_THROW(KeyValueConfig::FromString("no equals sign\n"), ConfigError);
  EXPECT_THROW(KeyValueConfig::FromString("[broken\n"), ConfigError);
  auto kv = KeyValueConfig::FromString("a = x\nb = 1.5\n");
  EXPECT_THROW(kv.GetInt("a"), ConfigError);
  EXPECT_THROW(kv.GetInt("b"), ConfigError);
  EXPECT_THROW(kv.GetString("c"), ConfigError);
  EXPECT_THROW(kv.GetBool("a", false), ConfigError);
  EXPECT_THROW(kv.SetAssignment("novalue"), ConfigError);
  EXPECT_THROW(KeyValueConfig::FromFile("/nonexistent/file.conf"), ConfigError);
}

}  // namespace
}  // namespace mppt
