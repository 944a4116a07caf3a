// tests/io_test.cc

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

#include "mppt/io.h"

#include <filesystem>
#include <fstream>

#include <gtest/gtest.h>

namespace mppt {
namespace {

class IoTest : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = std::filesystem::temp_directory_path() /
           ("mppt_io_test_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    std::filesystem::remove_all(dir_);
    std::filesystem::create_directories(dir_);
  }
  void TearDown() override { std::filesystem::remove_all(dir_); }
  std::filesystem::path dir_;
};

TEST_F(IoTest, FeatureRoundTripAndLayout) {
  FeatureSequence f;
  f.frames = MatrixF::Random(5, 3);
  f.rate = 25;
  WriteFeatures(dir_ / "a.feat", f);
  FeatureSequence g = ReadFeatures(dir_ / "a.feat");
  EXPECT_TRUE(g.frames == f.frames);
  EXPECT_EQ(g.rate, 25);
  EXPECT_EQ(std::filesystem::file_size(dir_ / "a.feat"), 5u + 3 * 4 + 15 * 4);
  std::ifstream is(dir_ / "a.feat", std::ios::binary);
  char magic[5];
  is.read(magic, 5);
  EXPECT_EQ(std::string(magic, 5), "FEAT1");
  EXPECT_EQ(ReadInt32LE(is), 5);
  EXPECT_EQ(ReadInt32LE(is), 3);
  EXPECT_EQ(ReadInt32LE(is), 25);
  EXPECT_EQ(ReadFloat32LE(is), f.frames(0, 0));
}

TEST_F(IoTest, BadMagicRejected) {
  { std::ofstream(dir_ / "b.feat") << "KMNS1xxxxxxxxxxxx"; }
  EXPECT_THROW(ReadFeatures(dir_ / "b.feat"), InputError);
  EXPECT_THROW(ReadFeatures(dir_ / "missing.feat"), InputError);
}

TEST_F(IoTest, ClusterModelRoundTrip) {
  ClusterModel m;
  m.centroids = MatrixF::Random(4, 6);
  WriteClusterModel(dir_ / "c.kmns", m);
  EXPECT_TRUE(ReadClusterModel(dir_ / "c.kmns").centroids == m.centroids);
}

TEST_F(IoTest, LabelsRoundTrip) {
  std::vector<FrameLabelSequence> labels{{"u1", {0, 3, 3, 1}, 25}, {"u2", {2}, 25}};
  WriteLabels(dir_ / "l.txt", labels);
  auto back = ReadLabels(dir_ / "l.txt");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[0].utt_id, "u1");
  EXPECT_EQ(back[0].ids, labels[0].ids);
  EXPECT_EQ(back[1].ids, labels[1].ids);
}

TEST_F(IoTest, CorpusRoundTrip) {
  SynthSpec spec;
  spec.seed = 4;
  Corpus c = SynthCorpus(spec, 6, 0.5);
  WriteCorpus(dir_ / "corpus", c);
  Corpus d = ReadCorpus(dir_ / "corpus" / "manifest.jsonl");
  ASSERT_EQ(d.utterances.size(), c.utterances.size());
  EXPECT_EQ(d.labelled, c.labelled);
  for (size_t i = 0; i < c.utterances.size(); ++i) {
    EXPECT_EQ(d.utterances[i].id, c.utterances[i].id);
    EXPECT_TRUE(d.utterances[i].features->frames == c.utterances[i].features->frames);
    EXPECT_EQ(d.utterances[i].frame_truth, c.utterances[i].frame_truth);
    EXPECT_EQ(d.utterances[i].transcript, c.utterances[i].transcript);
  }
}

TEST_F(IoTest, ManifestErrors) {
  { std::ofstream(dir_ / "m.jsonl") << "{\"id\": \"x\"}\n"; }
  EXPECT_THROW(ReadCorpus(dir_ / "m.jsonl"), InputError);
  { std::ofstream(dir_ / "n.jsonl") << "not json\n"; }
  EXPECT_THROW(ReadManifest(dir_ / "n.jsonl"), InputError);
}

}  // namespace
}  // namespace mppt
