// mppt/io.h

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

#ifndef MPPT_IO_H_
#define MPPT_IO_H_

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "mppt/clustering.h"
#include "mppt/corpus.h"
#include "mppt/features.h"

namespace mppt {

// Feature file: "FEAT1", then T, D, rate as int32 LE, then T*D float32 LE
// row-major.
void WriteFeatures(const std::filesystem::path &path, const FeatureSequence &feats);
FeatureSequence ReadFeatures(const std::filesystem::path &path);
void WriteFeatures(std::ostream &os, const FeatureSequence &feats);
FeatureSequence ReadFeatures(std::istream &is);

// Centroid file: "KMNS1", then K, D as int32 LE, then K*D float32 LE.
void WriteClusterModel(const std::filesystem::path &path, const ClusterModel &model);
ClusterModel ReadClusterModel(const std::filesystem::path &path);

// Label file: one line per utterance, "<utt_id> <id> <id> ...".
void WriteLabels(const std::filesystem::path &path, const std::vector<FrameLabelSequence> &labels);
std::vector<FrameLabelSequence> ReadLabels(const std::filesystem::path &path, int32_t rate = 25);

// One manifest record.  Exactly one of audio_path / feature_path is set.
// Audio files are raw float32 LE mono samples.
struct ManifestEntry {
  std::string id;
  std::string audio_path;
  int32_t sample_rate = 0;
  std::string feature_path;
  TokenSequence transcript;
  std::string frame_truth_path;
  std::string split;  // "labelled", "unlabelled", "dev", ...
};

// Line-delimited JSON records, UTF-8.  Relative paths resolve against the
// manifest's directory.
void WriteManifest(const std::filesystem::path &path, const std::vector<ManifestEntry> &entries);
std::vector<ManifestEntry> ReadManifest(const std::filesystem::path &path);

// Writes features, frame truth and manifest for a corpus into dir; synthetic
// utterances are stored as feature files, audio utterances as raw samples.
void WriteCorpus(const std::filesystem::path &dir, const Corpus &corpus,
                 const std::string &default_split = "");
// Loads utterances (features or samples, transcripts, frame truth) from a
// manifest; the split of each entry decides labelled/unlabelled membership
// ("labelled" is labelled, everything else unlabelled).
Corpus ReadCorpus(const std::filesystem::path &manifest_path);

std::vector<float> ReadRawAudio(const std::filesystem::path &path);
void WriteRawAudio(const std::filesystem::path &path, const std::vector<float> &samples);

std::vector<int32_t> ReadIntLine(const std::filesystem::path &path);
void WriteIntLine(const std::filesystem::path &path, const std::vector<int32_t> &ids);

// Little-endian primitives shared by the binary formats.
void WriteInt32LE(std::ostream &os, int32_t v);
int32_t ReadInt32LE(std::istream &is);
void WriteFloat32LE(std::ostream &os, float v);
float ReadFloat32LE(std::istream &is);
void ExpectMagic(std::istream &is, const char *magic, const std::string &what);

}  // namespace mppt

#endif  // MPPT_IO_H_
