// src/io.cc

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

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace mppt {

namespace fs = std::filesystem;
using nlohmann::json;

void WriteInt32LE(std::ostream &os, int32_t v) {
  uint32_t u = static_cast<uint32_t>(v);
  unsigned char b[4] = {static_cast<unsigned char>(u), static_cast<unsigned char>(u >> 8),
                        static_cast<unsigned char>(u >> 16), static_cast<unsigned char>(u >> 24)};
  os.write(reinterpret_cast<const char *>(b), 4);
}

int32_t ReadInt32LE(std::istream &is) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char *>(b), 4)) throw InputError("unexpected end of file");
  uint32_t u = b[0] | (b[1] << 8) | (b[2] << 16) | (static_cast<uint32_t>(b[3]) << 24);
  return static_cast<int32_t>(u);
}

void WriteFloat32LE(std::ostream &os, float v) {
  WriteInt32LE(os, std::bit_cast<int32_t>(v));
}

float ReadFloat32LE(std::istream &is) { return std::bit_cast<float>(ReadInt32LE(is)); }

void ExpectMagic(std::istream &is, const char *magic, const std::string &what) {
  const size_t n = std::strlen(magic);
  std::string got(n, '\0');
  if (!is.read(got.data(), static_cast<std::streamsize>(n)) || got != magic)
    throw InputError(what + ": bad magic, expected " + magic);
}

namespace {

std::ofstream OpenOut(const fs::path &path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  return os;
}

std::ifstream OpenIn(const fs::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open " + path.string());
  return is;
}

void WriteMatrixBody(std::ostream &os, const MatrixF &m) {
  for (int64_t r = 0; r < m.rows(); ++r)
    for (int64_t c = 0; c < m.cols(); ++c) WriteFloat32LE(os, m(r, c));
}

MatrixF ReadMatrixBody(std::istream &is, int32_t rows, int32_t cols) {
  MatrixF m(rows, cols);
  for (int32_t r = 0; r < rows; ++r)
    for (int32_t c = 0; c < cols; ++c) m(r, c) = ReadFloat32LE(is);
  return m;
}

std::string Resolve(const fs::path &base, const std::string &p) {
  if (p.empty()) return p;
  fs::path path(p);
  return path.is_absolute() ? p : (base / path).string();
}

}  // namespace

void WriteFeatures(std::ostream &os, const FeatureSequence &feats) {
  os.write("FEAT1", 5);
  WriteInt32LE(os, static_cast<int32_t>(feats.NumFrames()));
  WriteInt32LE(os, feats.Dim());
  WriteInt32LE(os, feats.rate);
  WriteMatrixBody(os, feats.frames);
}

FeatureSequence ReadFeatures(std::istream &is) {
  ExpectMagic(is, "FEAT1", "feature file");
  int32_t t = ReadInt32LE(is), d = ReadInt32LE(is);
  FeatureSequence feats;
  feats.rate = ReadInt32LE(is);
  if (t < 0 || d < 0) throw InputError("feature file: negative shape");
  feats.frames = ReadMatrixBody(is, t, d);
  return feats;
}

void WriteFeatures(const fs::path &path, const FeatureSequence &feats) {
  auto os = OpenOut(path);
  WriteFeatures(os, feats);
}

FeatureSequence ReadFeatures(const fs::path &path) {
  auto is = OpenIn(path);
  return ReadFeatures(is);
}

void WriteClusterModel(const fs::path &path, const ClusterModel &model) {
  auto os = OpenOut(path);
  os.write("KMNS1", 5);
  WriteInt32LE(os, model.K());
  WriteInt32LE(os, model.Dim());
  WriteMatrixBody(os, model.centroids);
}

ClusterModel ReadClusterModel(const fs::path &path) {
  auto is = OpenIn(path);
  ExpectMagic(is, "KMNS1", "centroid file");
  int32_t k = ReadInt32LE(is), d = ReadInt32LE(is);
  if (k < 1 || d < 1) throw InputError("centroid file: bad shape");
  ClusterModel model;
  model.centroids = ReadMatrixBody(is, k, d);
  return model;
}

void WriteLabels(const fs::path &path, const std::vector<FrameLabelSequence> &labels) {
  auto os = OpenOut(path);
  for (const auto &seq : labels) {
    os << seq.utt_id;
    for (int32_t id : seq.ids) os << ' ' << id;
    os << '\n';
  }
}

std::vector<FrameLabelSequence> ReadLabels(const fs::path &path, int32_t rate) {
  auto is = OpenIn(path);
  std::vector<FrameLabelSequence> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    FrameLabelSequence seq;
    seq.rate = rate;
    ls >> seq.utt_id;
    int32_t id;
    while (ls >> id) seq.ids.push_back(id);
    out.push_back(std::move(seq));
  }
  return out;
}

void WriteManifest(const fs::path &path, const std::vector<ManifestEntry> &entries) {
  auto os = OpenOut(path);
  for (const auto &e : entries) {
    json j;
    j["id"] = e.id;
    if (!e.audio_path.empty()) {
      j["audio"] = e.audio_path;
      j["sample_rate"] = e.sample_rate;
    } else {
      j["features"] = e.feature_path;
    }
    j["transcript"] = e.transcript;
    if (!e.frame_truth_path.empty()) j["frame_truth"] = e.frame_truth_path;
    if (!e.split.empty()) j["split"] = e.split;
    os << j.dump() << '\n';
  }
}

std::vector<ManifestEntry> ReadManifest(const fs::path &path) {
  auto is = OpenIn(path);
  const fs::path base = path.parent_path();
  std::vector<ManifestEntry> out;
  std::string line;
  int64_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::exception &e) {
      throw InputError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
    ManifestEntry e;
    e.id = j.value("id", "");
    e.audio_path = Resolve(base, j.value("audio", ""));
    e.sample_rate = j.value("sample_rate", 0);
    e.feature_path = Resolve(base, j.value("features", ""));
    if (j.contains("transcript")) e.transcript = j["transcript"].get<TokenSequence>();
    e.frame_truth_path = Resolve(base, j.value("frame_truth", ""));
    e.split = j.value("split", "");
    if (e.id.empty() || (e.audio_path.empty() == e.feature_path.empty()))
      throw InputError(path.string() + ":" + std::to_string(lineno) +
                       ": record needs an id and exactly one of audio/features");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<float> ReadRawAudio(const fs::path &path) {
  auto is = OpenIn(path);
  std::vector<float> samples;
  while (is.peek() != std::char_traits<char>::eof()) samples.push_back(ReadFloat32LE(is));
  return samples;
}

void WriteRawAudio(const fs::path &path, const std::vector<float> &samples) {
  auto os = OpenOut(path);
  for (float s : samples) WriteFloat32LE(os, s);
}

std::vector<int32_t> ReadIntLine(const fs::path &path) {
  auto is = OpenIn(path);
  std::vector<int32_t> ids;
  int32_t id;
  while (is >> id) ids.push_back(id);
  return ids;
}

void WriteIntLine(const fs::path &path, const std::vector<int32_t> &ids) {
  auto os = OpenOut(path);
  for (size_t i = 0; i < ids.size(); ++i) os << (i ? " " : "") << ids[i];
  os << '\n';
}

void WriteCorpus(const fs::path &dir, const Corpus &corpus, const std::string &default_split) {
  fs::create_directories(dir / "data");
  std::vector<ManifestEntry> entries;
  std::vector<std::string> split(corpus.utterances.size(), default_split);
  if (default_split.empty()) {
    for (size_t i : corpus.labelled) split[i] = "labelled";
    for (size_t i : corpus.unlabelled) split[i] = "unlabelled";
  }
  for (size_t i = 0; i < corpus.utterances.size(); ++i) {
    const Utterance &u = corpus.utterances[i];
    ManifestEntry e;
    e.id = u.id;
    e.transcript = u.transcript;
    e.split = split[i];
    if (u.HasSamples()) {
      e.audio_path = "data/" + u.id + ".f32";
      e.sample_rate = u.sample_rate;
      WriteRawAudio(dir / e.audio_path, u.samples);
    } else {
      e.feature_path = "data/" + u.id + ".feat";
      WriteFeatures(dir / e.feature_path, *u.features);
    }
    if (!u.frame_truth.empty()) {
      e.frame_truth_path = "data/" + u.id + ".truth";
      WriteIntLine(dir / e.frame_truth_path, u.frame_truth);
    }
    entries.push_back(std::move(e));
  }
  WriteManifest(dir / "manifest.jsonl", entries);
}

Corpus ReadCorpus(const fs::path &manifest_path) {
  Corpus corpus;
  for (const auto &e : ReadManifest(manifest_path)) {
    Utterance u;
    u.id = e.id;
    u.transcript = e.transcript;
    if (!e.audio_path.empty()) {
      u.samples = ReadRawAudio(e.audio_path);
      u.sample_rate = e.sample_rate;
    } else {
      u.features = ReadFeatures(e.feature_path);
    }
    if (!e.frame_truth_path.empty()) u.frame_truth = ReadIntLine(e.frame_truth_path);
    const size_t index = corpus.utterances.size();
    (e.split == "labelled" ? corpus.labelled : corpus.unlabelled).push_back(index);
    corpus.utterances.push_back(std::move(u));
  }
  return corpus;
}

}  // namespace mppt
