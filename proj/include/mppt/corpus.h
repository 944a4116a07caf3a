// mppt/corpus.h

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

#ifndef MPPT_CORPUS_H_
#define MPPT_CORPUS_H_

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "mppt/common.h"
#include "mppt/features.h"

namespace mppt {

// One utterance.  Synthetic utterances carry features directly; audio
// utterances carry samples and derive features on demand.
struct Utterance {
  std::string id;
  std::vector<float> samples;
  int32_t sample_rate = 0;
  std::optional<FeatureSequence> features;
  // Character-vocabulary token ids (blank = 0 is never part of a transcript).
  TokenSequence transcript;
  // Ground-truth phone id per 100 Hz frame; empty when unknown.
  std::vector<int32_t> frame_truth;

  bool HasSamples() const { return !samples.empty(); }
  int64_t NumFrames() const;  // 100 Hz frames
  double DurationSeconds() const;
};

// Parameters of the synthetic "speech-like" generator.  Frames are
//   x_t = c_u * (mu_{phone(t)} + o_{speaker(u)}) + noise
// with phone means mu, per-speaker offsets o and a per-utterance channel
// scale c_u.  Phone sequences follow a sparse Markov chain so that the
// content under a mask is partly predictable from its context.
struct SynthSpec {
  int32_t n_phones = 8;
  int32_t feature_dim = 8;
  double phone_mean_scale = 2.0;
  int32_t speaker_count = 6;
  double speaker_offset_scale = 3.0;
  std::pair<double, double> channel_scale_range{0.8, 1.25};
  std::pair<int32_t, int32_t> duration_range_frames{6, 14};
  double emission_noise_std = 0.6;
  // Phones per utterance (inclusive range).
  std::pair<int32_t, int32_t> phones_per_utt{8, 14};
  // Number of admissible successors per phone; 0 means any other phone.
  int32_t successors_per_phone = 2;
  // Each phone occurrence is realised by one of variants_per_phone
  // context variants, chosen uniformly; variant means are offset from the
  // phone mean with this scale.
  int32_t variants_per_phone = 1;
  double variant_offset_scale = 0.0;
  uint64_t seed = 0;

  // Throws ConfigError on violated invariants.
  void Validate() const;
};

struct Corpus {
  std::vector<Utterance> utterances;
  std::vector<size_t> labelled;    // indices into utterances
  std::vector<size_t> unlabelled;  // disjoint from labelled

  std::vector<const Utterance *> Labelled() const;
};

// Generates n_utts utterances from the world fixed by spec.seed.  The
// `stream` argument draws further utterances from the same world (same
// phones, speakers and transitions), e.g. for held-out dev sets; ids are
// prefixed with the stream number.
Corpus SynthCorpus(const SynthSpec &spec, int32_t n_utts, double labelled_fraction,
                   uint64_t stream = 0);

// Splits an utterance into segments of at most max_seconds.  Cuts prefer
// phone boundaries from frame_truth; transcript tokens follow the phone runs
// they belong to.
std::vector<Utterance> Segment(const Utterance &utt, double max_seconds = 10.0);

// 100 Hz features of an utterance: stored features, or fbank of samples.
FeatureSequence UtteranceFeatures(const Utterance &utt, const FbankOptions &opts = {});

}  // namespace mppt

#endif  // MPPT_CORPUS_H_
