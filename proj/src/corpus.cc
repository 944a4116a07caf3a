// src/corpus.cc

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

#include "mppt/corpus.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mppt {

namespace {

constexpr int32_t kFeatureRate = 100;

double StandardNormal(std::mt19937_64 &rng) {
  return std::normal_distribution<double>(0.0, 1.0)(rng);
}

int32_t UniformInt(std::mt19937_64 &rng, int32_t lo, int32_t hi) {
  return std::uniform_int_distribution<int32_t>(lo, hi)(rng);
}

// Start frame of every phone run in frame_truth.
std::vector<int64_t> RunStarts(const std::vector<int32_t> &truth) {
  std::vector<int64_t> starts;
  for (size_t t = 0; t < truth.size(); ++t)
    if (t == 0 || truth[t] != truth[t - 1]) starts.push_back(static_cast<int64_t>(t));
  return starts;
}

}  // namespace

int64_t Utterance::NumFrames() const {
  if (features) return features->NumFrames();
  if (sample_rate <= 0) return 0;
  const double hop = sample_rate / static_cast<double>(kFeatureRate);
  return std::max<int64_t>(1, std::llround(samples.size() / hop));
}

double Utterance::DurationSeconds() const {
  if (HasSamples() && sample_rate > 0) return static_cast<double>(samples.size()) / sample_rate;
  if (features) return static_cast<double>(features->NumFrames()) / features->rate;
  return 0.0;
}

std::vector<const Utterance *> Corpus::Labelled() const {
  std::vector<const Utterance *> out;
  for (size_t i : labelled) out.push_back(&utterances[i]);
  return out;
}

void SynthSpec::Validate() const {
  auto fail = [](const std::string &m) { throw ConfigError("synth spec: " + m); };
  if (n_phones < 2) fail("n_phones must be >= 2");
  if (feature_dim < 1) fail("feature_dim must be >= 1");
  if (speaker_count < 1) fail("speaker_count must be >= 1");
  if (duration_range_frames.first < 1 ||
      duration_range_frames.second < duration_range_frames.first)
    fail("duration_range_frames must satisfy 1 <= lo <= hi");
  if (phones_per_utt.first < 1 || phones_per_utt.second < phones_per_utt.first)
    fail("phones_per_utt must satisfy 1 <= lo <= hi");
  if (phone_mean_scale < 0 || speaker_offset_scale < 0 || emission_noise_std < 0 ||
      channel_scale_range.first < 0 || channel_scale_range.second < channel_scale_range.first)
    fail("scales must be non-negative and ranges ordered");
  if (successors_per_phone < 0 || successors_per_phone > n_phones - 1)
    fail("successors_per_phone must lie in [0, n_phones - 1]");
  if (variants_per_phone < 1) fail("variants_per_phone must be >= 1");
  if (variant_offset_scale < 0) fail("variant_offset_scale must be non-negative");
}

Corpus SynthCorpus(const SynthSpec &spec, int32_t n_utts, double labelled_fraction,
                   uint64_t stream) {
  spec.Validate();
  if (n_utts < 2) throw ConfigError("synth corpus: n_utts must be >= 2");
  if (!(labelled_fraction > 0.0 && labelled_fraction < 1.0))
    throw ConfigError("synth corpus: labelled_fraction must lie in (0, 1)");

  const int32_t dim = spec.feature_dim;
  std::mt19937_64 world(DeriveSeed(spec.seed, 0));
  MatrixD phone_means(spec.n_phones, dim);
  for (int32_t p = 0; p < spec.n_phones; ++p)
    for (int32_t d = 0; d < dim; ++d) phone_means(p, d) = spec.phone_mean_scale * StandardNormal(world);
  MatrixD speaker_offsets(spec.speaker_count, dim);
  for (int32_t s = 0; s < spec.speaker_count; ++s)
    for (int32_t d = 0; d < dim; ++d)
      speaker_offsets(s, d) = spec.speaker_offset_scale * StandardNormal(world);
  // Row p * variants + v holds the offset of variant v of phone p.
  MatrixD variant_offsets = MatrixD::Zero(spec.n_phones * spec.variants_per_phone, dim);
  if (spec.variants_per_phone > 1)
    for (int64_t r = 0; r < variant_offsets.rows(); ++r)
      for (int32_t d = 0; d < dim; ++d)
        variant_offsets(r, d) = spec.variant_offset_scale * StandardNormal(world);
  std::vector<std::vector<int32_t>> successors(spec.n_phones);
  for (int32_t p = 0; p < spec.n_phones; ++p) {
    std::vector<int32_t> others;
    for (int32_t q = 0; q < spec.n_phones; ++q)
      if (q != p) others.push_back(q);
    std::shuffle(others.begin(), others.end(), world);
    if (spec.successors_per_phone > 0) others.resize(spec.successors_per_phone);
    successors[p] = std::move(others);
  }

  Corpus corpus;
  corpus.utterances.resize(n_utts);
  const uint64_t stream_seed = DeriveSeed(spec.seed, 1000 + stream);
  for (int32_t u = 0; u < n_utts; ++u) {
    std::mt19937_64 rng(DeriveSeed(stream_seed, static_cast<uint64_t>(u)));
    Utterance &utt = corpus.utterances[u];
    char buf[48];
    std::snprintf(buf, sizeof(buf), "s%llu-utt%05d", static_cast<unsigned long long>(stream), u);
    utt.id = buf;
    const int32_t speaker = UniformInt(rng, 0, spec.speaker_count - 1);
    const double channel = std::uniform_real_distribution<double>(
        spec.channel_scale_range.first, spec.channel_scale_range.second)(rng);
    const int32_t n_phones = UniformInt(rng, spec.phones_per_utt.first, spec.phones_per_utt.second);
    int32_t phone = UniformInt(rng, 0, spec.n_phones - 1);
    std::vector<int32_t> frame_variant;  // row of variant_offsets per frame
    for (int32_t i = 0; i < n_phones; ++i) {
      if (i > 0) {
        const auto &next = successors[phone];
        phone = next[UniformInt(rng, 0, static_cast<int32_t>(next.size()) - 1)];
      }
      const int32_t dur =
          UniformInt(rng, spec.duration_range_frames.first, spec.duration_range_frames.second);
      utt.transcript.push_back(phone + 1);
      utt.frame_truth.insert(utt.frame_truth.end(), dur, phone);
      const int32_t variant =
          spec.variants_per_phone > 1 ? UniformInt(rng, 0, spec.variants_per_phone - 1) : 0;
      frame_variant.insert(frame_variant.end(), dur, phone * spec.variants_per_phone + variant);
    }
    FeatureSequence feats;
    feats.rate = kFeatureRate;
    feats.frames.resize(static_cast<int64_t>(utt.frame_truth.size()), dim);
    for (int64_t t = 0; t < feats.NumFrames(); ++t) {
      const int32_t p = utt.frame_truth[t];
      for (int32_t d = 0; d < dim; ++d) {
        double clean =
            channel * (phone_means(p, d) + variant_offsets(frame_variant[t], d) + speaker_offsets(speaker, d));
        feats.frames(t, d) = static_cast<float>(clean + spec.emission_noise_std * StandardNormal(rng));
      }
    }
    utt.features = std::move(feats);
  }

  int32_t n_labelled = static_cast<int32_t>(std::lround(labelled_fraction * n_utts));
  n_labelled = std::clamp(n_labelled, 1, n_utts - 1);
  std::vector<size_t> order(n_utts);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 split_rng(DeriveSeed(stream_seed, 0xFFFFFFFFULL));
  std::shuffle(order.begin(), order.end(), split_rng);
  corpus.labelled.assign(order.begin(), order.begin() + n_labelled);
  corpus.unlabelled.assign(order.begin() + n_labelled, order.end());
  std::sort(corpus.labelled.begin(), corpus.labelled.end());
  std::sort(corpus.unlabelled.begin(), corpus.unlabelled.end());
  return corpus;
}

std::vector<Utterance> Segment(const Utterance &utt, double max_seconds) {
  if (!(max_seconds > 0)) throw InputError("segment: max_seconds must be > 0");
  const int64_t total_frames = utt.NumFrames();
  const bool by_samples = utt.HasSamples();
  const double hop = by_samples ? utt.sample_rate / static_cast<double>(kFeatureRate) : 1.0;
  const int64_t total_units = by_samples ? static_cast<int64_t>(utt.samples.size()) : total_frames;
  const double units_per_second = by_samples ? utt.sample_rate : kFeatureRate;
  const int64_t max_units = static_cast<int64_t>(std::floor(max_seconds * units_per_second + 1e-9));
  const int64_t max_frames = std::max<int64_t>(1, static_cast<int64_t>(std::floor(max_units / hop)));

  if (total_units <= max_units) return {utt};

  // Frame cut points, preferring phone-run boundaries.
  std::vector<int64_t> run_starts = RunStarts(utt.frame_truth);
  std::vector<int64_t> cuts{0};
  int64_t pos = 0;
  while (total_units - static_cast<int64_t>(std::llround(pos * hop)) > max_units) {
    int64_t limit = pos + max_frames;
    int64_t cut = limit;
    auto it = std::upper_bound(run_starts.begin(), run_starts.end(), limit);
    if (it != run_starts.begin() && *std::prev(it) > pos) cut = *std::prev(it);
    cuts.push_back(cut);
    pos = cut;
  }
  cuts.push_back(total_frames);

  // Transcript tokens are attached to the frame where they start: phone runs
  // when they line up with the transcript, uniform positions otherwise.
  std::vector<int64_t> token_frames;
  if (run_starts.size() == utt.transcript.size()) {
    token_frames = run_starts;
  } else {
    for (size_t i = 0; i < utt.transcript.size(); ++i)
      token_frames.push_back(static_cast<int64_t>(i * total_frames / utt.transcript.size()));
  }

  std::vector<Utterance> out;
  for (size_t s = 0; s + 1 < cuts.size(); ++s) {
    const int64_t begin = cuts[s], end = cuts[s + 1];
    Utterance seg;
    char suffix[32];
    std::snprintf(suffix, sizeof(suffix), "-seg%03zu", s);
    seg.id = utt.id + suffix;
    seg.sample_rate = utt.sample_rate;
    if (by_samples) {
      const int64_t b = std::llround(begin * hop);
      const int64_t e = s + 2 == cuts.size() ? total_units : std::llround(end * hop);
      seg.samples.assign(utt.samples.begin() + b, utt.samples.begin() + e);
    }
    if (utt.features) {
      FeatureSequence f;
      f.rate = utt.features->rate;
      f.frames = utt.features->frames.middleRows(begin, end - begin);
      seg.features = std::move(f);
    }
    if (!utt.frame_truth.empty())
      seg.frame_truth.assign(utt.frame_truth.begin() + begin, utt.frame_truth.begin() + end);
    for (size_t i = 0; i < token_frames.size(); ++i)
      if (token_frames[i] >= begin && token_frames[i] < end) seg.transcript.push_back(utt.transcript[i]);
    out.push_back(std::move(seg));
  }
  return out;
}

FeatureSequence UtteranceFeatures(const Utterance &utt, const FbankOptions &opts) {
  if (utt.features) return *utt.features;
  if (!utt.HasSamples()) throw InputError("utterance " + utt.id + " has neither samples nor features");
  return ComputeFbank(utt.samples, utt.sample_rate, opts);
}

}  // namespace mppt
