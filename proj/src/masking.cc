// src/masking.cc

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

#include "mppt/masking.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace mppt {

void MaskConfig::Validate() const {
  if (!(start_prob >= 0.0 && start_prob <= 1.0))
    throw ConfigError("mask.start_prob must lie in [0, 1]");
  if (span_len < 1) throw ConfigError("mask span must be >= 1 frame");
}

int32_t SpanFramesForDuration(double span_ms, int32_t rate) {
  return std::max<int32_t>(1, static_cast<int32_t>(std::lround(span_ms * rate / 1000.0)));
}

MaskConfig MaskConfigForRate(double start_prob_100hz, double span_ms, int32_t rate, uint64_t seed) {
  if (rate <= 0 || 100 % rate != 0) throw ConfigError("mask rate must divide 100 Hz");
  MaskConfig cfg;
  const int32_t factor = 100 / rate;
  cfg.start_prob = factor == 1 ? start_prob_100hz : 1.0 - std::pow(1.0 - start_prob_100hz, factor);
  cfg.span_len = SpanFramesForDuration(span_ms, rate);
  cfg.seed = seed;
  cfg.Validate();
  return cfg;
}

int64_t MaskSpec::NumMasked() const { return std::count(masked.begin(), masked.end(), true); }

MaskSpec MaskFromStarts(int64_t num_frames, std::span<const int32_t> starts, int32_t span_len) {
  MaskSpec spec;
  spec.masked.assign(num_frames, false);
  spec.starts.assign(starts.begin(), starts.end());
  std::sort(spec.starts.begin(), spec.starts.end());
  for (int32_t s : spec.starts) {
    const int64_t end = std::min<int64_t>(num_frames, static_cast<int64_t>(s) + span_len);
    for (int64_t t = std::max<int64_t>(s, 0); t < end; ++t) spec.masked[t] = true;
  }
  return spec;
}

MaskSpec SampleMasks(int64_t num_frames, const MaskConfig &cfg) {
  cfg.Validate();
  std::mt19937_64 rng(cfg.seed);
  std::vector<int32_t> starts;
  if (cfg.exact_count) {
    const int64_t count = std::llround(cfg.start_prob * num_frames);
    std::vector<int32_t> all(num_frames);
    std::iota(all.begin(), all.end(), 0);
    std::shuffle(all.begin(), all.end(), rng);
    starts.assign(all.begin(), all.begin() + count);
  } else {
    std::bernoulli_distribution coin(cfg.start_prob);
    for (int64_t t = 0; t < num_frames; ++t)
      if (coin(rng)) starts.push_back(static_cast<int32_t>(t));
  }
  return MaskFromStarts(num_frames, starts, cfg.span_len);
}

template <typename Real>
Matrix<Real> ApplyMask(const Matrix<Real> &frames, const MaskSpec &mask,
                       const RowVector<Real> &mask_vector) {
  if (mask.Length() != frames.rows())
    throw InputError("apply_mask: mask length " + std::to_string(mask.Length()) +
                     " != frame count " + std::to_string(frames.rows()));
  if (mask_vector.size() != frames.cols()) throw InputError("apply_mask: mask vector dim mismatch");
  Matrix<Real> out = frames;
  for (int64_t t = 0; t < frames.rows(); ++t)
    if (mask.masked[t]) out.row(t) = mask_vector;
  return out;
}

template MatrixF ApplyMask(const MatrixF &, const MaskSpec &, const RowVector<float> &);
template MatrixD ApplyMask(const MatrixD &, const MaskSpec &, const RowVector<double> &);

FeatureSequence ApplyMask(const FeatureSequence &feats, const MaskSpec &mask,
                          const RowVector<float> &mask_vector) {
  FeatureSequence out;
  out.rate = feats.rate;
  out.frames = ApplyMask<float>(feats.frames, mask, mask_vector);
  return out;
}

SpecAugmentBands SampleSpecAugmentBands(int64_t num_frames, int64_t dim,
                                        const SpecAugmentConfig &cfg, uint64_t seed) {
  std::mt19937_64 rng(seed);
  auto band = [&rng](int64_t extent, int32_t max_width) {
    const int64_t w_max = std::min<int64_t>(max_width, extent - 1);
    int64_t width = w_max > 0 ? std::uniform_int_distribution<int64_t>(0, w_max)(rng) : 0;
    int64_t begin = std::uniform_int_distribution<int64_t>(0, extent - width)(rng);
    return std::make_pair(begin, width);
  };
  SpecAugmentBands bands;
  for (int32_t i = 0; i < cfg.n_time_masks && num_frames > 1; ++i)
    bands.time.push_back(band(num_frames, cfg.max_time_width));
  for (int32_t i = 0; i < cfg.n_freq_masks && dim > 1; ++i)
    bands.freq.push_back(band(dim, cfg.max_freq_width));
  return bands;
}

MatrixF ApplySpecAugmentBands(const MatrixF &frames, const SpecAugmentBands &bands) {
  MatrixF out = frames;
  for (auto [begin, width] : bands.time) out.middleRows(begin, width).setZero();
  for (auto [begin, width] : bands.freq) out.middleCols(begin, width).setZero();
  return out;
}

MatrixF SpecAugment(const MatrixF &frames, const SpecAugmentConfig &cfg, uint64_t seed) {
  return ApplySpecAugmentBands(frames,
                               SampleSpecAugmentBands(frames.rows(), frames.cols(), cfg, seed));
}

}  // namespace mppt
