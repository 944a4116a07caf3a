// mppt/masking.h

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

#ifndef MPPT_MASKING_H_
#define MPPT_MASKING_H_

#include <span>
#include <utility>
#include <vector>

#include "mppt/common.h"
#include "mppt/features.h"

namespace mppt {

struct MaskConfig {
  double start_prob = 0.04;
  int32_t span_len = 5;  // frames at the rate the mask is applied (200 ms at 25 Hz)
  uint64_t seed = 0;
  // Pick exactly round(start_prob * T) starts instead of independent draws.
  bool exact_count = false;

  void Validate() const;
};

// Span length in frames for a span duration at a given frame rate.
int32_t SpanFramesForDuration(double span_ms, int32_t rate);

// Mask configuration for frames at `rate` Hz, given a start probability per
// 100 Hz frame and a span duration.  A frame at the lower rate starts a span
// iff any of the 100 Hz frames it covers would, so the expected coverage is
// preserved: start_prob = 1 - (1 - start_prob_100hz)^(100 / rate).
MaskConfig MaskConfigForRate(double start_prob_100hz, double span_ms, int32_t rate, uint64_t seed);

struct MaskSpec {
  std::vector<bool> masked;
  std::vector<int32_t> starts;  // sorted

  int64_t Length() const { return static_cast<int64_t>(masked.size()); }
  int64_t NumMasked() const;
};

// Union of spans [s, s + span_len) clipped at T.
MaskSpec MaskFromStarts(int64_t num_frames, std::span<const int32_t> starts, int32_t span_len);

MaskSpec SampleMasks(int64_t num_frames, const MaskConfig &cfg);

// Replaces masked frames by `mask_vector`; other frames are copied.
template <typename Real>
Matrix<Real> ApplyMask(const Matrix<Real> &frames, const MaskSpec &mask,
                       const RowVector<Real> &mask_vector);

FeatureSequence ApplyMask(const FeatureSequence &feats, const MaskSpec &mask,
                          const RowVector<float> &mask_vector);

struct SpecAugmentConfig {
  int32_t n_time_masks = 2;
  int32_t max_time_width = 4;
  int32_t n_freq_masks = 2;
  int32_t max_freq_width = 4;
  bool operator==(const SpecAugmentConfig &) const = default;
};

// (begin, width) bands over frames and over feature bins.
struct SpecAugmentBands {
  std::vector<std::pair<int64_t, int64_t>> time;
  std::vector<std::pair<int64_t, int64_t>> freq;
};

SpecAugmentBands SampleSpecAugmentBands(int64_t num_frames, int64_t dim,
                                        const SpecAugmentConfig &cfg, uint64_t seed);
MatrixF ApplySpecAugmentBands(const MatrixF &frames, const SpecAugmentBands &bands);

// Zeroes random time bands and frequency bands; no time warping.
MatrixF SpecAugment(const MatrixF &frames, const SpecAugmentConfig &cfg, uint64_t seed);

}  // namespace mppt

#endif  // MPPT_MASKING_H_
