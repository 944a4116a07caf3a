// mppt/features.h

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

#ifndef MPPT_FEATURES_H_
#define MPPT_FEATURES_H_

#include <span>
#include <vector>

#include "mppt/common.h"

namespace mppt {

// T x D frames at a fixed frame rate (100 Hz before stacking, 25 Hz after).
struct FeatureSequence {
  MatrixF frames;
  int32_t rate = 100;

  int64_t NumFrames() const { return frames.rows(); }
  int32_t Dim() const { return static_cast<int32_t>(frames.cols()); }
};

struct FbankOptions {
  int32_t n_mels = 80;
  double frame_shift_ms = 10.0;
  double frame_length_ms = 25.0;
  double low_freq = 20.0;
  double high_freq = 0.0;  // <= 0 means Nyquist
  double energy_floor = 1e-10;
};

struct MfccOptions {
  FbankOptions fbank{.n_mels = 40};
  int32_t n_ceps = 13;
  int32_t delta_window = 2;
};

double HzToMel(double hz);
double MelToHz(double mel);

// Centre frequencies (Hz) of the triangular mel filters used by ComputeFbank.
std::vector<double> MelBinCentres(const FbankOptions &opts, int32_t sample_rate);

// Log-mel filterbank energies at 100 Hz.  The signal is reflection padded so
// that T = round(duration_seconds * 100).  Hamming window, per-frame DC
// removal, no pre-emphasis, no dithering.
FeatureSequence ComputeFbank(std::span<const float> samples, int32_t sample_rate,
                             const FbankOptions &opts = {});

// 13 cepstra (orthonormal DCT-II of log-mel, c0 kept, no liftering) followed
// by deltas and delta-deltas: 39 dims.
FeatureSequence ComputeMfccDeltas(std::span<const float> samples, int32_t sample_rate,
                                  const MfccOptions &opts = {});

// Symmetric regression deltas:
//   d_t = sum_{n=1..N} n (c_{t+n} - c_{t-n}) / (2 sum_{n=1..N} n^2)
// with edge frames replicated.
MatrixF ComputeDeltas(const MatrixF &feats, int32_t window = 2);

// Concatenates groups of `factor` consecutive frames; the remainder
// T mod factor is dropped.  Throws InputError if T < factor.
FeatureSequence StackFrames(const FeatureSequence &feats, int32_t factor = 4);

// Inverse view of StackFrames: splits each frame back into `factor` frames.
FeatureSequence UnstackFrames(const FeatureSequence &stacked, int32_t factor = 4);

}  // namespace mppt

#endif  // MPPT_FEATURES_H_
