// mppt/losses.h

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

#ifndef MPPT_LOSSES_H_
#define MPPT_LOSSES_H_

#include <span>

#include "mppt/common.h"
#include "mppt/masking.h"

namespace mppt {

struct LossConfig {
  double w_masked = 1.0;
  double w_unmasked = 0.0;
  int32_t blank_id = 0;

  void Validate() const;
};

template <typename Real>
Matrix<Real> LogSoftmax(const Matrix<Real> &logits);

template <typename Real>
struct MaskedPredictionResult {
  Real loss = 0;
  int64_t n_masked = 0;
  int64_t n_unmasked = 0;
  Matrix<Real> grad_logits;  // filled when requested
};

// w_masked * mean CE over masked frames + w_unmasked * mean CE over unmasked
// frames.  A region without frames contributes zero.
template <typename Real>
MaskedPredictionResult<Real> MaskedPredictionLoss(const Matrix<Real> &logits,
                                                  std::span<const int32_t> labels,
                                                  const MaskSpec &mask, const LossConfig &cfg,
                                                  bool want_grad = false);

template <typename Real>
struct CtcResult {
  Real loss = 0;         // +infinity when no alignment exists
  bool feasible = true;
  Matrix<Real> grad_log_probs;  // d loss / d log_probs, when requested
};

// Minimum number of frames that can emit `target`: one per token plus one
// blank between every pair of equal neighbours.
int64_t CtcMinFrames(std::span<const int32_t> target);

// Negative log-likelihood of `target` given per-frame log-probabilities, via
// the forward recursion over the blank-interleaved label lattice in log
// space.  The gradient uses the matching backward recursion.
template <typename Real>
CtcResult<Real> CtcLoss(const Matrix<Real> &log_probs, std::span<const int32_t> target,
                        int32_t blank_id = 0, bool want_grad = false);

// Exhaustive sum over all V^T frame strings that collapse to `target`.
// Test oracle; throws InputError when T > 8 or V > 5.
double CtcBruteForce(const MatrixD &log_probs, std::span<const int32_t> target,
                     int32_t blank_id = 0);

// Best-path decoding: frame argmax (ties to the lowest index), merge repeats,
// drop blanks.
template <typename Real>
TokenSequence CtcGreedyDecode(const Matrix<Real> &log_probs, int32_t blank_id = 0);

// Collapses a frame-level path: merge repeats, then drop blanks.
TokenSequence CtcCollapse(std::span<const int32_t> path, int32_t blank_id = 0);

// Maps d loss / d log_softmax(logits) to d loss / d logits.
template <typename Real>
Matrix<Real> LogSoftmaxBackward(const Matrix<Real> &log_probs, const Matrix<Real> &grad_log_probs);

}  // namespace mppt

#endif  // MPPT_LOSSES_H_
