// src/losses.cc

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

#include "mppt/losses.h"

#include <cmath>
#include <limits>
#include <vector>

#include <spdlog/spdlog.h>

namespace mppt {

namespace {

template <typename Real>
constexpr Real kLogZero = -std::numeric_limits<Real>::infinity();

template <typename Real>
Real LogAdd(Real a, Real b) {
  if (a == kLogZero<Real>) return b;
  if (b == kLogZero<Real>) return a;
  if (a < b) std::swap(a, b);
  return a + std::log1p(std::exp(b - a));
}

}  // namespace

void LossConfig::Validate() const {
  if (w_masked < 0 || w_unmasked < 0) throw ConfigError("loss weights must be non-negative");
  if (w_masked == 0 && w_unmasked == 0) throw ConfigError("loss weights must not both be zero");
}

template <typename Real>
Matrix<Real> LogSoftmax(const Matrix<Real> &logits) {
  Matrix<Real> out(logits.rows(), logits.cols());
  for (int64_t t = 0; t < logits.rows(); ++t) {
    Real max = logits.row(t).maxCoeff();
    Real sum = (logits.row(t).array() - max).exp().sum();
    out.row(t) = logits.row(t).array() - (max + std::log(sum));
  }
  return out;
}

template <typename Real>
Matrix<Real> LogSoftmaxBackward(const Matrix<Real> &log_probs, const Matrix<Real> &grad_log_probs) {
  Matrix<Real> grad(log_probs.rows(), log_probs.cols());
  for (int64_t t = 0; t < log_probs.rows(); ++t) {
    Real total = grad_log_probs.row(t).sum();
    grad.row(t) = grad_log_probs.row(t).array() - log_probs.row(t).array().exp() * total;
  }
  return grad;
}

template <typename Real>
MaskedPredictionResult<Real> MaskedPredictionLoss(const Matrix<Real> &logits,
                                                  std::span<const int32_t> labels,
                                                  const MaskSpec &mask, const LossConfig &cfg,
                                                  bool want_grad) {
  const int64_t num_frames = logits.rows(), vocab = logits.cols();
  if (static_cast<int64_t>(labels.size()) != num_frames || mask.Length() != num_frames)
    throw InputError("masked_pred_loss: logits/labels/mask lengths disagree");
  MaskedPredictionResult<Real> result;
  for (int64_t t = 0; t < num_frames; ++t) {
    if (labels[t] < 0 || labels[t] >= vocab)
      throw InputError("masked_pred_loss: label " + std::to_string(labels[t]) +
                       " outside vocabulary of size " + std::to_string(vocab));
    (mask.masked[t] ? result.n_masked : result.n_unmasked)++;
  }
  if (cfg.w_masked > 0 && result.n_masked == 0)
    spdlog::warn("masked_pred_loss: no masked frames, masked region contributes zero");

  const Real scale_masked = result.n_masked ? Real(cfg.w_masked) / result.n_masked : Real(0);
  const Real scale_unmasked = result.n_unmasked ? Real(cfg.w_unmasked) / result.n_unmasked : Real(0);
  Matrix<Real> log_probs = LogSoftmax(logits);
  if (want_grad) result.grad_logits = Matrix<Real>::Zero(num_frames, vocab);
  for (int64_t t = 0; t < num_frames; ++t) {
    const Real scale = mask.masked[t] ? scale_masked : scale_unmasked;
    if (scale == Real(0)) continue;
    result.loss -= scale * log_probs(t, labels[t]);
    if (want_grad) {
      result.grad_logits.row(t) = scale * log_probs.row(t).array().exp();
      result.grad_logits(t, labels[t]) -= scale;
    }
  }
  return result;
}

int64_t CtcMinFrames(std::span<const int32_t> target) {
  int64_t n = static_cast<int64_t>(target.size());
  for (size_t i = 1; i < target.size(); ++i)
    if (target[i] == target[i - 1]) ++n;
  return n;
}

template <typename Real>
CtcResult<Real> CtcLoss(const Matrix<Real> &log_probs, std::span<const int32_t> target,
                        int32_t blank_id, bool want_grad) {
  const int64_t num_frames = log_probs.rows(), vocab = log_probs.cols();
  for (int32_t token : target) {
    if (token == blank_id) throw InputError("ctc_loss: target contains the blank id");
    if (token < 0 || token >= vocab) throw InputError("ctc_loss: target token outside vocabulary");
  }
  CtcResult<Real> result;
  if (want_grad) result.grad_log_probs = Matrix<Real>::Zero(num_frames, vocab);
  if (num_frames == 0 || num_frames < CtcMinFrames(target)) {
    result.feasible = false;
    result.loss = std::numeric_limits<Real>::infinity();
    return result;
  }

  // Blank-interleaved lattice: blank, y1, blank, y2, ..., yU, blank.
  const int64_t n_states = 2 * static_cast<int64_t>(target.size()) + 1;
  std::vector<int32_t> label(n_states, blank_id);
  for (size_t u = 0; u < target.size(); ++u) label[2 * u + 1] = target[u];
  auto can_skip = [&label, blank_id](int64_t s) {
    return s >= 2 && label[s] != blank_id && label[s] != label[s - 2];
  };

  // alpha includes the emission at t.
  Matrix<Real> alpha = Matrix<Real>::Constant(num_frames, n_states, kLogZero<Real>);
  alpha(0, 0) = log_probs(0, label[0]);
  if (n_states > 1) alpha(0, 1) = log_probs(0, label[1]);
  for (int64_t t = 1; t < num_frames; ++t) {
    for (int64_t s = 0; s < n_states; ++s) {
      Real acc = alpha(t - 1, s);
      if (s >= 1) acc = LogAdd(acc, alpha(t - 1, s - 1));
      if (can_skip(s)) acc = LogAdd(acc, alpha(t - 1, s - 2));
      alpha(t, s) = acc == kLogZero<Real> ? acc : acc + log_probs(t, label[s]);
    }
  }
  Real log_likelihood = alpha(num_frames - 1, n_states - 1);
  if (n_states > 1) log_likelihood = LogAdd(log_likelihood, alpha(num_frames - 1, n_states - 2));
  if (log_likelihood == kLogZero<Real>) {
    result.feasible = false;
    result.loss = std::numeric_limits<Real>::infinity();
    return result;
  }
  result.loss = -log_likelihood;
  if (!want_grad) return result;

  // beta excludes the emission at t: beta(t, s) = log P(rest after t | s at t).
  Matrix<Real> beta = Matrix<Real>::Constant(num_frames, n_states, kLogZero<Real>);
  beta(num_frames - 1, n_states - 1) = 0;
  if (n_states > 1) beta(num_frames - 1, n_states - 2) = 0;
  for (int64_t t = num_frames - 2; t >= 0; --t) {
    for (int64_t s = 0; s < n_states; ++s) {
      Real acc = beta(t + 1, s) + log_probs(t + 1, label[s]);
      if (s + 1 < n_states) acc = LogAdd(acc, beta(t + 1, s + 1) + log_probs(t + 1, label[s + 1]));
      if (s + 2 < n_states && can_skip(s + 2))
        acc = LogAdd(acc, beta(t + 1, s + 2) + log_probs(t + 1, label[s + 2]));
      beta(t, s) = acc;
    }
  }
  // d(-log P) / d log_probs(t, k) = -sum_{s : label[s] = k} occupancy(t, s).
  for (int64_t t = 0; t < num_frames; ++t)
    for (int64_t s = 0; s < n_states; ++s) {
      Real occ = alpha(t, s) + beta(t, s) - log_likelihood;
      if (occ != kLogZero<Real>) result.grad_log_probs(t, label[s]) -= std::exp(occ);
    }
  return result;
}

double CtcBruteForce(const MatrixD &log_probs, std::span<const int32_t> target, int32_t blank_id) {
  const int64_t num_frames = log_probs.rows(), vocab = log_probs.cols();
  if (num_frames > 8 || vocab > 5)
    throw InputError("ctc_brute_force: instance too large (needs T <= 8, V <= 5)");
  int64_t n_paths = 1;
  for (int64_t t = 0; t < num_frames; ++t) n_paths *= vocab;
  std::vector<int32_t> path(num_frames);
  double total = kLogZero<double>;
  for (int64_t code = 0; code < n_paths; ++code) {
    int64_t rest = code;
    double score = 0.0;
    for (int64_t t = 0; t < num_frames; ++t) {
      path[t] = static_cast<int32_t>(rest % vocab);
      rest /= vocab;
      score += log_probs(t, path[t]);
    }
    TokenSequence collapsed = CtcCollapse(path, blank_id);
    if (collapsed.size() == target.size() &&
        std::equal(collapsed.begin(), collapsed.end(), target.begin()))
      total = LogAdd(total, score);
  }
  return total == kLogZero<double> ? std::numeric_limits<double>::infinity() : -total;
}

TokenSequence CtcCollapse(std::span<const int32_t> path, int32_t blank_id) {
  TokenSequence out;
  for (size_t t = 0; t < path.size(); ++t) {
    if (t > 0 && path[t] == path[t - 1]) continue;
    if (path[t] != blank_id) out.push_back(path[t]);
  }
  return out;
}

template <typename Real>
TokenSequence CtcGreedyDecode(const Matrix<Real> &log_probs, int32_t blank_id) {
  std::vector<int32_t> path(log_probs.rows());
  for (int64_t t = 0; t < log_probs.rows(); ++t) {
    Eigen::Index best;
    log_probs.row(t).maxCoeff(&best);
    path[t] = static_cast<int32_t>(best);
  }
  return CtcCollapse(path, blank_id);
}

#define MPPT_INSTANTIATE_LOSSES(Real)                                                         \
  template Matrix<Real> LogSoftmax(const Matrix<Real> &);                                     \
  template Matrix<Real> LogSoftmaxBackward(const Matrix<Real> &, const Matrix<Real> &);       \
  template MaskedPredictionResult<Real> MaskedPredictionLoss(                                 \
      const Matrix<Real> &, std::span<const int32_t>, const MaskSpec &, const LossConfig &, bool); \
  template CtcResult<Real> CtcLoss(const Matrix<Real> &, std::span<const int32_t>, int32_t, bool); \
  template TokenSequence CtcGreedyDecode(const Matrix<Real> &, int32_t);

MPPT_INSTANTIATE_LOSSES(float)
MPPT_INSTANTIATE_LOSSES(double)

}  // namespace mppt
