// src/optimizer.cc

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

#include "mppt/optimizer.h"

#include <cmath>

#include <spdlog/spdlog.h>

namespace mppt {

bool AdamOptimizer::Step(ParameterSet<float> *params, const ParameterSet<float> &grads, double lr,
                         const Filter &trainable) {
  for (const auto &[name, g] : grads) {
    if (trainable && !trainable(name)) continue;
    if (!g.allFinite()) {
      ++skipped_;
      spdlog::warn("optimizer: non-finite gradient in {}, update skipped ({} so far)", name, skipped_);
      return false;
    }
  }
  for (auto &[name, p] : *params) {
    if (trainable && !trainable(name)) continue;
    auto git = grads.find(name);
    if (git == grads.end()) continue;
    const MatrixD g = git->second.cast<double>();
    State &s = state_[name];
    if (s.steps == 0) {
      s.m = MatrixD::Zero(p.rows(), p.cols());
      s.v = MatrixD::Zero(p.rows(), p.cols());
    }
    ++s.steps;
    s.m = opts_.beta1 * s.m + (1.0 - opts_.beta1) * g;
    s.v = opts_.beta2 * s.v + (1.0 - opts_.beta2) * g.cwiseProduct(g);
    const double c1 = 1.0 - std::pow(opts_.beta1, static_cast<double>(s.steps));
    const double c2 = 1.0 - std::pow(opts_.beta2, static_cast<double>(s.steps));
    MatrixD update = (s.m.array() / c1) / ((s.v.array() / c2).sqrt() + opts_.epsilon);
    p = (p.cast<double>() - lr * update).cast<float>();
  }
  return true;
}

}  // namespace mppt
