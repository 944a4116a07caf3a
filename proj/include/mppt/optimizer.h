// mppt/optimizer.h

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

#ifndef MPPT_OPTIMIZER_H_
#define MPPT_OPTIMIZER_H_

#include <functional>
#include <map>
#include <string>

#include "mppt/encoder.h"

namespace mppt {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double epsilon = 1e-6;
};

// Adaptive-moment optimizer with bias correction.  Moments and step counts
// are kept per parameter so that parameters frozen for a while get the
// correct bias correction once they start training.
class AdamOptimizer {
 public:
  using Filter = std::function<bool(const std::string &)>;

  explicit AdamOptimizer(AdamOptions opts = {}) : opts_(opts) {}

  // Applies one update to every parameter accepted by `trainable` (all when
  // empty).  If any selected gradient is non-finite the whole update is
  // skipped, counted, and false is returned.
  bool Step(ParameterSet<float> *params, const ParameterSet<float> &grads, double lr,
            const Filter &trainable = {});

  int64_t skipped_updates() const { return skipped_; }

 private:
  struct State {
    MatrixD m, v;
    int64_t steps = 0;
  };
  AdamOptions opts_;
  std::map<std::string, State> state_;
  int64_t skipped_ = 0;
};

}  // namespace mppt

#endif  // MPPT_OPTIMIZER_H_
