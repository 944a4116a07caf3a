// mppt/clustering.h

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

#ifndef MPPT_CLUSTERING_H_
#define MPPT_CLUSTERING_H_

#include <string>
#include <vector>

#include "mppt/common.h"

namespace mppt {

// The tokenizer: K centroids in D dimensions.
struct ClusterModel {
  MatrixF centroids;       // K x D
  std::string source_tag;  // e.g. "mfcc", "model:layer2"
  uint64_t seed = 0;

  int32_t K() const { return static_cast<int32_t>(centroids.rows()); }
  int32_t Dim() const { return static_cast<int32_t>(centroids.cols()); }
};

// Per-frame token ids of one utterance.
struct FrameLabelSequence {
  std::string utt_id;
  std::vector<int32_t> ids;
  int32_t rate = 25;
};

struct KMeansOptions {
  int32_t k = 100;
  uint64_t seed = 0;
  int32_t max_iters = 100;
  double tol = 1e-6;  // relative centroid shift
};

struct KMeansResult {
  ClusterModel model;
  // inertia_history[i] is the sum of squared distances after the i-th
  // assignment step.
  std::vector<double> inertia_history;
  int32_t iterations = 0;
  bool converged = false;
};

// Uniform subsample of floor(fraction * N) rows without replacement; the
// selected rows keep their original relative order.
MatrixF CorpusSample(const MatrixF &vectors, double fraction, uint64_t seed);

// kmeans++ seeding followed by Lloyd iterations.  Empty clusters are re-seeded
// from the point farthest from its centroid.  Throws InputError when there are
// fewer (distinct) vectors than K.
KMeansResult KMeansFit(const MatrixF &vectors, const KMeansOptions &opts);

// Nearest centroid by squared Euclidean distance, ties to the lowest index.
std::vector<int32_t> AssignIds(const ClusterModel &model, const MatrixF &frames);

FrameLabelSequence Assign(const ClusterModel &model, const MatrixF &frames, int32_t rate,
                          const std::string &utt_id = "");

double Inertia(const ClusterModel &model, const MatrixF &vectors);

enum class SubsampleRule { kTakeFirst, kMajority };

// Reduces the label rate by `factor`; length floor(T / factor) to match
// StackFrames.  kMajority breaks ties towards the smaller id.
std::vector<int32_t> SubsampleIds(const std::vector<int32_t> &ids, int32_t factor = 4,
                                  SubsampleRule rule = SubsampleRule::kTakeFirst);

FrameLabelSequence SubsampleLabels(const FrameLabelSequence &labels, int32_t factor = 4,
                                   SubsampleRule rule = SubsampleRule::kTakeFirst);

}  // namespace mppt

#endif  // MPPT_CLUSTERING_H_
