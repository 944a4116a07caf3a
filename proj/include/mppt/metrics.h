// mppt/metrics.h

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

#ifndef MPPT_METRICS_H_
#define MPPT_METRICS_H_

#include <span>
#include <string>
#include <vector>

#include "mppt/clustering.h"
#include "mppt/common.h"
#include "mppt/masking.h"

namespace mppt {

// Frame co-occurrence counts of cluster k (rows) and reference label l
// (columns).
struct JointCounts {
  Eigen::Matrix<int64_t, Eigen::Dynamic, Eigen::Dynamic> counts;
  int64_t total = 0;

  JointCounts() = default;
  JointCounts(int64_t num_clusters, int64_t num_labels);

  void Add(int32_t cluster, int32_t label, int64_t n = 1);
  JointCounts &operator+=(const JointCounts &other);
};

// Reference frame truth for one utterance at 100 Hz.
struct FrameTruth {
  std::string utt_id;
  std::vector<int32_t> ids;
};

// Counts over a corpus.  The 100 Hz truth is brought to the cluster rate with
// the same take-first subsampling as the labels.  Throws InputError naming the
// utterance when lengths disagree.
JointCounts ComputeJointCounts(const std::vector<FrameLabelSequence> &clusters,
                               const std::vector<FrameTruth> &truth, int32_t num_clusters,
                               int32_t num_labels, int32_t truth_rate = 100);

// Best accuracy of predicting the cluster from the label:
// sum_l max_k counts[k][l] / total.
double ClusterPurity(const JointCounts &jc);

// Best accuracy of predicting the label from the cluster:
// sum_k max_l counts[k][l] / total.
double LabelPurity(const JointCounts &jc);

// Argmax accuracy over masked frames (ties to the lowest index).
template <typename Real>
double MaskedAccuracy(const Matrix<Real> &logits, std::span<const int32_t> labels,
                      const MaskSpec &mask);

int64_t EditDistance(std::span<const int32_t> hyp, std::span<const int32_t> ref);

// Levenshtein distance / |ref|.
double WordErrorRate(std::span<const int32_t> hyp, std::span<const int32_t> ref);

}  // namespace mppt

#endif  // MPPT_METRICS_H_
