// src/metrics.cc

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

#include "mppt/metrics.h"

#include <algorithm>
#include <unordered_map>

namespace mppt {

JointCounts::JointCounts(int64_t num_clusters, int64_t num_labels)
    : counts(Eigen::Matrix<int64_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(num_clusters, num_labels)) {}

void JointCounts::Add(int32_t cluster, int32_t label, int64_t n) {
  if (cluster < 0 || cluster >= counts.rows() || label < 0 || label >= counts.cols())
    throw InputError("joint_counts: id out of range (cluster " + std::to_string(cluster) +
                     ", label " + std::to_string(label) + ")");
  counts(cluster, label) += n;
  total += n;
}

JointCounts &JointCounts::operator+=(const JointCounts &other) {
  if (counts.rows() != other.counts.rows() || counts.cols() != other.counts.cols())
    throw InputError("joint_counts: shape mismatch in merge");
  counts += other.counts;
  total += other.total;
  return *this;
}

JointCounts ComputeJointCounts(const std::vector<FrameLabelSequence> &clusters,
                               const std::vector<FrameTruth> &truth, int32_t num_clusters,
                               int32_t num_labels, int32_t truth_rate) {
  std::unordered_map<std::string, const FrameTruth *> by_id;
  for (const auto &t : truth) by_id[t.utt_id] = &t;
  JointCounts jc(num_clusters, num_labels);
  for (const auto &seq : clusters) {
    auto it = by_id.find(seq.utt_id);
    if (it == by_id.end()) throw InputError("joint_counts: no frame truth for utterance " + seq.utt_id);
    if (seq.rate <= 0 || truth_rate % seq.rate != 0)
      throw InputError("joint_counts: incompatible rates for utterance " + seq.utt_id);
    const std::vector<int32_t> ref = SubsampleIds(it->second->ids, truth_rate / seq.rate);
    if (ref.size() != seq.ids.size())
      throw InputError("joint_counts: length mismatch for utterance " + seq.utt_id + " (" +
                       std::to_string(seq.ids.size()) + " clusters vs " +
                       std::to_string(ref.size()) + " labels)");
    for (size_t t = 0; t < ref.size(); ++t) jc.Add(seq.ids[t], ref[t]);
  }
  return jc;
}

double ClusterPurity(const JointCounts &jc) {
  if (jc.total <= 0) throw InputError("cluster_purity: no frames");
  int64_t hits = 0;
  for (int64_t l = 0; l < jc.counts.cols(); ++l) hits += jc.counts.col(l).maxCoeff();
  return static_cast<double>(hits) / jc.total;
}

double LabelPurity(const JointCounts &jc) {
  if (jc.total <= 0) throw InputError("label_purity: no frames");
  int64_t hits = 0;
  for (int64_t k = 0; k < jc.counts.rows(); ++k) hits += jc.counts.row(k).maxCoeff();
  return static_cast<double>(hits) / jc.total;
}

template <typename Real>
double MaskedAccuracy(const Matrix<Real> &logits, std::span<const int32_t> labels,
                      const MaskSpec &mask) {
  if (static_cast<int64_t>(labels.size()) != logits.rows() || mask.Length() != logits.rows())
    throw InputError("masked_accuracy: length mismatch");
  int64_t total = 0, correct = 0;
  for (int64_t t = 0; t < logits.rows(); ++t) {
    if (!mask.masked[t]) continue;
    Eigen::Index best;
    logits.row(t).maxCoeff(&best);
    ++total;
    if (best == labels[t]) ++correct;
  }
  if (total == 0) throw InputError("masked_accuracy: no masked frames");
  return static_cast<double>(correct) / total;
}

template double MaskedAccuracy(const MatrixF &, std::span<const int32_t>, const MaskSpec &);
template double MaskedAccuracy(const MatrixD &, std::span<const int32_t>, const MaskSpec &);

int64_t EditDistance(std::span<const int32_t> hyp, std::span<const int32_t> ref) {
  std::vector<int64_t> prev(ref.size() + 1), cur(ref.size() + 1);
  for (size_t j = 0; j <= ref.size(); ++j) prev[j] = static_cast<int64_t>(j);
  for (size_t i = 1; i <= hyp.size(); ++i) {
    cur[0] = static_cast<int64_t>(i);
    for (size_t j = 1; j <= ref.size(); ++j) {
      int64_t sub = prev[j - 1] + (hyp[i - 1] == ref[j - 1] ? 0 : 1);
      cur[j] = std::min({sub, prev[j] + 1, cur[j - 1] + 1});
    }
    std::swap(prev, cur);
  }
  return prev[ref.size()];
}

double WordErrorRate(std::span<const int32_t> hyp, std::span<const int32_t> ref) {
  if (ref.empty()) throw InputError("wer: empty reference");
  return static_cast<double>(EditDistance(hyp, ref)) / static_cast<double>(ref.size());
}

}  // namespace mppt
