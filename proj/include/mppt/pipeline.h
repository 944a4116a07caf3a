// mppt/pipeline.h

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

#ifndef MPPT_PIPELINE_H_
#define MPPT_PIPELINE_H_

#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "mppt/clustering.h"
#include "mppt/corpus.h"
#include "mppt/encoder.h"
#include "mppt/losses.h"
#include "mppt/masking.h"

namespace mppt {

struct TrainConfig {
  int64_t total_updates = 2000;
  double warmup_fraction = 0.08;
  double peak_lr = 2e-3;
  double batch_seconds = 8.0;
  uint64_t seed = 0;
  int64_t freeze_encoder_updates = 0;  // CTC training only
  LossConfig loss;
  // Masking is configured at 100 Hz and converted to the encoder rate.
  double mask_start_prob = 0.04;
  double mask_span_ms = 200.0;
  bool spec_augment = false;
  SpecAugmentConfig spec_augment_cfg;
  // Fixed seed for validation masks.
  uint64_t validation_seed = 12345;
  int64_t log_every = 0;  // 0 disables progress logging

  void Validate() const;
};

// Linear warm-up from 0 to peak_lr over warmup_fraction * total_updates,
// then linear decay to 0 at total_updates.  Throws InputError outside
// [0, total_updates].
double LearningRate(double step, const TrainConfig &cfg);

// A stacked (25 Hz) utterance with its frame targets and/or transcript.
struct SequenceExample {
  std::string id;
  MatrixF features;             // T x input_dim
  std::vector<int32_t> labels;  // per-frame cluster ids (pretraining)
  TokenSequence transcript;     // CTC target
  std::vector<int32_t> truth;   // per-frame reference at 25 Hz, if known
};

using LabelMap = std::unordered_map<std::string, std::vector<int32_t>>;

// Stacks 100 Hz features by `stack_factor`.  When `labels` is given every
// utterance must have a label sequence of the stacked length.  Utterances
// shorter than the factor are skipped.
std::vector<SequenceExample> PrepareExamples(const std::vector<const Utterance *> &utts,
                                             int32_t stack_factor, const LabelMap *labels = nullptr);

// Groups examples into batches of at most batch_seconds of audio (at least
// one example each), after sorting by length.
std::vector<std::vector<size_t>> MakeBatches(const std::vector<SequenceExample> &examples,
                                             double batch_seconds, int32_t frame_rate = 25);

struct TrainLogEntry {
  int64_t step = 0;
  double loss = 0;
  double lr = 0;
};

struct TrainLog {
  std::vector<TrainLogEntry> entries;
  int64_t skipped_updates = 0;
  int64_t skipped_examples = 0;  // infeasible CTC targets
};

// Masked-prediction training of `init` (or a fresh encoder from the config
// when init has no parameters) on frame labels.
EncoderCheckpoint Pretrain(const std::vector<SequenceExample> &train, const EncoderConfig &config,
                           const TrainConfig &cfg, const EncoderCheckpoint *init = nullptr,
                           TrainLog *log = nullptr);

// Masked accuracy over all masked frames of a set, with masks drawn from
// cfg.validation_seed.
double ValidationMaskedAccuracy(const EncoderCheckpoint &ckpt,
                                const std::vector<SequenceExample> &examples,
                                const TrainConfig &cfg);

// Budget of the shared CTC training path used by biasing and finetuning.
struct CtcTrainPlan {
  int64_t frozen_updates = 0;  // head-only updates at the start
  int64_t total_updates = 0;   // including the frozen phase
  double peak_lr = 0;
  double warmup_fraction = 0.08;
  double batch_seconds = 8.0;
  uint64_t seed = 0;
  bool spec_augment = false;
  SpecAugmentConfig spec_augment_cfg;
  int32_t ctc_vocab = 0;  // including blank 0
  bool operator==(const CtcTrainPlan &) const = default;
};

// Bias step: head alone for head_only_updates, then everything for
// joint_updates.
CtcTrainPlan BiasPlan(const TrainConfig &cfg, int64_t head_only_updates, int64_t joint_updates,
                      int32_t ctc_vocab);
// Finetuning: encoder frozen for cfg.freeze_encoder_updates of
// cfg.total_updates, with optional SpecAugment.
CtcTrainPlan FinetunePlan(const TrainConfig &cfg, int32_t ctc_vocab);

// Replaces the head with a fresh CTC head and trains with CTC.
EncoderCheckpoint TrainCtc(const EncoderCheckpoint &init, const std::vector<SequenceExample> &train,
                           const CtcTrainPlan &plan, TrainLog *log = nullptr);

EncoderCheckpoint BiasFinetune(const EncoderCheckpoint &ckpt,
                               const std::vector<SequenceExample> &labelled, const TrainConfig &cfg,
                               int64_t head_only_updates, int64_t joint_updates, int32_t ctc_vocab,
                               TrainLog *log = nullptr);

EncoderCheckpoint FinetuneCtc(const EncoderCheckpoint &ckpt,
                              const std::vector<SequenceExample> &labelled, const TrainConfig &cfg,
                              int32_t ctc_vocab, TrainLog *log = nullptr);

// Mean CTC loss over the feasible examples of a set.
double MeanCtcLoss(const EncoderCheckpoint &ckpt, const std::vector<SequenceExample> &examples);

struct UtteranceResult {
  std::string id;
  TokenSequence hyp, ref;
  int64_t edits = 0;
};

struct EvaluationReport {
  double wer = 0;  // total edits / total reference tokens
  int64_t total_edits = 0;
  int64_t total_ref = 0;
  std::vector<UtteranceResult> utterances;
};

EvaluationReport Evaluate(const EncoderCheckpoint &ckpt, const std::vector<SequenceExample> &test);

// Aggregates per-utterance results into a corpus WER.
EvaluationReport AggregateWer(std::vector<UtteranceResult> results);

// Layer `layer` (1-based) outputs for each example, unmasked.
std::vector<MatrixF> ExtractEmbeddings(const EncoderCheckpoint &ckpt, int32_t layer,
                                       const std::vector<SequenceExample> &examples);

struct ClusteringOptions {
  int32_t k = 16;
  uint64_t seed = 0;
  double sample_fraction = 1.0;
  int32_t max_iters = 100;
  double tol = 1e-6;
};

// Fits KMeans on (a sample of) the stacked per-utterance vectors and
// labels every utterance.
ClusterModel FitClusters(const std::vector<MatrixF> &vectors, const ClusteringOptions &opts,
                         const std::string &source_tag);
std::vector<FrameLabelSequence> LabelAll(const ClusterModel &model,
                                         const std::vector<MatrixF> &vectors,
                                         const std::vector<SequenceExample> &examples);

// Label-purity of KMeans clusters over each layer's embeddings on the
// examples' 25 Hz truth; returns the 1-based layer with the highest value
// and fills per-layer purities.
int32_t SelectLayerByLabelPurity(const EncoderCheckpoint &ckpt,
                                 const std::vector<SequenceExample> &examples,
                                 const ClusteringOptions &opts, std::vector<double> *purities);

// Model id in the X^Y_Z notation, e.g. ArtifactTag("M", 250000, 100) ==
// "M^250k_100".
std::string ArtifactTag(const std::string &source, int64_t updates, int32_t k);

}  // namespace mppt

#endif  // MPPT_PIPELINE_H_
