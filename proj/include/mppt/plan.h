// mppt/plan.h

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

#ifndef MPPT_PLAN_H_
#define MPPT_PLAN_H_

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "mppt/config.h"
#include "mppt/pipeline.h"

namespace mppt {

void to_json(nlohmann::json &j, const TrainConfig &c);
void from_json(const nlohmann::json &j, TrainConfig &c);
void to_json(nlohmann::json &j, const ClusteringOptions &c);
void from_json(const nlohmann::json &j, ClusteringOptions &c);

// Everything a training recipe needs, read from a KeyValueConfig.  Update
// counts of the bias and finetune stages are absolute.
struct Profile {
  uint64_t seed = 0;
  // Synthetic corpus used by synth-data and the experiments.
  SynthSpec synth;
  int32_t train_utts = 200;
  int32_t dev_utts = 40;
  double labelled_fraction = 0.2;
  EncoderConfig encoder;
  TrainConfig pretrain;
  int64_t bias_head_only_updates = 0;
  int64_t bias_joint_updates = 0;
  TrainConfig bias;        // schedule shape and peak LR of the bias step
  TrainConfig supervised;  // supervised-only baseline
  TrainConfig finetune;    // peak_lr = supervised.peak_lr / lr_reduction
  double lr_reduction = 40.0;
  ClusteringOptions first_clusters;
  ClusteringOptions second_clusters;
  std::string unbiased_layer = "mid";  // "mid", "auto" or a 1-based index
  std::string biased_layer = "auto";
};

// Keys (all optional, defaults in parentheses follow the tiny profile):
//   seed
//   encoder.{n_layers, embed_dim, ffn_dim, n_heads, centre_frames,
//            right_frames, pos_conv_kernel, stack_factor, input_dim}
//   mask.{start_prob, span_ms}
//   pretrain.{total_updates, warmup_fraction, peak_lr, batch_seconds,
//             w_masked, w_unmasked}
//   bias.{head_only_updates, joint_updates, peak_lr}
//   supervised.{peak_lr, total_updates}
//   finetune.{total_updates, freeze_encoder_updates, lr_reduction,
//             spec_augment}
//   cluster.{k1, k2, sample_fraction, max_iters, tol, unbiased_layer,
//            biased_layer}
Profile LoadProfile(const KeyValueConfig &kv);

// One stage of an iteration plan.  Inputs and outputs map a role to an
// artifact name; corpus inputs may be "name", "name:labelled" or
// "name:unlabelled".
//
//   kind      inputs                                   outputs
//   cluster   corpus, [checkpoint], [select], [apply]   labels, [model]
//   pretrain  corpus, labels, [init], [validation]      checkpoint
//   bias      checkpoint, corpus                        checkpoint
//   finetune  [checkpoint], corpus                      checkpoint
//   extract   checkpoint, corpus                        embeddings
//   evaluate  checkpoint, corpus                        report
struct Stage {
  std::string kind;
  std::map<std::string, std::string> inputs;
  std::map<std::string, std::string> outputs;
  nlohmann::json config = nlohmann::json::object();
};

struct IterationPlan {
  std::map<std::string, std::string> corpora;  // name -> manifest path
  std::vector<Stage> stages;
};

void to_json(nlohmann::json &j, const IterationPlan &p);
void from_json(const nlohmann::json &j, IterationPlan &p);
IterationPlan LoadPlan(const std::filesystem::path &path);

// Checks stage kinds, required roles and that every input refers to a
// corpus or an earlier output.  Throws PlanError naming the stage.
// `preloaded` names corpora supplied in memory.
void ValidatePlan(const IterationPlan &plan, const std::vector<std::string> &preloaded = {});

struct Artifact {
  std::string name;
  std::string kind;  // labels, clusters, checkpoint, embeddings, report
  std::string tag;
  nlohmann::json provenance;
  LabelMap labels;
  int32_t num_labels = 0;
  std::optional<ClusterModel> clusters;
  std::optional<EncoderCheckpoint> checkpoint;
  nlohmann::json report;  // metrics of the producing stage
};

struct PlanResult {
  std::map<std::string, Artifact> artifacts;
};

// Runs the stages in order.  When out_dir is non-empty every artifact is
// written to out_dir/<name>/ with a provenance.json, and out_dir gets an
// artifacts.json index.
PlanResult RunIteration(const IterationPlan &plan, const std::filesystem::path &out_dir,
                        const std::map<std::string, Corpus> &preloaded = {});

// Two-iteration plans.  `train` must have a labelled split; `dev` is used
// for validation and evaluation.  The biased plan differs only by a bias
// stage before the second cluster stage.
IterationPlan UnbiasedPlan(const Profile &profile, const std::string &train, const std::string &dev);
IterationPlan BiasedPlan(const Profile &profile, const std::string &train, const std::string &dev);

}  // namespace mppt

#endif  // MPPT_PLAN_H_
