// src/pipeline.cc

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

#include "mppt/pipeline.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include <spdlog/spdlog.h>

#include "mppt/features.h"
#include "mppt/metrics.h"
#include "mppt/optimizer.h"

namespace mppt {

void TrainConfig::Validate() const {
  if (!(warmup_fraction > 0.0 && warmup_fraction < 1.0))
    throw ConfigError("train: warmup_fraction must lie in (0, 1)");
  if (!(peak_lr > 0.0)) throw ConfigError("train: peak_lr must be > 0");
  if (!(batch_seconds > 0.0)) throw ConfigError("train: batch_seconds must be > 0");
  if (total_updates < 0) throw ConfigError("train: total_updates must be >= 0");
  if (freeze_encoder_updates < 0 || freeze_encoder_updates > total_updates)
    throw ConfigError("train: freeze_encoder_updates must lie in [0, total_updates]");
  loss.Validate();
}

double LearningRate(double step, const TrainConfig &cfg) {
  const double total = static_cast<double>(cfg.total_updates);
  if (step < 0 || step > total)
    throw InputError("lr_schedule: step " + std::to_string(step) + " outside [0, " +
                     std::to_string(cfg.total_updates) + "]");
  if (cfg.total_updates == 0) return 0.0;
  // The warm-up covers a whole number of updates so that the peak is hit
  // exactly.
  const double warm = std::max(1.0, std::round(cfg.warmup_fraction * total));
  if (step <= warm) return cfg.peak_lr * (step / warm);
  if (total <= warm) return 0.0;
  return cfg.peak_lr * ((total - step) / (total - warm));
}

std::vector<SequenceExample> PrepareExamples(const std::vector<const Utterance *> &utts,
                                             int32_t stack_factor, const LabelMap *labels) {
  std::vector<SequenceExample> out;
  out.reserve(utts.size());
  for (const Utterance *u : utts) {
    FeatureSequence feats = UtteranceFeatures(*u);
    if (feats.NumFrames() < stack_factor) {
      spdlog::warn("skipping {}: {} frames is shorter than the stack factor", u->id, feats.NumFrames());
      continue;
    }
    SequenceExample ex;
    ex.id = u->id;
    ex.features = StackFrames(feats, stack_factor).frames;
    ex.transcript = u->transcript;
    ex.truth = u->frame_truth;
    if (labels) {
      auto it = labels->find(u->id);
      if (it == labels->end()) throw InputError("no frame labels for utterance " + u->id);
      if (static_cast<int64_t>(it->second.size()) != ex.features.rows())
        throw InputError("label length " + std::to_string(it->second.size()) + " != stacked length " +
                         std::to_string(ex.features.rows()) + " for utterance " + u->id);
      ex.labels = it->second;
    }
    out.push_back(std::move(ex));
  }
  return out;
}

std::vector<std::vector<size_t>> MakeBatches(const std::vector<SequenceExample> &examples,
                                             double batch_seconds, int32_t frame_rate) {
  std::vector<size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&examples](size_t a, size_t b) {
    return examples[a].features.rows() < examples[b].features.rows();
  });
  std::vector<std::vector<size_t>> batches;
  std::vector<size_t> current;
  double seconds = 0.0;
  for (size_t i : order) {
    double dur = static_cast<double>(examples[i].features.rows()) / frame_rate;
    if (!current.empty() && seconds + dur > batch_seconds) {
      batches.push_back(std::move(current));
      current.clear();
      seconds = 0.0;
    }
    current.push_back(i);
    seconds += dur;
  }
  if (!current.empty()) batches.push_back(std::move(current));
  return batches;
}

namespace {

// Cycles through shuffled batches, reshuffling each epoch.
class BatchStream {
 public:
  BatchStream(const std::vector<SequenceExample> &examples, double batch_seconds, uint64_t seed)
      : batches_(MakeBatches(examples, batch_seconds)), seed_(seed) {
    if (batches_.empty()) throw InputError("training set is empty");
  }

  const std::vector<size_t> &Next() {
    if (pos_ == order_.size()) {
      order_.resize(batches_.size());
      std::iota(order_.begin(), order_.end(), 0);
      std::mt19937_64 rng(DeriveSeed(seed_, epoch_++));
      std::shuffle(order_.begin(), order_.end(), rng);
      pos_ = 0;
    }
    return batches_[order_[pos_++]];
  }

 private:
  std::vector<std::vector<size_t>> batches_;
  std::vector<size_t> order_;
  size_t pos_ = 0;
  uint64_t epoch_ = 0;
  uint64_t seed_;
};

void ScaleGrads(ParameterSet<float> *grads, float scale) {
  for (auto &[name, g] : *grads) g *= scale;
}

void ZeroGrads(ParameterSet<float> *grads) {
  for (auto &[name, g] : *grads) g.setZero();
}

MaskConfig EncoderRateMask(const TrainConfig &cfg, const EncoderConfig &config) {
  return MaskConfigForRate(cfg.mask_start_prob, cfg.mask_span_ms, 100 / config.stack_factor, 0);
}

}  // namespace

EncoderCheckpoint Pretrain(const std::vector<SequenceExample> &train, const EncoderConfig &config,
                           const TrainConfig &cfg, const EncoderCheckpoint *init, TrainLog *log) {
  cfg.Validate();
  config.Validate();
  for (const auto &ex : train) {
    if (static_cast<int64_t>(ex.labels.size()) != ex.features.rows())
      throw InputError("pretrain: labels of " + ex.id + " do not match its stacked frames");
    for (int32_t id : ex.labels)
      if (id < 0 || id >= config.vocab_out)
        throw ConfigError("pretrain: label " + std::to_string(id) + " of " + ex.id +
                          " exceeds vocab_out " + std::to_string(config.vocab_out));
  }
  EncoderCheckpoint ckpt;
  if (init && !init->params.empty()) {
    ckpt = *init;
    if (!(ckpt.config == config)) throw ConfigError("pretrain: init checkpoint config differs");
  } else {
    ckpt.config = config;
    ckpt.params = InitParameters(config, DeriveSeed(cfg.seed, 1));
  }
  ckpt.head = EncoderCheckpoint::kMaskedPredictionHead;
  if (cfg.total_updates == 0) return ckpt;

  MaskConfig mask_cfg = EncoderRateMask(cfg, config);
  BatchStream stream(train, cfg.batch_seconds, DeriveSeed(cfg.seed, 2));
  AdamOptimizer adam;
  ParameterSet<float> grads = ZerosLike(ckpt.params);
  for (int64_t step = 0; step < cfg.total_updates; ++step) {
    const std::vector<size_t> &batch = stream.Next();
    ZeroGrads(&grads);
    Encoder<float> encoder(ckpt.config, ckpt.params);
    double loss_sum = 0.0;
    for (size_t b = 0; b < batch.size(); ++b) {
      const SequenceExample &ex = train[batch[b]];
      MaskConfig m = mask_cfg;
      m.seed = DeriveSeed(DeriveSeed(cfg.seed, 3 + static_cast<uint64_t>(step)), batch[b]);
      MaskSpec mask = SampleMasks(ex.features.rows(), m);
      ForwardCache<float> cache;
      EncoderOutput<float> out = encoder.Forward(ex.features, &mask, &cache);
      auto loss = MaskedPredictionLoss<float>(out.logits, ex.labels, mask, cfg.loss, true);
      loss_sum += loss.loss;
      encoder.Backward(cache, loss.grad_logits, &grads);
    }
    ScaleGrads(&grads, 1.0f / static_cast<float>(batch.size()));
    const double lr = LearningRate(static_cast<double>(step + 1), cfg);
    adam.Step(&ckpt.params, grads, lr);
    if (log) log->entries.push_back({step, loss_sum / batch.size(), lr});
    if (cfg.log_every > 0 && (step + 1) % cfg.log_every == 0)
      spdlog::info("pretrain step {} loss {:.4f} lr {:.2e}", step + 1, loss_sum / batch.size(), lr);
  }
  if (log) log->skipped_updates = adam.skipped_updates();
  ckpt.training_step += cfg.total_updates;
  return ckpt;
}

double ValidationMaskedAccuracy(const EncoderCheckpoint &ckpt,
                                const std::vector<SequenceExample> &examples,
                                const TrainConfig &cfg) {
  Encoder<float> encoder(ckpt.config, ckpt.params);
  MaskConfig mask_cfg = EncoderRateMask(cfg, ckpt.config);
  int64_t correct = 0, total = 0;
  for (size_t i = 0; i < examples.size(); ++i) {
    const SequenceExample &ex = examples[i];
    MaskConfig m = mask_cfg;
    m.seed = DeriveSeed(cfg.validation_seed, i);
    MaskSpec mask = SampleMasks(ex.features.rows(), m);
    if (mask.NumMasked() == 0) continue;
    EncoderOutput<float> out = encoder.Forward(ex.features, &mask);
    const int64_t n = mask.NumMasked();
    correct += std::llround(MaskedAccuracy<float>(out.logits, ex.labels, mask) * n);
    total += n;
  }
  if (total == 0) throw InputError("validation set has no masked frames");
  return static_cast<double>(correct) / total;
}

CtcTrainPlan BiasPlan(const TrainConfig &cfg, int64_t head_only_updates, int64_t joint_updates,
                      int32_t ctc_vocab) {
  CtcTrainPlan plan;
  plan.frozen_updates = head_only_updates;
  plan.total_updates = head_only_updates + joint_updates;
  plan.peak_lr = cfg.peak_lr;
  plan.warmup_fraction = cfg.warmup_fraction;
  plan.batch_seconds = cfg.batch_seconds;
  plan.seed = cfg.seed;
  plan.spec_augment = false;
  plan.spec_augment_cfg = cfg.spec_augment_cfg;
  plan.ctc_vocab = ctc_vocab;
  return plan;
}

CtcTrainPlan FinetunePlan(const TrainConfig &cfg, int32_t ctc_vocab) {
  CtcTrainPlan plan = BiasPlan(cfg, cfg.freeze_encoder_updates,
                               cfg.total_updates - cfg.freeze_encoder_updates, ctc_vocab);
  plan.spec_augment = cfg.spec_augment;
  return plan;
}

EncoderCheckpoint TrainCtc(const EncoderCheckpoint &init, const std::vector<SequenceExample> &train,
                           const CtcTrainPlan &plan, TrainLog *log) {
  if (train.empty()) throw InputError("ctc training: labelled set is empty");
  if (plan.ctc_vocab < 2) throw ConfigError("ctc training: vocabulary must include blank and a token");
  if (plan.frozen_updates < 0 || plan.frozen_updates > plan.total_updates)
    throw ConfigError("ctc training: frozen updates must lie in [0, total]");
  TrainConfig sched;
  sched.total_updates = plan.total_updates;
  sched.warmup_fraction = plan.warmup_fraction;
  sched.peak_lr = plan.peak_lr;
  sched.batch_seconds = plan.batch_seconds;
  sched.Validate();

  EncoderCheckpoint ckpt = init;
  ReplaceHead(&ckpt.config, &ckpt.params, plan.ctc_vocab, DeriveSeed(plan.seed, 7));
  ckpt.head = EncoderCheckpoint::kCtcHead;
  if (plan.total_updates == 0) return ckpt;

  BatchStream stream(train, plan.batch_seconds, DeriveSeed(plan.seed, 8));
  AdamOptimizer adam;
  ParameterSet<float> grads = ZerosLike(ckpt.params);
  int64_t skipped_examples = 0;
  for (int64_t step = 0; step < plan.total_updates; ++step) {
    const bool frozen = step < plan.frozen_updates;
    const std::vector<size_t> &batch = stream.Next();
    ZeroGrads(&grads);
    Encoder<float> encoder(ckpt.config, ckpt.params);
    double loss_sum = 0.0;
    int64_t used = 0;
    for (size_t b = 0; b < batch.size(); ++b) {
      const SequenceExample &ex = train[batch[b]];
      MatrixF feats = ex.features;
      if (plan.spec_augment)
        feats = SpecAugment(feats, plan.spec_augment_cfg,
                            DeriveSeed(DeriveSeed(plan.seed, 9 + static_cast<uint64_t>(step)), batch[b]));
      ForwardCache<float> cache;
      EncoderOutput<float> out =
          frozen ? encoder.Forward(feats, nullptr, nullptr, -1, false) : encoder.Forward(feats, nullptr, &cache);
      if (frozen) {
        out.logits = out.layer_embeddings.back() * ckpt.params.at("head.weight");
        out.logits.rowwise() += ckpt.params.at("head.bias").row(0);
      }
      MatrixF log_probs = LogSoftmax(out.logits);
      CtcResult<float> ctc = CtcLoss(log_probs, ex.transcript, 0, true);
      if (!ctc.feasible) {
        ++skipped_examples;
        spdlog::warn("ctc training: {} frames cannot emit the {} tokens of {}, skipped", ex.features.rows(),
                     ex.transcript.size(), ex.id);
        continue;
      }
      ++used;
      loss_sum += ctc.loss;
      MatrixF grad_logits = LogSoftmaxBackward(log_probs, ctc.grad_log_probs);
      if (frozen) {
        grads.at("head.weight").noalias() += out.layer_embeddings.back().transpose() * grad_logits;
        grads.at("head.bias").row(0) += grad_logits.colwise().sum();
      } else {
        encoder.Backward(cache, grad_logits, &grads);
      }
    }
    const double lr = LearningRate(static_cast<double>(step + 1), sched);
    if (used > 0) {
      ScaleGrads(&grads, 1.0f / static_cast<float>(used));
      if (frozen)
        adam.Step(&ckpt.params, grads, lr, IsHeadParameter);
      else
        adam.Step(&ckpt.params, grads, lr);
    }
    if (log) log->entries.push_back({step, used ? loss_sum / used : 0.0, lr});
  }
  if (log) {
    log->skipped_updates = adam.skipped_updates();
    log->skipped_examples = skipped_examples;
  }
  ckpt.training_step += plan.total_updates;
  return ckpt;
}

EncoderCheckpoint BiasFinetune(const EncoderCheckpoint &ckpt,
                               const std::vector<SequenceExample> &labelled, const TrainConfig &cfg,
                               int64_t head_only_updates, int64_t joint_updates, int32_t ctc_vocab,
                               TrainLog *log) {
  return TrainCtc(ckpt, labelled, BiasPlan(cfg, head_only_updates, joint_updates, ctc_vocab), log);
}

EncoderCheckpoint FinetuneCtc(const EncoderCheckpoint &ckpt,
                              const std::vector<SequenceExample> &labelled, const TrainConfig &cfg,
                              int32_t ctc_vocab, TrainLog *log) {
  cfg.Validate();
  return TrainCtc(ckpt, labelled, FinetunePlan(cfg, ctc_vocab), log);
}

double MeanCtcLoss(const EncoderCheckpoint &ckpt, const std::vector<SequenceExample> &examples) {
  Encoder<float> encoder(ckpt.config, ckpt.params);
  double sum = 0.0;
  int64_t n = 0;
  for (const auto &ex : examples) {
    MatrixF log_probs = LogSoftmax(encoder.Forward(ex.features, nullptr).logits);
    CtcResult<float> r = CtcLoss(log_probs, ex.transcript);
    if (!r.feasible) continue;
    sum += r.loss;
    ++n;
  }
  if (n == 0) throw InputError("mean ctc loss: no feasible example");
  return sum / n;
}

EvaluationReport AggregateWer(std::vector<UtteranceResult> results) {
  EvaluationReport report;
  for (const auto &r : results) {
    report.total_edits += r.edits;
    report.total_ref += static_cast<int64_t>(r.ref.size());
  }
  if (report.total_ref == 0) throw InputError("evaluate: empty references");
  report.wer = static_cast<double>(report.total_edits) / report.total_ref;
  report.utterances = std::move(results);
  return report;
}

EvaluationReport Evaluate(const EncoderCheckpoint &ckpt, const std::vector<SequenceExample> &test) {
  if (ckpt.head != EncoderCheckpoint::kCtcHead)
    throw InputError("evaluate: checkpoint '" + ckpt.artifact_tag + "' has no CTC head");
  Encoder<float> encoder(ckpt.config, ckpt.params);
  std::vector<UtteranceResult> results;
  for (const auto &ex : test) {
    MatrixF log_probs = LogSoftmax(encoder.Forward(ex.features, nullptr).logits);
    UtteranceResult r;
    r.id = ex.id;
    r.hyp = CtcGreedyDecode(log_probs);
    r.ref = ex.transcript;
    r.edits = EditDistance(r.hyp, r.ref);
    results.push_back(std::move(r));
  }
  return AggregateWer(std::move(results));
}

std::vector<MatrixF> ExtractEmbeddings(const EncoderCheckpoint &ckpt, int32_t layer,
                                       const std::vector<SequenceExample> &examples) {
  if (layer < 1 || layer > ckpt.config.n_layers)
    throw InputError("extract_embeddings: layer " + std::to_string(layer) + " outside [1, " +
                     std::to_string(ckpt.config.n_layers) + "]");
  Encoder<float> encoder(ckpt.config, ckpt.params);
  std::vector<MatrixF> out;
  out.reserve(examples.size());
  for (const auto &ex : examples)
    out.push_back(std::move(encoder.Forward(ex.features, nullptr, nullptr, layer, false).layer_embeddings.back()));
  return out;
}

ClusterModel FitClusters(const std::vector<MatrixF> &vectors, const ClusteringOptions &opts,
                         const std::string &source_tag) {
  int64_t rows = 0;
  for (const auto &m : vectors) rows += m.rows();
  if (vectors.empty() || rows == 0) throw InputError("clustering: no vectors");
  MatrixF all(rows, vectors.front().cols());
  int64_t r = 0;
  for (const auto &m : vectors) {
    all.middleRows(r, m.rows()) = m;
    r += m.rows();
  }
  MatrixF sample = CorpusSample(all, opts.sample_fraction, DeriveSeed(opts.seed, 1));
  KMeansOptions km{.k = opts.k, .seed = opts.seed, .max_iters = opts.max_iters, .tol = opts.tol};
  ClusterModel model = KMeansFit(sample, km).model;
  model.source_tag = source_tag;
  return model;
}

std::vector<FrameLabelSequence> LabelAll(const ClusterModel &model,
                                         const std::vector<MatrixF> &vectors,
                                         const std::vector<SequenceExample> &examples) {
  std::vector<FrameLabelSequence> out;
  for (size_t i = 0; i < vectors.size(); ++i) out.push_back(Assign(model, vectors[i], 25, examples[i].id));
  return out;
}

int32_t SelectLayerByLabelPurity(const EncoderCheckpoint &ckpt,
                                 const std::vector<SequenceExample> &examples,
                                 const ClusteringOptions &opts, std::vector<double> *purities) {
  std::vector<FrameTruth> truth;
  int32_t num_labels = 0;
  for (const auto &ex : examples) {
    if (ex.truth.empty()) throw InputError("layer selection needs frame truth for " + ex.id);
    truth.push_back({ex.id, ex.truth});
    num_labels = std::max(num_labels, *std::max_element(ex.truth.begin(), ex.truth.end()) + 1);
  }
  int32_t best_layer = 1;
  double best = -1.0;
  if (purities) purities->clear();
  for (int32_t layer = 1; layer <= ckpt.config.n_layers; ++layer) {
    std::vector<MatrixF> emb = ExtractEmbeddings(ckpt, layer, examples);
    ClusterModel model = FitClusters(emb, opts, "layer" + std::to_string(layer));
    JointCounts jc = ComputeJointCounts(LabelAll(model, emb, examples), truth, model.K(), num_labels);
    double purity = LabelPurity(jc);
    if (purities) purities->push_back(purity);
    if (purity > best) {
      best = purity;
      best_layer = layer;
    }
  }
  return best_layer;
}

std::string ArtifactTag(const std::string &source, int64_t updates, int32_t k) {
  std::string budget;
  if (updates >= 1000 && updates % 1000 == 0) {
    budget = std::to_string(updates / 1000) + "k";
  } else if (updates >= 1000) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.3g", updates / 1000.0);
    budget = std::string(buf) + "k";
  } else {
    budget = std::to_string(updates);
  }
  return source + "^" + budget + "_" + std::to_string(k);
}

}  // namespace mppt
