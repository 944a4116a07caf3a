// src/plan.cc

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

#include "mppt/plan.h"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

#include "mppt/features.h"
#include "mppt/io.h"
#include "mppt/metrics.h"

namespace mppt {

using nlohmann::json;

void to_json(json &j, const TrainConfig &c) {
  j = json{{"total_updates", c.total_updates},
           {"warmup_fraction", c.warmup_fraction},
           {"peak_lr", c.peak_lr},
           {"batch_seconds", c.batch_seconds},
           {"seed", c.seed},
           {"freeze_encoder_updates", c.freeze_encoder_updates},
           {"w_masked", c.loss.w_masked},
           {"w_unmasked", c.loss.w_unmasked},
           {"mask_start_prob", c.mask_start_prob},
           {"mask_span_ms", c.mask_span_ms},
           {"spec_augment", c.spec_augment},
           {"validation_seed", c.validation_seed},
           {"log_every", c.log_every}};
}

// Overlays the keys present in j.
void from_json(const json &j, TrainConfig &c) {
  c.total_updates = j.value("total_updates", c.total_updates);
  c.warmup_fraction = j.value("warmup_fraction", c.warmup_fraction);
  c.peak_lr = j.value("peak_lr", c.peak_lr);
  c.batch_seconds = j.value("batch_seconds", c.batch_seconds);
  c.seed = j.value("seed", c.seed);
  c.freeze_encoder_updates = j.value("freeze_encoder_updates", c.freeze_encoder_updates);
  c.loss.w_masked = j.value("w_masked", c.loss.w_masked);
  c.loss.w_unmasked = j.value("w_unmasked", c.loss.w_unmasked);
  c.mask_start_prob = j.value("mask_start_prob", c.mask_start_prob);
  c.mask_span_ms = j.value("mask_span_ms", c.mask_span_ms);
  c.spec_augment = j.value("spec_augment", c.spec_augment);
  c.validation_seed = j.value("validation_seed", c.validation_seed);
  c.log_every = j.value("log_every", c.log_every);
}

void to_json(json &j, const ClusteringOptions &c) {
  j = json{{"k", c.k},
           {"seed", c.seed},
           {"sample_fraction", c.sample_fraction},
           {"max_iters", c.max_iters},
           {"tol", c.tol}};
}

void from_json(const json &j, ClusteringOptions &c) {
  c.k = j.value("k", c.k);
  c.seed = j.value("seed", c.seed);
  c.sample_fraction = j.value("sample_fraction", c.sample_fraction);
  c.max_iters = j.value("max_iters", c.max_iters);
  c.tol = j.value("tol", c.tol);
}

Profile LoadProfile(const KeyValueConfig &kv) {
  Profile p;
  p.seed = static_cast<uint64_t>(kv.GetInt("seed", 0));

  SynthSpec &sy = p.synth;
  sy.n_phones = static_cast<int32_t>(kv.GetInt("synth.n_phones", sy.n_phones));
  sy.feature_dim = static_cast<int32_t>(kv.GetInt("synth.feature_dim", sy.feature_dim));
  sy.phone_mean_scale = kv.GetDouble("synth.phone_mean_scale", sy.phone_mean_scale);
  sy.speaker_count = static_cast<int32_t>(kv.GetInt("synth.speaker_count", sy.speaker_count));
  sy.speaker_offset_scale = kv.GetDouble("synth.speaker_offset_scale", sy.speaker_offset_scale);
  sy.channel_scale_range.first = kv.GetDouble("synth.channel_scale_min", sy.channel_scale_range.first);
  sy.channel_scale_range.second = kv.GetDouble("synth.channel_scale_max", sy.channel_scale_range.second);
  sy.duration_range_frames.first =
      static_cast<int32_t>(kv.GetInt("synth.min_phone_frames", sy.duration_range_frames.first));
  sy.duration_range_frames.second =
      static_cast<int32_t>(kv.GetInt("synth.max_phone_frames", sy.duration_range_frames.second));
  sy.emission_noise_std = kv.GetDouble("synth.emission_noise_std", sy.emission_noise_std);
  sy.phones_per_utt.first = static_cast<int32_t>(kv.GetInt("synth.min_phones", sy.phones_per_utt.first));
  sy.phones_per_utt.second = static_cast<int32_t>(kv.GetInt("synth.max_phones", sy.phones_per_utt.second));
  sy.successors_per_phone =
      static_cast<int32_t>(kv.GetInt("synth.successors_per_phone", sy.successors_per_phone));
  sy.variants_per_phone = static_cast<int32_t>(kv.GetInt("synth.variants_per_phone", sy.variants_per_phone));
  sy.variant_offset_scale = kv.GetDouble("synth.variant_offset_scale", sy.variant_offset_scale);
  sy.seed = static_cast<uint64_t>(kv.GetInt("synth.seed", static_cast<int64_t>(p.seed)));
  sy.Validate();
  p.train_utts = static_cast<int32_t>(kv.GetInt("synth.train_utts", p.train_utts));
  p.dev_utts = static_cast<int32_t>(kv.GetInt("synth.dev_utts", p.dev_utts));
  p.labelled_fraction = kv.GetDouble("synth.labelled_fraction", p.labelled_fraction);

  EncoderConfig &e = p.encoder;
  e.n_layers = static_cast<int32_t>(kv.GetInt("encoder.n_layers", e.n_layers));
  e.embed_dim = static_cast<int32_t>(kv.GetInt("encoder.embed_dim", e.embed_dim));
  e.ffn_dim = static_cast<int32_t>(kv.GetInt("encoder.ffn_dim", e.ffn_dim));
  e.n_heads = static_cast<int32_t>(kv.GetInt("encoder.n_heads", e.n_heads));
  e.centre_frames = static_cast<int32_t>(kv.GetInt("encoder.centre_frames", e.centre_frames));
  e.right_frames = static_cast<int32_t>(kv.GetInt("encoder.right_frames", e.right_frames));
  e.pos_conv_kernel = static_cast<int32_t>(kv.GetInt("encoder.pos_conv_kernel", e.pos_conv_kernel));
  e.stack_factor = static_cast<int32_t>(kv.GetInt("encoder.stack_factor", e.stack_factor));
  e.input_dim = static_cast<int32_t>(kv.GetInt("encoder.input_dim", e.input_dim));
  e.Validate();

  TrainConfig &pt = p.pretrain;
  pt.seed = p.seed;
  pt.total_updates = kv.GetInt("pretrain.total_updates", pt.total_updates);
  pt.warmup_fraction = kv.GetDouble("pretrain.warmup_fraction", pt.warmup_fraction);
  pt.peak_lr = kv.GetDouble("pretrain.peak_lr", pt.peak_lr);
  pt.batch_seconds = kv.GetDouble("pretrain.batch_seconds", pt.batch_seconds);
  pt.loss.w_masked = kv.GetDouble("pretrain.w_masked", pt.loss.w_masked);
  pt.loss.w_unmasked = kv.GetDouble("pretrain.w_unmasked", pt.loss.w_unmasked);
  pt.mask_start_prob = kv.GetDouble("mask.start_prob", pt.mask_start_prob);
  pt.mask_span_ms = kv.GetDouble("mask.span_ms", pt.mask_span_ms);
  pt.log_every = kv.GetInt("log_every", 0);
  pt.Validate();

  p.supervised = pt;
  p.supervised.peak_lr = kv.GetDouble("supervised.peak_lr", 1e-3);
  p.supervised.total_updates = kv.GetInt("supervised.total_updates", kv.GetInt("finetune.total_updates", 500));
  p.supervised.freeze_encoder_updates = 0;
  p.supervised.spec_augment = kv.GetBool("finetune.spec_augment", false);
  p.supervised.Validate();

  p.lr_reduction = kv.GetDouble("finetune.lr_reduction", p.lr_reduction);
  if (!(p.lr_reduction > 0)) throw ConfigError("finetune.lr_reduction must be > 0");
  p.finetune = p.supervised;
  p.finetune.total_updates = kv.GetInt("finetune.total_updates", p.supervised.total_updates);
  p.finetune.freeze_encoder_updates = kv.GetInt("finetune.freeze_encoder_updates", p.finetune.total_updates / 10);
  p.finetune.peak_lr = p.supervised.peak_lr / p.lr_reduction;
  p.finetune.Validate();

  p.bias_head_only_updates = kv.GetInt("bias.head_only_updates", 100);
  p.bias_joint_updates = kv.GetInt("bias.joint_updates", 200);
  if (p.bias_head_only_updates < 0 || p.bias_joint_updates < 0)
    throw ConfigError("bias update counts must be >= 0");
  p.bias = p.finetune;
  p.bias.spec_augment = false;
  p.bias.total_updates = p.bias_head_only_updates + p.bias_joint_updates;
  p.bias.freeze_encoder_updates = p.bias_head_only_updates;
  p.bias.peak_lr = kv.GetDouble("bias.peak_lr", p.finetune.peak_lr);
  p.bias.Validate();

  for (auto *c : {&p.first_clusters, &p.second_clusters}) {
    c->seed = p.seed;
    c->sample_fraction = kv.GetDouble("cluster.sample_fraction", c->sample_fraction);
    c->max_iters = static_cast<int32_t>(kv.GetInt("cluster.max_iters", c->max_iters));
    c->tol = kv.GetDouble("cluster.tol", c->tol);
  }
  p.first_clusters.k = static_cast<int32_t>(kv.GetInt("cluster.k1", 24));
  p.second_clusters.k = static_cast<int32_t>(kv.GetInt("cluster.k2", 16));
  p.unbiased_layer = kv.GetString("cluster.unbiased_layer", p.unbiased_layer);
  p.biased_layer = kv.GetString("cluster.biased_layer", p.biased_layer);
  return p;
}

void to_json(json &j, const IterationPlan &p) {
  j = json::object();
  j["corpora"] = p.corpora;
  j["stages"] = json::array();
  for (const Stage &s : p.stages)
    j["stages"].push_back({{"kind", s.kind}, {"inputs", s.inputs}, {"outputs", s.outputs}, {"config", s.config}});
}

void from_json(const json &j, IterationPlan &p) {
  p.corpora = j.value("corpora", std::map<std::string, std::string>{});
  p.stages.clear();
  for (const json &s : j.at("stages")) {
    Stage st;
    st.kind = s.at("kind").get<std::string>();
    st.inputs = s.value("inputs", std::map<std::string, std::string>{});
    st.outputs = s.value("outputs", std::map<std::string, std::string>{});
    st.config = s.value("config", json::object());
    p.stages.push_back(std::move(st));
  }
}

IterationPlan LoadPlan(const std::filesystem::path &path) {
  std::ifstream is(path);
  if (!is) throw PlanError("cannot open plan " + path.string());
  IterationPlan plan;
  try {
    plan = json::parse(is).get<IterationPlan>();
  } catch (const json::exception &e) {
    throw PlanError("malformed plan " + path.string() + ": " + e.what());
  }
  for (auto &[name, manifest] : plan.corpora) {
    std::filesystem::path m(manifest);
    if (m.is_relative()) manifest = (path.parent_path() / m).string();
  }
  return plan;
}

namespace {

struct StageRoles {
  std::set<std::string> required_in, optional_in, required_out, optional_out;
};

const std::map<std::string, StageRoles> &KnownStages() {
  static const std::map<std::string, StageRoles> kStages = {
      {"cluster", {{"corpus"}, {"checkpoint", "select", "apply"}, {"labels"}, {"model"}}},
      {"pretrain", {{"corpus", "labels"}, {"init", "validation"}, {"checkpoint"}, {}}},
      {"bias", {{"checkpoint", "corpus"}, {}, {"checkpoint"}, {}}},
      {"finetune", {{"corpus"}, {"checkpoint"}, {"checkpoint"}, {}}},
      {"extract", {{"checkpoint", "corpus"}, {}, {"embeddings"}, {}}},
      {"evaluate", {{"checkpoint", "corpus"}, {}, {"report"}, {}}},
  };
  return kStages;
}

bool IsCorpusRole(const std::string &role) {
  return role == "corpus" || role == "select" || role == "apply" || role == "validation";
}

std::string OutputKind(const std::string &stage_kind, const std::string &role) {
  if (role == "labels") return "labels";
  if (role == "model") return "clusters";
  if (role == "embeddings") return "embeddings";
  if (role == "report") return "report";
  (void)stage_kind;
  return "checkpoint";
}

std::vector<std::string> SplitList(const std::string &s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

// "train:labelled" -> ("train", "labelled")
std::pair<std::string, std::string> SplitCorpusRef(const std::string &ref) {
  size_t colon = ref.find(':');
  if (colon == std::string::npos) return {ref, ""};
  return {ref.substr(0, colon), ref.substr(colon + 1)};
}

// Iteration-1 clustering input: MFCC with deltas for audio, the stored
// features otherwise.
MatrixF ClusterInput(const Utterance &u) {
  if (u.features || !u.HasSamples()) return UtteranceFeatures(u).frames;
  return ComputeMfccDeltas(u.samples, u.sample_rate).frames;
}

std::string StageName(size_t index, const Stage &s) {
  return "stage " + std::to_string(index) + " (" + s.kind + ")";
}

}  // namespace

void ValidatePlan(const IterationPlan &plan, const std::vector<std::string> &preloaded) {
  std::set<std::string> corpora(preloaded.begin(), preloaded.end());
  for (const auto &[name, path] : plan.corpora) {
    if (!corpora.count(name) && !std::filesystem::exists(path))
      throw PlanError("corpus '" + name + "' manifest does not exist: " + path);
    corpora.insert(name);
  }
  std::map<std::string, std::string> produced;  // name -> artifact kind
  for (size_t i = 0; i < plan.stages.size(); ++i) {
    const Stage &s = plan.stages[i];
    const std::string where = StageName(i, s);
    auto known = KnownStages().find(s.kind);
    if (known == KnownStages().end()) throw PlanError(where + ": unknown stage kind");
    const StageRoles &roles = known->second;
    for (const auto &r : roles.required_in)
      if (!s.inputs.count(r)) throw PlanError(where + ": missing input '" + r + "'");
    for (const auto &r : roles.required_out)
      if (!s.outputs.count(r)) throw PlanError(where + ": missing output '" + r + "'");
    for (const auto &[role, ref] : s.inputs) {
      if (!roles.required_in.count(role) && !roles.optional_in.count(role))
        throw PlanError(where + ": unexpected input role '" + role + "'");
      if (IsCorpusRole(role)) {
        for (const auto &item : SplitList(ref)) {
          auto [name, split] = SplitCorpusRef(item);
          if (!corpora.count(name))
            throw PlanError(where + ": input '" + role + "' refers to unknown corpus '" + name + "'");
          if (!split.empty() && split != "labelled" && split != "unlabelled")
            throw PlanError(where + ": bad corpus split '" + split + "'");
        }
        continue;
      }
      auto it = produced.find(ref);
      if (it == produced.end())
        throw PlanError(where + ": input '" + role + "' refers to '" + ref +
                        "', which no earlier stage produces");
      const std::string want = role == "labels" ? "labels" : "checkpoint";
      if (it->second != want)
        throw PlanError(where + ": input '" + role + "' needs a " + want + " but '" + ref + "' is a " +
                        it->second);
    }
    if (s.kind == "cluster" && s.inputs.count("checkpoint") && s.config.value("layer", "mid") == "auto" &&
        !s.inputs.count("select"))
      throw PlanError(where + ": automatic layer selection needs a 'select' corpus");
    for (const auto &[role, name] : s.outputs) {
      if (!roles.required_out.count(role) && !roles.optional_out.count(role))
        throw PlanError(where + ": unexpected output role '" + role + "'");
      if (produced.count(name) || corpora.count(name))
        throw PlanError(where + ": output name '" + name + "' is already taken");
      produced[name] = OutputKind(s.kind, role);
    }
  }
}

namespace {

class PlanRunner {
 public:
  PlanRunner(const IterationPlan &plan, const std::filesystem::path &out_dir,
             const std::map<std::string, Corpus> &preloaded)
      : plan_(plan), out_dir_(out_dir), corpora_(preloaded) {}

  PlanResult Run() {
    for (const auto &[name, path] : plan_.corpora)
      if (!corpora_.count(name)) corpora_[name] = ReadCorpus(path);
    if (!out_dir_.empty()) std::filesystem::create_directories(out_dir_);
    for (size_t i = 0; i < plan_.stages.size(); ++i) {
      const Stage &s = plan_.stages[i];
      spdlog::info("running {}", StageName(i, s));
      if (s.kind == "cluster")
        RunCluster(i, s);
      else if (s.kind == "pretrain")
        RunPretrain(i, s);
      else if (s.kind == "bias" || s.kind == "finetune")
        RunCtc(i, s);
      else if (s.kind == "extract")
        RunExtract(i, s);
      else
        RunEvaluate(i, s);
    }
    if (!out_dir_.empty()) WriteIndex();
    return std::move(result_);
  }

 private:
  std::vector<const Utterance *> Utterances(const std::string &refs) {
    std::vector<const Utterance *> out;
    for (const auto &item : SplitList(refs)) {
      auto [name, split] = SplitCorpusRef(item);
      const Corpus &c = corpora_.at(name);
      if (split.empty()) {
        for (const auto &u : c.utterances) out.push_back(&u);
      } else {
        for (size_t idx : split == "labelled" ? c.labelled : c.unlabelled) out.push_back(&c.utterances[idx]);
      }
    }
    return out;
  }

  Artifact &Get(const std::string &name) { return result_.artifacts.at(name); }

  const EncoderCheckpoint &Checkpoint(const std::string &name) { return *Get(name).checkpoint; }

  json InputProvenance(const Stage &s) {
    json inputs = json::object();
    for (const auto &[role, ref] : s.inputs) {
      if (IsCorpusRole(role)) {
        json list = json::array();
        for (const auto &item : SplitList(ref)) {
          auto name = SplitCorpusRef(item).first;
          auto it = plan_.corpora.find(name);
          list.push_back({{"corpus", item}, {"manifest", it == plan_.corpora.end() ? "<memory>" : it->second}});
        }
        inputs[role] = list;
      } else {
        inputs[role] = Get(ref).provenance;
      }
    }
    return inputs;
  }

  Artifact &Emit(size_t index, const Stage &s, const std::string &role, const std::string &tag) {
    const std::string &name = s.outputs.at(role);
    Artifact &a = result_.artifacts[name];
    a.name = name;
    a.kind = OutputKind(s.kind, role);
    a.tag = tag;
    a.provenance = {{"artifact", name}, {"kind", a.kind},          {"tag", tag},
                    {"stage", index},   {"stage_kind", s.kind},    {"config", s.config},
                    {"inputs", InputProvenance(s)}};
    return a;
  }

  std::filesystem::path ArtifactDir(const Artifact &a) {
    std::filesystem::path dir = out_dir_ / a.name;
    std::filesystem::create_directories(dir);
    std::ofstream(dir / "provenance.json") << a.provenance.dump(2) << '\n';
    if (!a.report.empty()) std::ofstream(dir / "report.json") << a.report.dump(2) << '\n';
    return dir;
  }

  static JointCounts Purity(const std::vector<FrameLabelSequence> &labels,
                            const std::vector<const Utterance *> &utts, int32_t k) {
    std::vector<FrameTruth> truth;
    std::vector<FrameLabelSequence> with_truth;
    int32_t num_labels = 0;
    for (size_t i = 0; i < utts.size(); ++i) {
      if (utts[i]->frame_truth.empty()) continue;
      truth.push_back({utts[i]->id, utts[i]->frame_truth});
      with_truth.push_back(labels[i]);
      for (int32_t t : utts[i]->frame_truth) num_labels = std::max(num_labels, t + 1);
    }
    if (truth.empty()) return {};
    return ComputeJointCounts(with_truth, truth, k, num_labels);
  }

  void RunCluster(size_t index, const Stage &s) {
    ClusteringOptions opts = s.config.get<ClusteringOptions>();
    const int32_t stack = s.config.value("stack_factor", 4);
    const std::string subsample = s.config.value("subsample", "first");
    std::vector<const Utterance *> fit = Utterances(s.inputs.at("corpus"));
    std::vector<const Utterance *> all = fit;
    if (s.inputs.count("apply")) {
      auto extra = Utterances(s.inputs.at("apply"));
      all.insert(all.end(), extra.begin(), extra.end());
    }
    std::vector<FrameLabelSequence> labels;
    ClusterModel model;
    std::string source;
    json report = json::object();
    if (!s.inputs.count("checkpoint")) {
      source = s.config.value("source_name", "MFCC");
      std::vector<MatrixF> frames;
      for (const Utterance *u : fit) frames.push_back(ClusterInput(*u));
      model = FitClusters(frames, opts, source);
      const SubsampleRule rule = subsample == "majority" ? SubsampleRule::kMajority : SubsampleRule::kTakeFirst;
      for (const Utterance *u : all) {
        FrameLabelSequence l = Assign(model, ClusterInput(*u), 100, u->id);
        labels.push_back(SubsampleLabels(l, stack, rule));
      }
    } else {
      const EncoderCheckpoint &ckpt = Checkpoint(s.inputs.at("checkpoint"));
      source = ckpt.artifact_tag;
      const std::string layer_opt = s.config.contains("layer") && s.config["layer"].is_number_integer()
                                        ? std::to_string(s.config["layer"].get<int>())
                                        : s.config.value("layer", "mid");
      int32_t layer = 0;
      if (layer_opt == "mid") {
        layer = std::max(1, ckpt.config.n_layers / 2);
      } else if (layer_opt == "auto") {
        std::vector<double> purities;
        auto select = PrepareExamples(Utterances(s.inputs.at("select")), ckpt.config.stack_factor);
        layer = SelectLayerByLabelPurity(ckpt, select, opts, &purities);
        report["layer_label_purity"] = purities;
      } else {
        layer = std::stoi(layer_opt);
      }
      report["layer"] = layer;
      auto examples = PrepareExamples(all, ckpt.config.stack_factor);
      auto emb = ExtractEmbeddings(ckpt, layer, examples);
      std::vector<MatrixF> fit_emb(emb.begin(), emb.begin() + static_cast<std::ptrdiff_t>(fit.size()));
      model = FitClusters(fit_emb, opts, source + ":layer" + std::to_string(layer));
      labels = LabelAll(model, emb, examples);
    }
    std::vector<FrameLabelSequence> fit_labels(labels.begin(), labels.begin() + static_cast<std::ptrdiff_t>(fit.size()));
    JointCounts jc = Purity(fit_labels, fit, model.K());
    if (jc.total > 0) {
      report["cluster_purity"] = ClusterPurity(jc);
      report["label_purity"] = LabelPurity(jc);
    }
    report["k"] = model.K();

    Artifact &a = Emit(index, s, "labels", source);
    a.num_labels = model.K();
    for (const auto &l : labels) a.labels[l.utt_id] = l.ids;
    a.report = report;
    if (!out_dir_.empty()) WriteLabels(ArtifactDir(a) / "labels.txt", labels);
    if (s.outputs.count("model")) {
      Artifact &m = Emit(index, s, "model", source);
      m.clusters = model;
      if (!out_dir_.empty()) WriteClusterModel(ArtifactDir(m) / "clusters.kmns", model);
    }
  }

  EncoderConfig StageEncoder(const Stage &s, int32_t vocab_out) {
    EncoderConfig cfg;
    json j = cfg;
    if (s.config.contains("encoder")) j.update(s.config["encoder"]);
    cfg = j.get<EncoderConfig>();
    if (!s.config.contains("encoder") || !s.config["encoder"].contains("vocab_out")) cfg.vocab_out = vocab_out;
    return cfg;
  }

  void RunPretrain(size_t index, const Stage &s) {
    const Artifact &labels = Get(s.inputs.at("labels"));
    TrainConfig cfg;
    if (s.config.contains("train")) from_json(s.config["train"], cfg);
    EncoderCheckpoint init;
    EncoderConfig enc;
    if (s.inputs.count("init")) {
      init = Checkpoint(s.inputs.at("init"));
      enc = init.config;
    } else {
      enc = StageEncoder(s, labels.num_labels);
    }
    if (enc.vocab_out < labels.num_labels)
      throw ConfigError(StageName(index, s) + ": vocab_out " + std::to_string(enc.vocab_out) + " < K " +
                        std::to_string(labels.num_labels));
    auto train = PrepareExamples(Utterances(s.inputs.at("corpus")), enc.stack_factor, &labels.labels);
    TrainLog log;
    EncoderCheckpoint ckpt = Pretrain(train, enc, cfg, s.inputs.count("init") ? &init : nullptr, &log);
    ckpt.artifact_tag = ArtifactTag(labels.tag, cfg.total_updates, labels.num_labels);
    json report = {{"skipped_updates", log.skipped_updates}};
    if (!log.entries.empty()) report["final_loss"] = log.entries.back().loss;
    if (s.inputs.count("validation")) {
      auto val = PrepareExamples(Utterances(s.inputs.at("validation")), enc.stack_factor, &labels.labels);
      report["validation_masked_accuracy"] = ValidationMaskedAccuracy(ckpt, val, cfg);
    }
    Artifact &a = Emit(index, s, "checkpoint", ckpt.artifact_tag);
    a.report = report;
    a.checkpoint = std::move(ckpt);
    if (!out_dir_.empty()) SaveCheckpoint(ArtifactDir(a) / "checkpoint.mpck", *a.checkpoint);
  }

  static int32_t CtcVocab(const std::vector<SequenceExample> &examples) {
    int32_t v = 1;
    for (const auto &ex : examples)
      for (int32_t t : ex.transcript) v = std::max(v, t + 1);
    return v;
  }

  void RunCtc(size_t index, const Stage &s) {
    TrainConfig cfg;
    if (s.config.contains("train")) from_json(s.config["train"], cfg);
    EncoderCheckpoint init;
    if (s.inputs.count("checkpoint")) {
      init = Checkpoint(s.inputs.at("checkpoint"));
    } else {
      init.config = StageEncoder(s, 1);
      init.params = InitParameters(init.config, DeriveSeed(cfg.seed, 1));
      init.artifact_tag = "random";
    }
    auto train = PrepareExamples(Utterances(s.inputs.at("corpus")), init.config.stack_factor);
    if (train.empty()) throw InputError(StageName(index, s) + ": labelled set is empty");
    const int32_t vocab = s.config.value("ctc_vocab", CtcVocab(train));
    CtcTrainPlan ctc_plan;
    if (s.kind == "bias") {
      ctc_plan = BiasPlan(cfg, s.config.value("head_only_updates", int64_t{0}),
                          s.config.value("joint_updates", int64_t{0}), vocab);
    } else {
      ctc_plan = FinetunePlan(cfg, vocab);
    }
    TrainLog log;
    EncoderCheckpoint ckpt = TrainCtc(init, train, ctc_plan, &log);
    ckpt.artifact_tag = init.artifact_tag + (s.kind == "bias" ? "+ft" : "+ctc");
    json report = {{"skipped_updates", log.skipped_updates},
                   {"skipped_examples", log.skipped_examples},
                   {"ctc_vocab", vocab},
                   {"mean_ctc_loss", MeanCtcLoss(ckpt, train)}};
    Artifact &a = Emit(index, s, "checkpoint", ckpt.artifact_tag);
    a.report = report;
    a.checkpoint = std::move(ckpt);
    if (!out_dir_.empty()) SaveCheckpoint(ArtifactDir(a) / "checkpoint.mpck", *a.checkpoint);
  }

  void RunExtract(size_t index, const Stage &s) {
    const EncoderCheckpoint &ckpt = Checkpoint(s.inputs.at("checkpoint"));
    const int32_t layer = s.config.value("layer", ckpt.config.n_layers);
    auto examples = PrepareExamples(Utterances(s.inputs.at("corpus")), ckpt.config.stack_factor);
    auto emb = ExtractEmbeddings(ckpt, layer, examples);
    Artifact &a = Emit(index, s, "embeddings", ckpt.artifact_tag + ":layer" + std::to_string(layer));
    a.report = {{"layer", layer}, {"utterances", examples.size()}};
    if (out_dir_.empty()) return;
    std::filesystem::path dir = ArtifactDir(a);
    for (size_t i = 0; i < examples.size(); ++i) {
      FeatureSequence f;
      f.frames = emb[i];
      f.rate = 100 / ckpt.config.stack_factor;
      WriteFeatures(dir / (examples[i].id + ".feat"), f);
    }
  }

  void RunEvaluate(size_t index, const Stage &s) {
    const EncoderCheckpoint &ckpt = Checkpoint(s.inputs.at("checkpoint"));
    auto test = PrepareExamples(Utterances(s.inputs.at("corpus")), ckpt.config.stack_factor);
    EvaluationReport r = Evaluate(ckpt, test);
    json utts = json::array();
    for (const auto &u : r.utterances)
      utts.push_back({{"id", u.id}, {"hyp", u.hyp}, {"ref", u.ref}, {"edits", u.edits}});
    Artifact &a = Emit(index, s, "report", ckpt.artifact_tag);
    a.report = {{"wer", r.wer}, {"total_edits", r.total_edits}, {"total_ref", r.total_ref}, {"utterances", utts}};
    if (!out_dir_.empty()) ArtifactDir(a);
  }

  void WriteIndex() {
    json index = json::array();
    for (const auto &[name, a] : result_.artifacts)
      index.push_back({{"name", name}, {"kind", a.kind}, {"tag", a.tag}, {"path", name}});
    std::ofstream(out_dir_ / "artifacts.json") << index.dump(2) << '\n';
  }

  const IterationPlan &plan_;
  std::filesystem::path out_dir_;
  std::map<std::string, Corpus> corpora_;
  PlanResult result_;
};

}  // namespace

PlanResult RunIteration(const IterationPlan &plan, const std::filesystem::path &out_dir,
                        const std::map<std::string, Corpus> &preloaded) {
  std::vector<std::string> names;
  for (const auto &[name, c] : preloaded) names.push_back(name);
  ValidatePlan(plan, names);
  return PlanRunner(plan, out_dir, preloaded).Run();
}

namespace {

json LayerOption(const std::string &layer) {
  if (layer == "mid" || layer == "auto") return layer;
  return std::stoi(layer);
}

IterationPlan TwoIterationPlan(const Profile &p, const std::string &train, const std::string &dev,
                               bool biased) {
  IterationPlan plan;
  json first = p.first_clusters;
  first["stack_factor"] = p.encoder.stack_factor;
  plan.stages.push_back({"cluster",
                         {{"corpus", train}, {"apply", dev}},
                         {{"labels", "iter1_labels"}, {"model", "iter1_clusters"}},
                         first});
  json pretrain = {{"encoder", p.encoder}, {"train", p.pretrain}};
  pretrain["encoder"].erase("vocab_out");
  plan.stages.push_back({"pretrain",
                         {{"corpus", train}, {"labels", "iter1_labels"}, {"validation", dev}},
                         {{"checkpoint", "iter1"}},
                         pretrain});
  std::string source = "iter1";
  if (biased) {
    json bias = {{"train", p.bias},
                 {"head_only_updates", p.bias_head_only_updates},
                 {"joint_updates", p.bias_joint_updates}};
    plan.stages.push_back({"bias", {{"checkpoint", "iter1"}, {"corpus", train + ":labelled"}},
                           {{"checkpoint", "iter1_biased"}}, bias});
    source = "iter1_biased";
  }
  json second = p.second_clusters;
  const std::string layer = biased ? p.biased_layer : p.unbiased_layer;
  second["layer"] = LayerOption(layer);
  Stage cluster2{"cluster",
                 {{"corpus", train}, {"checkpoint", source}, {"apply", dev}},
                 {{"labels", "iter2_labels"}, {"model", "iter2_clusters"}},
                 second};
  if (layer == "auto") cluster2.inputs["select"] = train + ":labelled";
  plan.stages.push_back(cluster2);
  plan.stages.push_back({"pretrain",
                         {{"corpus", train}, {"labels", "iter2_labels"}, {"validation", dev}},
                         {{"checkpoint", "iter2"}},
                         pretrain});
  return plan;
}

}  // namespace

IterationPlan UnbiasedPlan(const Profile &profile, const std::string &train, const std::string &dev) {
  return TwoIterationPlan(profile, train, dev, false);
}

IterationPlan BiasedPlan(const Profile &profile, const std::string &train, const std::string &dev) {
  return TwoIterationPlan(profile, train, dev, true);
}

}  // namespace mppt
