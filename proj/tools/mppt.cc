// tools/mppt.cc

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

// mppt: command-line front end.
//
//   mppt synth-data --config configs/tiny.conf --out-dir data
//   mppt kmeans --in data/train/data --k 24 --seed 1 --out km.kmns
//   mppt run-plan --config configs/tiny.conf --biased --out-dir exp
//        --corpus train=data/train/manifest.jsonl --corpus dev=data/dev/manifest.jsonl

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "mppt/clustering.h"
#include "mppt/config.h"
#include "mppt/corpus.h"
#include "mppt/features.h"
#include "mppt/io.h"
#include "mppt/losses.h"
#include "mppt/metrics.h"
#include "mppt/pipeline.h"
#include "mppt/plan.h"

namespace fs = std::filesystem;
using json = nlohmann::json;
using namespace mppt;

namespace {

struct CommonOptions {
  std::string config;
  int64_t seed = -1;
  bool deterministic = false;  // execution is sequential, so always honoured
  std::string out_dir;
  std::vector<std::string> sets;
  bool verbose = false;
};

void AddCommon(CLI::App *cmd, CommonOptions *o, bool needs_out_dir) {
  cmd->add_option("--config", o->config, "profile file (key = value, [sections])");
  cmd->add_option("--seed", o->seed, "overrides the profile seed");
  cmd->add_flag("--deterministic", o->deterministic, "serialize reductions (the default build already does)");
  auto *out = cmd->add_option("--out-dir", o->out_dir, "output directory");
  if (needs_out_dir) out->required();
  cmd->add_option("--set", o->sets, "override a profile key, e.g. --set pretrain.peak_lr=1e-3");
  cmd->add_flag("-v,--verbose", o->verbose, "info-level logging");
}

KeyValueConfig LoadConfig(const CommonOptions &o) {
  KeyValueConfig kv = o.config.empty() ? KeyValueConfig::FromString("") : KeyValueConfig::FromFile(o.config);
  for (const auto &s : o.sets) kv.SetAssignment(s);
  if (o.seed >= 0) {
    if (!kv.Has("synth.seed")) kv.Set("synth.seed", std::to_string(kv.GetInt("seed", 0)));
    kv.Set("seed", std::to_string(o.seed));
  }
  return kv;
}

Profile LoadProfileFrom(const CommonOptions &o) { return LoadProfile(LoadConfig(o)); }

std::vector<const Utterance *> Select(const Corpus &c, const std::string &split) {
  std::vector<const Utterance *> out;
  if (split == "labelled") return c.Labelled();
  if (split == "unlabelled") {
    for (size_t i : c.unlabelled) out.push_back(&c.utterances[i]);
    return out;
  }
  if (split != "all") throw ConfigError("--split must be all, labelled or unlabelled, got '" + split + "'");
  for (const auto &u : c.utterances) out.push_back(&u);
  return out;
}

LabelMap ToLabelMap(const std::vector<FrameLabelSequence> &labels, int32_t *num_labels) {
  LabelMap m;
  *num_labels = 0;
  for (const auto &l : labels) {
    m[l.utt_id] = l.ids;
    for (int32_t id : l.ids) *num_labels = std::max(*num_labels, id + 1);
  }
  return m;
}

// A single .feat file or every .feat file under a directory, sorted by name.
std::vector<std::pair<std::string, FeatureSequence>> ReadFeatureSet(const fs::path &in) {
  std::vector<fs::path> paths;
  if (fs::is_directory(in)) {
    for (const auto &e : fs::directory_iterator(in))
      if (e.path().extension() == ".feat") paths.push_back(e.path());
    std::sort(paths.begin(), paths.end());
  } else {
    paths.push_back(in);
  }
  if (paths.empty()) throw InputError("no .feat files under " + in.string());
  std::vector<std::pair<std::string, FeatureSequence>> out;
  for (const auto &p : paths) out.emplace_back(p.stem().string(), ReadFeatures(p));
  return out;
}

void WriteJson(const fs::path &path, const json &j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path);
  if (!os) throw InputError("cannot write " + path.string());
  os << j.dump(2) << '\n';
}

fs::path SaveCheckpointTo(const std::string &out_dir, const EncoderCheckpoint &ckpt, const json &report) {
  fs::create_directories(out_dir);
  const fs::path path = fs::path(out_dir) / "checkpoint.mpck";
  SaveCheckpoint(path, ckpt);
  WriteJson(fs::path(out_dir) / "report.json", report);
  return path;
}

json TrainReport(const EncoderCheckpoint &ckpt, const TrainLog &log) {
  json r = {{"tag", ckpt.artifact_tag},
            {"training_step", ckpt.training_step},
            {"skipped_updates", log.skipped_updates},
            {"skipped_examples", log.skipped_examples}};
  if (!log.entries.empty()) r["final_loss"] = log.entries.back().loss;
  return r;
}

int32_t MaxToken(const std::vector<SequenceExample> &examples) {
  int32_t v = 1;
  for (const auto &ex : examples)
    for (int32_t t : ex.transcript) v = std::max(v, t + 1);
  return v;
}

// Prints "name value" lines and optionally writes the same report as JSON.
void EmitReport(const json &report, const std::string &json_path) {
  for (const auto &[k, v] : report.items()) std::printf("%s %s\n", k.c_str(), v.dump().c_str());
  if (!json_path.empty()) WriteJson(json_path, report);
}

}  // namespace

int main(int argc, char **argv) {
  CLI::App app{"Masked-prediction pre-training toolkit"};
  app.require_subcommand(1);
  CommonOptions common;

  // synth-data
  auto *synth = app.add_subcommand("synth-data", "generate a seeded synthetic train/dev corpus");
  std::string spec_file;
  synth->add_option("--spec", spec_file, "synth.* keys; read after --config");
  AddCommon(synth, &common, true);

  // extract-features
  auto *extract = app.add_subcommand("extract-features", "compute fbank or MFCC features for a manifest");
  std::string manifest, kind = "fbank";
  extract->add_option("--manifest", manifest, "input manifest")->required();
  extract->add_option("--kind", kind, "fbank or mfcc")->check(CLI::IsMember({"fbank", "mfcc"}));
  extract->add_option("--spec", spec_file, "accepted for symmetry with synth-data; unused");
  AddCommon(extract, &common, true);

  // kmeans
  auto *kmeans = app.add_subcommand("kmeans", "fit a KMeans tokenizer over feature files");
  std::string in_path, out_path;
  int32_t k = 100, max_iters = 100;
  double sample_fraction = 1.0;
  kmeans->add_option("--in", in_path, ".feat file or directory of them")->required();
  kmeans->add_option("--k", k, "number of clusters")->required();
  kmeans->add_option("--out", out_path, "centroid file")->required();
  kmeans->add_option("--sample-fraction", sample_fraction, "fraction of frames to fit on");
  kmeans->add_option("--max-iters", max_iters, "Lloyd iteration budget");
  AddCommon(kmeans, &common, false);

  // dump-labels
  auto *dump = app.add_subcommand("dump-labels", "assign frames to clusters and write a label file");
  std::string model_path, subsample = "first";
  int32_t stack = 4;
  dump->add_option("--model", model_path, "centroid file")->required();
  dump->add_option("--features", in_path, ".feat file or directory of them")->required();
  dump->add_option("--out", out_path, "label file")->required();
  dump->add_option("--stack", stack, "rate reduction for 100 Hz inputs");
  dump->add_option("--subsample", subsample, "first or majority")->check(CLI::IsMember({"first", "majority"}));
  AddCommon(dump, &common, false);

  // pretrain
  auto *pretrain = app.add_subcommand("pretrain", "masked-prediction training on cluster labels");
  std::string labels_path, init_path, validation, split = "all";
  pretrain->add_option("--manifest", manifest, "training manifest")->required();
  pretrain->add_option("--labels", labels_path, "label file at the encoder rate")->required();
  pretrain->add_option("--init", init_path, "continue from this checkpoint");
  pretrain->add_option("--validation", validation, "manifest for validation masked accuracy");
  pretrain->add_option("--split", split, "all, labelled or unlabelled");
  AddCommon(pretrain, &common, true);

  // bias / finetune
  std::string ckpt_path;
  auto *bias = app.add_subcommand("bias", "CTC finetune on the labelled split before re-clustering");
  bias->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint")->required();
  bias->add_option("--manifest", manifest, "manifest with a labelled split")->required();
  AddCommon(bias, &common, true);

  auto *finetune = app.add_subcommand("finetune", "CTC finetune; random init when no checkpoint is given");
  finetune->add_option("--checkpoint", ckpt_path, "pre-trained checkpoint");
  finetune->add_option("--manifest", manifest, "manifest with a labelled split")->required();
  AddCommon(finetune, &common, true);

  // extract-embeddings
  auto *embed = app.add_subcommand("extract-embeddings", "write one layer's outputs as .feat files");
  int32_t layer = 0;
  embed->add_option("--checkpoint", ckpt_path, "checkpoint")->required();
  embed->add_option("--manifest", manifest, "corpus to embed")->required();
  embed->add_option("--layer", layer, "1-based layer; 0 means the last");
  embed->add_option("--split", split, "all, labelled or unlabelled");
  AddCommon(embed, &common, true);

  // metrics
  auto *metrics = app.add_subcommand("metrics", "cluster/label purity and WER as a flat report");
  std::string hyp_path, json_out;
  int32_t num_clusters = 0;
  metrics->add_option("--manifest", manifest, "reference corpus (frame truth, transcripts)")->required();
  metrics->add_option("--labels", labels_path, "label file to score against frame truth");
  metrics->add_option("--k", num_clusters, "cluster count; default is max id + 1");
  metrics->add_option("--label-rate", stack, "label rate reduction relative to 100 Hz")->default_val(4);
  metrics->add_option("--hyp", hyp_path, "decode output to score against transcripts");
  metrics->add_option("--json", json_out, "also write the report as JSON");
  AddCommon(metrics, &common, false);

  // decode / evaluate
  auto *decode = app.add_subcommand("decode", "greedy CTC decode");
  decode->add_option("--checkpoint", ckpt_path, "CTC checkpoint")->required();
  decode->add_option("--manifest", manifest, "corpus to decode")->required();
  decode->add_option("--out", out_path, "hypothesis file (utt_id then token ids)")->required();
  AddCommon(decode, &common, false);

  auto *evaluate = app.add_subcommand("evaluate", "decode and report corpus WER");
  evaluate->add_option("--checkpoint", ckpt_path, "CTC checkpoint")->required();
  evaluate->add_option("--manifest", manifest, "test corpus")->required();
  evaluate->add_option("--json", json_out, "also write the report as JSON");
  AddCommon(evaluate, &common, false);

  // run-plan
  auto *run_plan = app.add_subcommand("run-plan", "run an iteration plan and write all artifacts");
  std::string plan_path, write_plan;
  std::vector<std::string> corpus_args;
  bool biased = false;
  run_plan->add_option("--plan", plan_path, "plan JSON; otherwise the standard two-iteration plan");
  run_plan->add_option("--corpus", corpus_args, "name=manifest for the standard plan (train, dev)");
  run_plan->add_flag("--biased", biased, "insert the bias stage before the second clustering");
  run_plan->add_option("--write-plan", write_plan, "write the plan JSON here and exit");
  AddCommon(run_plan, &common, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp &e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp &e) {
    return app.exit(e);
  } catch (const CLI::ParseError &e) {
    app.exit(e);
    return 2;
  }
  spdlog::set_level(common.verbose ? spdlog::level::info : spdlog::level::warn);

  try {
    if (synth->parsed()) {
      KeyValueConfig kv = LoadConfig(common);
      if (!spec_file.empty())
        for (const auto &[key, value] : KeyValueConfig::FromFile(spec_file).values()) kv.Set(key, value);
      const Profile p = LoadProfile(kv);
      const fs::path out(common.out_dir);
      WriteCorpus(out / "train", SynthCorpus(p.synth, p.train_utts, p.labelled_fraction, 0));
      WriteCorpus(out / "dev", SynthCorpus(p.synth, p.dev_utts, p.labelled_fraction, 1), "dev");
      std::printf("%s\n%s\n", (out / "train" / "manifest.jsonl").c_str(), (out / "dev" / "manifest.jsonl").c_str());
    } else if (extract->parsed()) {
      Corpus corpus = ReadCorpus(manifest);
      for (auto &u : corpus.utterances) {
        if (u.HasSamples())
          u.features = kind == "mfcc" ? ComputeMfccDeltas(u.samples, u.sample_rate) : UtteranceFeatures(u);
        else if (kind == "mfcc")
          throw InputError("utterance " + u.id + " has no audio; MFCC needs samples");
        u.samples.clear();
      }
      WriteCorpus(common.out_dir, corpus);
      std::printf("%s\n", (fs::path(common.out_dir) / "manifest.jsonl").c_str());
    } else if (kmeans->parsed()) {
      std::vector<MatrixF> frames;
      for (auto &[id, f] : ReadFeatureSet(in_path)) frames.push_back(std::move(f.frames));
      ClusteringOptions opts;
      opts.k = k;
      opts.seed = static_cast<uint64_t>(std::max<int64_t>(common.seed, 0));
      opts.sample_fraction = sample_fraction;
      opts.max_iters = max_iters;
      const ClusterModel model = FitClusters(frames, opts, fs::path(in_path).filename().string());
      WriteClusterModel(out_path, model);
    } else if (dump->parsed()) {
      const ClusterModel model = ReadClusterModel(model_path);
      const SubsampleRule rule = subsample == "majority" ? SubsampleRule::kMajority : SubsampleRule::kTakeFirst;
      std::vector<FrameLabelSequence> labels;
      for (const auto &[id, f] : ReadFeatureSet(in_path)) {
        FrameLabelSequence l = Assign(model, f.frames, f.rate, id);
        labels.push_back(f.rate == 100 && stack > 1 ? SubsampleLabels(l, stack, rule) : l);
      }
      WriteLabels(out_path, labels);
    } else if (pretrain->parsed()) {
      const Profile p = LoadProfileFrom(common);
      const Corpus corpus = ReadCorpus(manifest);
      int32_t num_labels = 0;
      const LabelMap labels = ToLabelMap(ReadLabels(labels_path), &num_labels);
      EncoderCheckpoint init;
      EncoderConfig enc = p.encoder;
      if (!init_path.empty()) {
        init = LoadCheckpoint(init_path);
        enc = init.config;
      } else {
        enc.vocab_out = num_labels;
      }
      auto train = PrepareExamples(Select(corpus, split), enc.stack_factor, &labels);
      TrainLog log;
      EncoderCheckpoint ckpt = Pretrain(train, enc, p.pretrain, init_path.empty() ? nullptr : &init, &log);
      ckpt.artifact_tag = ArtifactTag(fs::path(labels_path).stem().string(), p.pretrain.total_updates, num_labels);
      json report = TrainReport(ckpt, log);
      if (!validation.empty()) {
        const Corpus val = ReadCorpus(validation);
        auto val_ex = PrepareExamples(Select(val, "all"), enc.stack_factor, &labels);
        report["validation_masked_accuracy"] = ValidationMaskedAccuracy(ckpt, val_ex, p.pretrain);
      }
      std::printf("%s\n", SaveCheckpointTo(common.out_dir, ckpt, report).c_str());
    } else if (bias->parsed() || finetune->parsed()) {
      const Profile p = LoadProfileFrom(common);
      const Corpus corpus = ReadCorpus(manifest);
      EncoderCheckpoint init;
      TrainConfig cfg = p.finetune;
      if (!ckpt_path.empty()) {
        init = LoadCheckpoint(ckpt_path);
      } else {
        init.config = p.encoder;
        init.params = InitParameters(init.config, DeriveSeed(p.supervised.seed, 1));
        init.artifact_tag = "random";
        cfg = p.supervised;
      }
      auto train = PrepareExamples(corpus.Labelled(), init.config.stack_factor);
      if (train.empty()) throw InputError(manifest + ": no labelled utterances");
      const int32_t vocab = MaxToken(train);
      TrainLog log;
      EncoderCheckpoint ckpt =
          bias->parsed()
              ? BiasFinetune(init, train, p.bias, p.bias_head_only_updates, p.bias_joint_updates, vocab, &log)
              : FinetuneCtc(init, train, cfg, vocab, &log);
      ckpt.artifact_tag = init.artifact_tag + (bias->parsed() ? "+ft" : "+ctc");
      json report = TrainReport(ckpt, log);
      report["ctc_vocab"] = vocab;
      report["mean_ctc_loss"] = MeanCtcLoss(ckpt, train);
      std::printf("%s\n", SaveCheckpointTo(common.out_dir, ckpt, report).c_str());
    } else if (embed->parsed()) {
      const EncoderCheckpoint ckpt = LoadCheckpoint(ckpt_path);
      const Corpus corpus = ReadCorpus(manifest);
      const int32_t use_layer = layer > 0 ? layer : ckpt.config.n_layers;
      auto examples = PrepareExamples(Select(corpus, split), ckpt.config.stack_factor);
      auto emb = ExtractEmbeddings(ckpt, use_layer, examples);
      fs::create_directories(common.out_dir);
      for (size_t i = 0; i < examples.size(); ++i) {
        FeatureSequence f;
        f.frames = emb[i];
        f.rate = 100 / ckpt.config.stack_factor;
        WriteFeatures(fs::path(common.out_dir) / (examples[i].id + ".feat"), f);
      }
    } else if (metrics->parsed()) {
      if (labels_path.empty() && hyp_path.empty()) throw ConfigError("metrics needs --labels and/or --hyp");
      const Corpus corpus = ReadCorpus(manifest);
      json report = json::object();
      if (!labels_path.empty()) {
        const auto labels = ReadLabels(labels_path, 100 / stack);
        std::map<std::string, const Utterance *> by_id;
        for (const auto &u : corpus.utterances) by_id[u.id] = &u;
        std::vector<FrameLabelSequence> scored;
        std::vector<FrameTruth> truth;
        int32_t num_labels = 0, max_cluster = 0;
        for (const auto &l : labels) {
          auto it = by_id.find(l.utt_id);
          if (it == by_id.end()) throw InputError("label utterance '" + l.utt_id + "' is not in " + manifest);
          if (it->second->frame_truth.empty()) continue;
          scored.push_back(l);
          truth.push_back({l.utt_id, it->second->frame_truth});
          for (int32_t t : it->second->frame_truth) num_labels = std::max(num_labels, t + 1);
          for (int32_t c : l.ids) max_cluster = std::max(max_cluster, c + 1);
        }
        if (scored.empty()) throw InputError(manifest + ": no frame truth for the labelled utterances");
        const JointCounts jc =
            ComputeJointCounts(scored, truth, num_clusters > 0 ? num_clusters : max_cluster, num_labels);
        report["cluster_purity"] = ClusterPurity(jc);
        report["label_purity"] = LabelPurity(jc);
        report["frames"] = jc.total;
      }
      if (!hyp_path.empty()) {
        std::map<std::string, TokenSequence> refs;
        for (const auto &u : corpus.utterances) refs[u.id] = u.transcript;
        std::vector<UtteranceResult> results;
        for (const auto &h : ReadLabels(hyp_path)) {
          auto it = refs.find(h.utt_id);
          if (it == refs.end()) throw InputError("hypothesis '" + h.utt_id + "' is not in " + manifest);
          results.push_back({h.utt_id, h.ids, it->second, EditDistance(h.ids, it->second)});
        }
        const EvaluationReport r = AggregateWer(std::move(results));
        report["wer"] = r.wer;
        report["total_edits"] = r.total_edits;
        report["total_ref"] = r.total_ref;
      }
      EmitReport(report, json_out);
    } else if (decode->parsed() || evaluate->parsed()) {
      const EncoderCheckpoint ckpt = LoadCheckpoint(ckpt_path);
      const Corpus corpus = ReadCorpus(manifest);
      const EvaluationReport r = Evaluate(ckpt, PrepareExamples(Select(corpus, "all"), ckpt.config.stack_factor));
      if (decode->parsed()) {
        std::vector<FrameLabelSequence> hyps;
        for (const auto &u : r.utterances) hyps.push_back({u.id, u.hyp, 25});
        WriteLabels(out_path, hyps);
      } else {
        EmitReport({{"wer", r.wer}, {"total_edits", r.total_edits}, {"total_ref", r.total_ref}}, json_out);
      }
    } else if (run_plan->parsed()) {
      IterationPlan plan;
      if (!plan_path.empty()) {
        plan = LoadPlan(plan_path);
      } else {
        const Profile p = LoadProfileFrom(common);
        plan = biased ? BiasedPlan(p, "train", "dev") : UnbiasedPlan(p, "train", "dev");
        for (const auto &arg : corpus_args) {
          const size_t eq = arg.find('=');
          if (eq == std::string::npos) throw ConfigError("--corpus expects name=manifest, got '" + arg + "'");
          plan.corpora[arg.substr(0, eq)] = arg.substr(eq + 1);
        }
      }
      if (!write_plan.empty()) {
        WriteJson(write_plan, plan);
        return 0;
      }
      if (common.out_dir.empty()) throw ConfigError("run-plan needs --out-dir");
      const PlanResult result = RunIteration(plan, common.out_dir);
      for (const auto &[name, a] : result.artifacts)
        if (!a.report.empty()) {
          json summary = a.report;
          summary.erase("utterances");
          std::printf("%s %s\n", name.c_str(), summary.dump().c_str());
        }
    }
  } catch (const ConfigError &e) {
    spdlog::error("configuration error: {}", e.what());
    return 2;
  } catch (const InputError &e) {
    spdlog::error("input error: {}", e.what());
    return 3;
  } catch (const PlanError &e) {
    spdlog::error("plan error: {}", e.what());
    return 3;
  } catch (const NumericError &e) {
    spdlog::error("numeric failure: {}", e.what());
    return 4;
  }
  return 0;
}
