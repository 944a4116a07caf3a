// mppt/encoder.h

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

#ifndef MPPT_ENCODER_H_
#define MPPT_ENCODER_H_

#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "mppt/common.h"
#include "mppt/masking.h"

namespace mppt {

// Streaming encoder with chunked self-attention.  Frame t attends to every
// frame up to the end of its chunk of `centre_frames` plus `right_frames` of
// look-ahead, and to all past frames.
struct EncoderConfig {
  int32_t n_layers = 2;
  int32_t embed_dim = 32;
  int32_t ffn_dim = 128;
  int32_t n_heads = 4;
  int32_t centre_frames = 16;
  int32_t right_frames = 1;
  // Depthwise causal convolution at the pre-stacking rate; 0 disables it.
  int32_t pos_conv_kernel = 31;
  int32_t stack_factor = 4;
  int32_t input_dim = 32;  // stacked feature dim
  int32_t vocab_out = 32;

  void Validate() const;
  bool operator==(const EncoderConfig &) const = default;
};

void to_json(nlohmann::json &j, const EncoderConfig &c);
void from_json(const nlohmann::json &j, EncoderConfig &c);

// Named parameter tensors.  std::map keeps a stable iteration order, which
// the optimizer and the checkpoint format rely on.
template <typename Real>
using ParameterSet = std::map<std::string, Matrix<Real>>;

// (name, rows, cols) for every parameter implied by a config.
std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> ParameterShapes(
    const EncoderConfig &config);

int64_t ParameterCount(const EncoderConfig &config);

ParameterSet<float> InitParameters(const EncoderConfig &config, uint64_t seed);

// Re-initialises the prediction head for a new output vocabulary.
void ReplaceHead(EncoderConfig *config, ParameterSet<float> *params, int32_t vocab_out,
                 uint64_t seed);

bool IsHeadParameter(const std::string &name);

template <typename Real>
ParameterSet<Real> ZerosLike(const ParameterSet<Real> &params);

template <typename To, typename From>
ParameterSet<To> CastParameters(const ParameterSet<From> &params) {
  ParameterSet<To> out;
  for (const auto &[name, value] : params) out[name] = value.template cast<To>();
  return out;
}

struct EncoderCheckpoint {
  EncoderConfig config;
  ParameterSet<float> params;
  std::string artifact_tag;  // X^Y_Z style model id, e.g. "M^2k_24"
  int64_t training_step = 0;
  std::string head = kMaskedPredictionHead;  // which output layer is attached

  static constexpr const char *kMaskedPredictionHead = "masked_prediction";
  static constexpr const char *kCtcHead = "ctc";
};

// Self-describing archive: "MPCK1", int32 LE header length, JSON header
// (config, tag, step, tensor names and shapes), then float32 LE tensors in
// header order.
void SaveCheckpoint(const std::filesystem::path &path, const EncoderCheckpoint &ckpt);
EncoderCheckpoint LoadCheckpoint(const std::filesystem::path &path);

struct ReceptiveField {
  int64_t min_input_frame = 0;
  int64_t max_input_frame = 0;
};

// Input frames that can influence output frame t.  Each layer extends the
// reach of a frame j to chunk_end(j) + right_frames, so look-ahead compounds
// across layers whenever right_frames > 0.  The causal positional
// convolution adds no look-ahead.
ReceptiveField ComputeReceptiveField(const EncoderConfig &config, int64_t t);

// Algorithmic look-ahead of output frame t in milliseconds at the encoder
// frame rate.
double LatencyMs(const EncoderConfig &config, int64_t t, int32_t frame_rate = 25);

template <typename Real>
struct EncoderOutput {
  Matrix<Real> logits;                         // T x vocab_out (empty if no head)
  std::vector<Matrix<Real>> layer_embeddings;  // per layer, T x embed_dim
};

template <typename Real>
struct LayerCache;

template <typename Real>
struct ForwardCache {
  MaskSpec mask;
  bool has_mask = false;
  Matrix<Real> conv_input;  // masked input (T x input_dim)
  Matrix<Real> proj_input;  // after positional convolution
  std::vector<LayerCache<Real>> layers;
  ForwardCache();
  ~ForwardCache();
  ForwardCache(ForwardCache &&) noexcept;
  ForwardCache &operator=(ForwardCache &&) noexcept;
};

// Stateless view over a config and a parameter set.
template <typename Real>
class Encoder {
 public:
  Encoder(const EncoderConfig &config, const ParameterSet<Real> &params);

  // Runs the first `num_layers` layers (all when negative); the head runs
  // only when all layers run and with_head is set.
  EncoderOutput<Real> Forward(const Matrix<Real> &input, const MaskSpec *mask,
                              ForwardCache<Real> *cache = nullptr, int32_t num_layers = -1,
                              bool with_head = true) const;

  // Accumulates d loss / d params into *grads given d loss / d logits.
  void Backward(const ForwardCache<Real> &cache, const Matrix<Real> &grad_logits,
                ParameterSet<Real> *grads) const;

  // Gradient with respect to the (unmasked) input features, for tests.
  Matrix<Real> BackwardInput(const ForwardCache<Real> &cache, const Matrix<Real> &grad_logits,
                             ParameterSet<Real> *grads) const;

  const EncoderConfig &config() const { return config_; }

 private:
  const Matrix<Real> &P(const std::string &name) const;

  const EncoderConfig &config_;
  const ParameterSet<Real> &params_;
};

}  // namespace mppt

#endif  // MPPT_ENCODER_H_
