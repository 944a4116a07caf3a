// src/encoder.cc

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

#include "mppt/encoder.h"

#include <cmath>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>

#include <nlohmann/json.hpp>

#include "mppt/io.h"

namespace mppt {

using nlohmann::json;

void EncoderConfig::Validate() const {
  auto fail = [](const std::string &m) { throw ConfigError("encoder config: " + m); };
  if (n_layers < 1) fail("n_layers must be >= 1");
  if (embed_dim < 1 || n_heads < 1 || embed_dim % n_heads != 0)
    fail("embed_dim must be a positive multiple of n_heads");
  if (ffn_dim < 1) fail("ffn_dim must be >= 1");
  if (centre_frames < 1) fail("centre_frames must be >= 1");
  if (right_frames < 0) fail("right_frames must be >= 0");
  if (pos_conv_kernel < 0) fail("pos_conv_kernel must be >= 0");
  if (stack_factor < 1 || input_dim < 1 || input_dim % stack_factor != 0)
    fail("input_dim must be a positive multiple of stack_factor");
  if (vocab_out < 1) fail("vocab_out must be >= 1");
}

void to_json(json &j, const EncoderConfig &c) {
  j = json{{"n_layers", c.n_layers},         {"embed_dim", c.embed_dim},
           {"ffn_dim", c.ffn_dim},           {"n_heads", c.n_heads},
           {"centre_frames", c.centre_frames}, {"right_frames", c.right_frames},
           {"pos_conv_kernel", c.pos_conv_kernel}, {"stack_factor", c.stack_factor},
           {"input_dim", c.input_dim},       {"vocab_out", c.vocab_out}};
}

void from_json(const json &j, EncoderConfig &c) {
  j.at("n_layers").get_to(c.n_layers);
  j.at("embed_dim").get_to(c.embed_dim);
  j.at("ffn_dim").get_to(c.ffn_dim);
  j.at("n_heads").get_to(c.n_heads);
  j.at("centre_frames").get_to(c.centre_frames);
  j.at("right_frames").get_to(c.right_frames);
  j.at("pos_conv_kernel").get_to(c.pos_conv_kernel);
  j.at("stack_factor").get_to(c.stack_factor);
  j.at("input_dim").get_to(c.input_dim);
  j.at("vocab_out").get_to(c.vocab_out);
}

namespace {

std::string LayerName(int32_t l, const char *suffix) {
  return "layers." + std::to_string(l) + "." + suffix;
}

int64_t ChunkEnd(const EncoderConfig &c, int64_t t) {
  return (t / c.centre_frames + 1) * c.centre_frames - 1;
}

template <typename Real>
struct LayerNormCache {
  Matrix<Real> xhat;
  Eigen::Matrix<Real, Eigen::Dynamic, 1> inv_std;
};

constexpr double kNormEpsilon = 1e-5;

template <typename Real>
Matrix<Real> LayerNormForward(const Matrix<Real> &x, const Matrix<Real> &gain,
                              const Matrix<Real> &bias, LayerNormCache<Real> *cache) {
  const int64_t n = x.rows(), d = x.cols();
  cache->xhat.resize(n, d);
  cache->inv_std.resize(n);
  for (int64_t t = 0; t < n; ++t) {
    Real mean = x.row(t).mean();
    Real var = (x.row(t).array() - mean).square().mean();
    Real inv_std = Real(1) / std::sqrt(var + Real(kNormEpsilon));
    cache->inv_std(t) = inv_std;
    cache->xhat.row(t) = (x.row(t).array() - mean) * inv_std;
  }
  Matrix<Real> y = cache->xhat.array().rowwise() * gain.row(0).array();
  y.rowwise() += bias.row(0);
  return y;
}

template <typename Real>
Matrix<Real> LayerNormBackward(const Matrix<Real> &dy, const Matrix<Real> &gain,
                               const LayerNormCache<Real> &cache, Matrix<Real> *dgain,
                               Matrix<Real> *dbias) {
  dgain->row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  dbias->row(0) += dy.colwise().sum();
  Matrix<Real> dxhat = dy.array().rowwise() * gain.row(0).array();
  const int64_t n = dy.rows();
  Matrix<Real> dx(n, dy.cols());
  for (int64_t t = 0; t < n; ++t) {
    Real mean_d = dxhat.row(t).mean();
    Real mean_dx = (dxhat.row(t).array() * cache.xhat.row(t).array()).mean();
    dx.row(t) = cache.inv_std(t) *
                (dxhat.row(t).array() - mean_d - cache.xhat.row(t).array() * mean_dx);
  }
  return dx;
}

template <typename Real>
Real Gelu(Real z) {
  const Real c = Real(std::sqrt(2.0 / std::numbers::pi));
  return Real(0.5) * z * (Real(1) + std::tanh(c * (z + Real(0.044715) * z * z * z)));
}

template <typename Real>
Real GeluGrad(Real z) {
  const Real c = Real(std::sqrt(2.0 / std::numbers::pi));
  Real th = std::tanh(c * (z + Real(0.044715) * z * z * z));
  return Real(0.5) * (Real(1) + th) +
         Real(0.5) * z * (Real(1) - th * th) * c * (Real(1) + Real(3 * 0.044715) * z * z);
}

template <typename Real>
Matrix<Real> Affine(const Matrix<Real> &x, const Matrix<Real> &w, const Matrix<Real> &b) {
  Matrix<Real> y = x * w;
  y.rowwise() += b.row(0);
  return y;
}

// y = x w + b; accumulates dw, db and returns dx.
template <typename Real>
Matrix<Real> AffineBackward(const Matrix<Real> &dy, const Matrix<Real> &x, const Matrix<Real> &w,
                            Matrix<Real> *dw, Matrix<Real> *db) {
  dw->noalias() += x.transpose() * dy;
  db->row(0) += dy.colwise().sum();
  return dy * w.transpose();
}

}  // namespace

template <typename Real>
struct LayerCache {
  Matrix<Real> h_in;
  LayerNormCache<Real> ln_attn;
  Matrix<Real> a, q, k, v;
  std::vector<Matrix<Real>> probs;  // per head, T x T
  Matrix<Real> context;             // concatenated head outputs
  Matrix<Real> h_mid;
  LayerNormCache<Real> ln_ffn;
  Matrix<Real> b, z1, g;
  LayerNormCache<Real> ln_out;
  Matrix<Real> out;
};

template <typename Real>
ForwardCache<Real>::ForwardCache() = default;
template <typename Real>
ForwardCache<Real>::~ForwardCache() = default;
template <typename Real>
ForwardCache<Real>::ForwardCache(ForwardCache &&) noexcept = default;
template <typename Real>
ForwardCache<Real> &ForwardCache<Real>::operator=(ForwardCache &&) noexcept = default;

std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> ParameterShapes(
    const EncoderConfig &c) {
  c.Validate();
  std::vector<std::pair<std::string, std::pair<int64_t, int64_t>>> shapes;
  auto add = [&shapes](std::string name, int64_t r, int64_t cols) {
    shapes.emplace_back(std::move(name), std::make_pair(r, cols));
  };
  const int64_t e = c.embed_dim;
  add("mask_vector", 1, c.input_dim);
  if (c.pos_conv_kernel > 0) {
    add("pos_conv.weight", c.pos_conv_kernel, c.input_dim / c.stack_factor);
    add("pos_conv.bias", 1, c.input_dim / c.stack_factor);
  }
  add("input_proj.weight", c.input_dim, e);
  add("input_proj.bias", 1, e);
  for (int32_t l = 0; l < c.n_layers; ++l) {
    add(LayerName(l, "attn_norm.gain"), 1, e);
    add(LayerName(l, "attn_norm.bias"), 1, e);
    for (const char *w : {"attn.wq", "attn.wk", "attn.wv", "attn.wo"}) {
      add(LayerName(l, w), e, e);
      add(LayerName(l, (std::string(w) + "_bias").c_str()), 1, e);
    }
    add(LayerName(l, "ffn_norm.gain"), 1, e);
    add(LayerName(l, "ffn_norm.bias"), 1, e);
    add(LayerName(l, "ffn.w1"), e, c.ffn_dim);
    add(LayerName(l, "ffn.b1"), 1, c.ffn_dim);
    add(LayerName(l, "ffn.w2"), c.ffn_dim, e);
    add(LayerName(l, "ffn.b2"), 1, e);
    add(LayerName(l, "out_norm.gain"), 1, e);
    add(LayerName(l, "out_norm.bias"), 1, e);
  }
  add("head.weight", e, c.vocab_out);
  add("head.bias", 1, c.vocab_out);
  return shapes;
}

int64_t ParameterCount(const EncoderConfig &config) {
  int64_t n = 0;
  for (const auto &[name, shape] : ParameterShapes(config)) n += shape.first * shape.second;
  return n;
}

bool IsHeadParameter(const std::string &name) { return name.rfind("head.", 0) == 0; }

namespace {

void InitTensor(const std::string &name, MatrixF *m, std::mt19937_64 &rng) {
  auto ends_with = [&name](const char *s) {
    std::string suffix(s);
    return name.size() >= suffix.size() &&
           name.compare(name.size() - suffix.size(), suffix.size(), suffix) == 0;
  };
  if (ends_with(".gain")) {
    m->setOnes();
  } else if (ends_with("bias") || ends_with(".b1") || ends_with(".b2")) {
    m->setZero();
  } else {
    // Scaled normal: std 1/sqrt(fan_in); the mask vector and the convolution
    // taps get a small scale.
    double scale = 1.0 / std::sqrt(static_cast<double>(m->rows()));
    if (name == "mask_vector") scale = 0.1;
    if (name == "pos_conv.weight") scale = 0.1 / std::sqrt(static_cast<double>(m->rows()));
    std::normal_distribution<double> normal(0.0, 1.0);
    for (int64_t i = 0; i < m->size(); ++i) m->data()[i] = static_cast<float>(scale * normal(rng));
  }
}

}  // namespace

ParameterSet<float> InitParameters(const EncoderConfig &config, uint64_t seed) {
  ParameterSet<float> params;
  uint64_t stream = 0;
  for (const auto &[name, shape] : ParameterShapes(config)) {
    MatrixF m(shape.first, shape.second);
    std::mt19937_64 rng(DeriveSeed(seed, stream++));
    InitTensor(name, &m, rng);
    params[name] = std::move(m);
  }
  return params;
}

void ReplaceHead(EncoderConfig *config, ParameterSet<float> *params, int32_t vocab_out,
                 uint64_t seed) {
  config->vocab_out = vocab_out;
  MatrixF w(config->embed_dim, vocab_out), b(1, vocab_out);
  std::mt19937_64 rng(DeriveSeed(seed, 0x4EAD));
  InitTensor("head.weight", &w, rng);
  InitTensor("head.bias", &b, rng);
  (*params)["head.weight"] = std::move(w);
  (*params)["head.bias"] = std::move(b);
}

template <typename Real>
ParameterSet<Real> ZerosLike(const ParameterSet<Real> &params) {
  ParameterSet<Real> out;
  for (const auto &[name, value] : params) out[name] = Matrix<Real>::Zero(value.rows(), value.cols());
  return out;
}

void SaveCheckpoint(const std::filesystem::path &path, const EncoderCheckpoint &ckpt) {
  json header;
  header["config"] = ckpt.config;
  header["artifact_tag"] = ckpt.artifact_tag;
  header["training_step"] = ckpt.training_step;
  header["head"] = ckpt.head;
  json tensors = json::array();
  for (const auto &[name, value] : ckpt.params)
    tensors.push_back({{"name", name}, {"rows", value.rows()}, {"cols", value.cols()}});
  header["tensors"] = tensors;
  const std::string text = header.dump();
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw InputError("cannot open " + path.string() + " for writing");
  os.write("MPCK1", 5);
  WriteInt32LE(os, static_cast<int32_t>(text.size()));
  os.write(text.data(), static_cast<std::streamsize>(text.size()));
  for (const auto &[name, value] : ckpt.params)
    for (int64_t i = 0; i < value.size(); ++i) WriteFloat32LE(os, value.data()[i]);
}

EncoderCheckpoint LoadCheckpoint(const std::filesystem::path &path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw InputError("cannot open checkpoint " + path.string());
  ExpectMagic(is, "MPCK1", "checkpoint");
  const int32_t length = ReadInt32LE(is);
  std::string text(length, '\0');
  if (!is.read(text.data(), length)) throw InputError("checkpoint: truncated header");
  EncoderCheckpoint ckpt;
  try {
    json header = json::parse(text);
    ckpt.config = header.at("config").get<EncoderConfig>();
    ckpt.artifact_tag = header.value("artifact_tag", "");
    ckpt.training_step = header.value("training_step", int64_t{0});
    ckpt.head = header.value("head", std::string(EncoderCheckpoint::kMaskedPredictionHead));
    for (const auto &t : header.at("tensors")) {
      MatrixF m(t.at("rows").get<int64_t>(), t.at("cols").get<int64_t>());
      for (int64_t i = 0; i < m.size(); ++i) m.data()[i] = ReadFloat32LE(is);
      ckpt.params[t.at("name").get<std::string>()] = std::move(m);
    }
  } catch (const json::exception &e) {
    throw InputError("checkpoint " + path.string() + ": " + e.what());
  }
  for (const auto &[name, shape] : ParameterShapes(ckpt.config)) {
    auto it = ckpt.params.find(name);
    if (it == ckpt.params.end() || it->second.rows() != shape.first ||
        it->second.cols() != shape.second)
      throw InputError("checkpoint " + path.string() + ": tensor " + name +
                       " missing or mis-shaped for its config");
  }
  return ckpt;
}

ReceptiveField ComputeReceptiveField(const EncoderConfig &config, int64_t t) {
  ReceptiveField rf;
  rf.min_input_frame = 0;
  int64_t reach = t;
  for (int32_t l = 0; l < config.n_layers; ++l) reach = ChunkEnd(config, reach) + config.right_frames;
  rf.max_input_frame = reach;
  return rf;
}

double LatencyMs(const EncoderConfig &config, int64_t t, int32_t frame_rate) {
  return static_cast<double>(ComputeReceptiveField(config, t).max_input_frame - t) * 1000.0 /
         frame_rate;
}

template <typename Real>
Encoder<Real>::Encoder(const EncoderConfig &config, const ParameterSet<Real> &params)
    : config_(config), params_(params) {
  config_.Validate();
}

template <typename Real>
const Matrix<Real> &Encoder<Real>::P(const std::string &name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw InputError("encoder: missing parameter " + name);
  return it->second;
}

template <typename Real>
EncoderOutput<Real> Encoder<Real>::Forward(const Matrix<Real> &input, const MaskSpec *mask,
                                           ForwardCache<Real> *cache, int32_t num_layers,
                                           bool with_head) const {
  const EncoderConfig &c = config_;
  if (input.cols() != c.input_dim)
    throw InputError("encoder: input dim " + std::to_string(input.cols()) + " != config input_dim " +
                     std::to_string(c.input_dim));
  if (input.rows() < 1) throw InputError("encoder: empty input");
  if (num_layers < 0) num_layers = c.n_layers;
  const int64_t n = input.rows(), e = c.embed_dim, heads = c.n_heads, dh = e / heads;
  ForwardCache<Real> local;
  ForwardCache<Real> &fc = cache ? *cache : local;

  fc.has_mask = mask != nullptr;
  if (mask) {
    fc.mask = *mask;
    RowVector<Real> mv = P("mask_vector").row(0);
    fc.conv_input = ApplyMask<Real>(input, *mask, mv);
  } else {
    fc.conv_input = input;
  }

  fc.proj_input = fc.conv_input;
  if (c.pos_conv_kernel > 0) {
    // Depthwise causal convolution over the un-stacked sequence, residual.
    const int64_t ch = c.input_dim / c.stack_factor, len = n * c.stack_factor;
    const int64_t kernel = c.pos_conv_kernel;
    Eigen::Map<const Matrix<Real>> u(fc.conv_input.data(), len, ch);
    Eigen::Map<Matrix<Real>> y(fc.proj_input.data(), len, ch);
    const Matrix<Real> &w = P("pos_conv.weight");
    const Matrix<Real> &b = P("pos_conv.bias");
    for (int64_t i = 0; i < len; ++i) {
      RowVector<Real> acc = b.row(0);
      for (int64_t k = 0; k < kernel; ++k) {
        const int64_t src = i - (kernel - 1) + k;
        if (src >= 0) acc.array() += w.row(k).array() * u.row(src).array();
      }
      y.row(i) += acc;
    }
  }

  Matrix<Real> h = Affine(fc.proj_input, P("input_proj.weight"), P("input_proj.bias"));

  std::vector<int64_t> limit(n);
  for (int64_t t = 0; t < n; ++t) limit[t] = std::min<int64_t>(n - 1, ChunkEnd(c, t) + c.right_frames);

  EncoderOutput<Real> out;
  fc.layers.assign(num_layers, LayerCache<Real>{});
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));
  for (int32_t l = 0; l < num_layers; ++l) {
    LayerCache<Real> &lc = fc.layers[l];
    lc.h_in = h;
    lc.a = LayerNormForward(h, P(LayerName(l, "attn_norm.gain")), P(LayerName(l, "attn_norm.bias")),
                            &lc.ln_attn);
    lc.q = Affine(lc.a, P(LayerName(l, "attn.wq")), P(LayerName(l, "attn.wq_bias")));
    lc.k = Affine(lc.a, P(LayerName(l, "attn.wk")), P(LayerName(l, "attn.wk_bias")));
    lc.v = Affine(lc.a, P(LayerName(l, "attn.wv")), P(LayerName(l, "attn.wv_bias")));
    lc.context.resize(n, e);
    lc.probs.resize(heads);
    for (int64_t hd = 0; hd < heads; ++hd) {
      auto qh = lc.q.middleCols(hd * dh, dh);
      auto kh = lc.k.middleCols(hd * dh, dh);
      auto vh = lc.v.middleCols(hd * dh, dh);
      Matrix<Real> scores = (qh * kh.transpose()) * scale;
      Matrix<Real> &prob = lc.probs[hd];
      prob = Matrix<Real>::Zero(n, n);
      for (int64_t t = 0; t < n; ++t) {
        const int64_t cols = limit[t] + 1;
        auto row = scores.row(t).head(cols);
        Real max = row.maxCoeff();
        prob.row(t).head(cols) = (row.array() - max).exp();
        prob.row(t).head(cols) /= prob.row(t).head(cols).sum();
      }
      lc.context.middleCols(hd * dh, dh) = prob * vh;
    }
    lc.h_mid = h + Affine(lc.context, P(LayerName(l, "attn.wo")), P(LayerName(l, "attn.wo_bias")));
    lc.b = LayerNormForward(lc.h_mid, P(LayerName(l, "ffn_norm.gain")), P(LayerName(l, "ffn_norm.bias")),
                            &lc.ln_ffn);
    lc.z1 = Affine(lc.b, P(LayerName(l, "ffn.w1")), P(LayerName(l, "ffn.b1")));
    lc.g = lc.z1.unaryExpr([](Real z) { return Gelu(z); });
    Matrix<Real> h_post = lc.h_mid + Affine(lc.g, P(LayerName(l, "ffn.w2")), P(LayerName(l, "ffn.b2")));
    lc.out = LayerNormForward(h_post, P(LayerName(l, "out_norm.gain")), P(LayerName(l, "out_norm.bias")),
                              &lc.ln_out);
    h = lc.out;
    out.layer_embeddings.push_back(lc.out);
  }
  if (with_head && num_layers == c.n_layers) out.logits = Affine(h, P("head.weight"), P("head.bias"));
  return out;
}

template <typename Real>
Matrix<Real> Encoder<Real>::BackwardInput(const ForwardCache<Real> &fc,
                                          const Matrix<Real> &grad_logits,
                                          ParameterSet<Real> *grads) const {
  const EncoderConfig &c = config_;
  if (static_cast<int32_t>(fc.layers.size()) != c.n_layers)
    throw InputError("encoder backward: cache does not cover all layers");
  const int64_t n = grad_logits.rows(), e = c.embed_dim, heads = c.n_heads, dh = e / heads;
  auto G = [grads](const std::string &name) -> Matrix<Real> & { return grads->at(name); };
  const Real scale = Real(1) / std::sqrt(static_cast<Real>(dh));

  Matrix<Real> dh_out = AffineBackward(grad_logits, fc.layers.back().out, P("head.weight"),
                                       &G("head.weight"), &G("head.bias"));
  for (int32_t l = c.n_layers - 1; l >= 0; --l) {
    const LayerCache<Real> &lc = fc.layers[l];
    Matrix<Real> d_post = LayerNormBackward(dh_out, P(LayerName(l, "out_norm.gain")), lc.ln_out,
                                            &G(LayerName(l, "out_norm.gain")),
                                            &G(LayerName(l, "out_norm.bias")));
    // FFN branch.
    Matrix<Real> dg = AffineBackward(d_post, lc.g, P(LayerName(l, "ffn.w2")), &G(LayerName(l, "ffn.w2")),
                                     &G(LayerName(l, "ffn.b2")));
    Matrix<Real> dz1 = dg.array() * lc.z1.unaryExpr([](Real z) { return GeluGrad(z); }).array();
    Matrix<Real> db = AffineBackward(dz1, lc.b, P(LayerName(l, "ffn.w1")), &G(LayerName(l, "ffn.w1")),
                                     &G(LayerName(l, "ffn.b1")));
    Matrix<Real> d_mid = d_post + LayerNormBackward(db, P(LayerName(l, "ffn_norm.gain")), lc.ln_ffn,
                                                    &G(LayerName(l, "ffn_norm.gain")),
                                                    &G(LayerName(l, "ffn_norm.bias")));
    // Attention branch.
    Matrix<Real> dcontext = AffineBackward(d_mid, lc.context, P(LayerName(l, "attn.wo")),
                                           &G(LayerName(l, "attn.wo")), &G(LayerName(l, "attn.wo_bias")));
    Matrix<Real> dq(n, e), dk(n, e), dv(n, e);
    for (int64_t hd = 0; hd < heads; ++hd) {
      auto qh = lc.q.middleCols(hd * dh, dh);
      auto kh = lc.k.middleCols(hd * dh, dh);
      auto vh = lc.v.middleCols(hd * dh, dh);
      const Matrix<Real> &prob = lc.probs[hd];
      Matrix<Real> dctx = dcontext.middleCols(hd * dh, dh);
      Matrix<Real> dprob = dctx * vh.transpose();
      dv.middleCols(hd * dh, dh) = prob.transpose() * dctx;
      Eigen::Matrix<Real, Eigen::Dynamic, 1> rowdot = (dprob.array() * prob.array()).rowwise().sum();
      Matrix<Real> dscores = prob.array() * (dprob.colwise() - rowdot).array();
      dq.middleCols(hd * dh, dh) = (dscores * kh) * scale;
      dk.middleCols(hd * dh, dh) = (dscores.transpose() * qh) * scale;
    }
    Matrix<Real> da = AffineBackward(dq, lc.a, P(LayerName(l, "attn.wq")), &G(LayerName(l, "attn.wq")),
                                     &G(LayerName(l, "attn.wq_bias")));
    da += AffineBackward(dk, lc.a, P(LayerName(l, "attn.wk")), &G(LayerName(l, "attn.wk")),
                         &G(LayerName(l, "attn.wk_bias")));
    da += AffineBackward(dv, lc.a, P(LayerName(l, "attn.wv")), &G(LayerName(l, "attn.wv")),
                         &G(LayerName(l, "attn.wv_bias")));
    dh_out = d_mid + LayerNormBackward(da, P(LayerName(l, "attn_norm.gain")), lc.ln_attn,
                                       &G(LayerName(l, "attn_norm.gain")),
                                       &G(LayerName(l, "attn_norm.bias")));
  }

  Matrix<Real> d_proj = AffineBackward(dh_out, fc.proj_input, P("input_proj.weight"),
                                       &G("input_proj.weight"), &G("input_proj.bias"));
  Matrix<Real> d_conv_in = d_proj;
  if (c.pos_conv_kernel > 0) {
    const int64_t ch = c.input_dim / c.stack_factor, len = n * c.stack_factor;
    const int64_t kernel = c.pos_conv_kernel;
    Eigen::Map<const Matrix<Real>> u(fc.conv_input.data(), len, ch);
    Eigen::Map<const Matrix<Real>> dy(d_proj.data(), len, ch);
    Eigen::Map<Matrix<Real>> du(d_conv_in.data(), len, ch);
    const Matrix<Real> &w = P("pos_conv.weight");
    Matrix<Real> &dw = G("pos_conv.weight");
    G("pos_conv.bias").row(0) += dy.colwise().sum();
    for (int64_t i = 0; i < len; ++i) {
      for (int64_t k = 0; k < kernel; ++k) {
        const int64_t src = i - (kernel - 1) + k;
        if (src < 0) continue;
        dw.row(k).array() += dy.row(i).array() * u.row(src).array();
        du.row(src).array() += dy.row(i).array() * w.row(k).array();
      }
    }
  }
  Matrix<Real> d_input = d_conv_in;
  if (fc.has_mask) {
    Matrix<Real> &dmask = G("mask_vector");
    for (int64_t t = 0; t < n; ++t)
      if (fc.mask.masked[t]) {
        dmask.row(0) += d_conv_in.row(t);
        d_input.row(t).setZero();
      }
  }
  return d_input;
}

template <typename Real>
void Encoder<Real>::Backward(const ForwardCache<Real> &cache, const Matrix<Real> &grad_logits,
                             ParameterSet<Real> *grads) const {
  BackwardInput(cache, grad_logits, grads);
}

template class Encoder<float>;
template class Encoder<double>;
template struct ForwardCache<float>;
template struct ForwardCache<double>;
template ParameterSet<float> ZerosLike(const ParameterSet<float> &);
template ParameterSet<double> ZerosLike(const ParameterSet<double> &);

}  // namespace mppt
