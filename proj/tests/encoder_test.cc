// tests/encoder_test.cc

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
#include <filesystem>
#include <fstream>
#include <random>

#include <gtest/gtest.h>

#include "mppt/losses.h"

namespace mppt {
namespace {

EncoderConfig TinyConfig() {
  EncoderConfig c;
  c.n_layers = 2;
  c.embed_dim = 16;
  c.ffn_dim = 24;
  c.n_heads = 2;
  c.centre_frames = 3;
  c.right_frames = 1;
  c.pos_conv_kernel = 5;
  c.stack_factor = 4;
  c.input_dim = 8;
  c.vocab_out = 5;
  return c;
}

TEST(EncoderTest, Shapes) {
  EncoderConfig c = TinyConfig();
  auto params = InitParameters(c, 1);
  Encoder<float> enc(c, params);
  auto out = enc.Forward(MatrixF::Random(12, c.input_dim), nullptr);
  EXPECT_EQ(out.logits.rows(), 12);
  EXPECT_EQ(out.logits.cols(), c.vocab_out);
  ASSERT_EQ(out.layer_embeddings.size(), 2u);
  for (const auto &e : out.layer_embeddings) {
    EXPECT_EQ(e.rows(), 12);
    EXPECT_EQ(e.cols(), c.embed_dim);
  }
  EXPECT_THROW(enc.Forward(MatrixF::Random(12, 7), nullptr), InputError);
}

TEST(EncoderTest, ZeroHeadGivesZeroLogits) {
  EncoderConfig c = TinyConfig();
  auto params = InitParameters(c, 2);
  params["head.weight"].setZero();
  params["head.bias"].setZero();
  Encoder<float> enc(c, params);
  EXPECT_TRUE((enc.Forward(MatrixF::Random(9, c.input_dim), nullptr).logits.array() == 0.f).all());
}

TEST(EncoderTest, LastTapIsPreHeadRepresentation) {
  EncoderConfig c = TinyConfig();
  auto params = InitParameters(c, 3);
  Encoder<float> enc(c, params);
  MatrixF x = MatrixF::Random(7, c.input_dim);
  auto full = enc.Forward(x, nullptr);
  auto partial = enc.Forward(x, nullptr, nullptr, c.n_layers, false);
  EXPECT_TRUE(full.layer_embeddings.back() == partial.layer_embeddings.back());
  MatrixF logits = full.layer_embeddings.back() * params.at("head.weight");
  logits.rowwise() += params.at("head.bias").row(0);
  EXPECT_TRUE(logits.isApprox(full.logits, 1e-6f));
}

TEST(EncoderTest, ConvParameterCount) {
  EncoderConfig c = TinyConfig();
  EncoderConfig n = c;
  n.pos_conv_kernel = 0;
  const int64_t channels = c.input_dim / c.stack_factor;
  EXPECT_EQ(ParameterCount(c) - ParameterCount(n), channels * c.pos_conv_kernel + channels);
  auto a = ParameterShapes(c), b = ParameterShapes(n);
  EXPECT_EQ(a.size(), b.size() + 2);
}

TEST(ReceptiveFieldTest, LowFootprintLatency) {
  EncoderConfig c = TinyConfig();
  c.centre_frames = 4;
  c.right_frames = 0;
  c.pos_conv_kernel = 0;
  c.n_layers = 20;
  EXPECT_EQ(ComputeReceptiveField(c, 0).max_input_frame, 3);
  EXPECT_DOUBLE_EQ(LatencyMs(c, 0), 120.0);
  EXPECT_DOUBLE_EQ(LatencyMs(c, 3), 0.0);
  EXPECT_EQ(ComputeReceptiveField(c, 9).min_input_frame, 0);
}

TEST(ReceptiveFieldTest, FullyCausal) {
  EncoderConfig c = TinyConfig();
  c.centre_frames = 1;
  c.right_frames = 0;
  c.pos_conv_kernel = 0;
  for (int64_t t = 0; t < 10; ++t) EXPECT_EQ(ComputeReceptiveField(c, t).max_input_frame, t);
}

TEST(ReceptiveFieldTest, RightContextCompounds) {
  EncoderConfig c = TinyConfig();
  c.centre_frames = 4;
  c.right_frames = 1;
  c.n_layers = 1;
  EXPECT_EQ(ComputeReceptiveField(c, 0).max_input_frame, 4);
  c.n_layers = 2;
  // Frame 4 reaches into the next chunk, which ends at 7, plus one.
  EXPECT_EQ(ComputeReceptiveField(c, 0).max_input_frame, 8);
  c.n_layers = 3;
  EXPECT_EQ(ComputeReceptiveField(c, 0).max_input_frame, 12);
}

// Perturbing anything past the receptive field leaves the output frame
// bit-identical, and perturbing the last frame inside it changes it.
TEST(ReceptiveFieldTest, PerturbationProbe) {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    EncoderConfig c = TinyConfig();
    c.n_layers = 1 + static_cast<int32_t>(rng() % 3);
    c.centre_frames = 1 + static_cast<int32_t>(rng() % 4);
    c.right_frames = static_cast<int32_t>(rng() % 3);
    c.pos_conv_kernel = (rng() % 2) ? 0 : 3 + static_cast<int32_t>(rng() % 5);
    auto params = InitParameters(c, trial);
    Encoder<float> enc(c, params);
    const int64_t T = 18;
    MatrixF x = MatrixF::Random(T, c.input_dim);
    MatrixF base = enc.Forward(x, nullptr).logits;
    for (int64_t t = 0; t < T; ++t) {
      const int64_t reach = ComputeReceptiveField(c, t).max_input_frame;
      if (reach + 1 < T) {
        MatrixF y = x;
        y.bottomRows(T - reach - 1).setRandom();
        EXPECT_TRUE(enc.Forward(y, nullptr).logits.row(t) == base.row(t)) << "trial " << trial << " t " << t;
      }
      if (reach < T) {
        MatrixF y = x;
        y.row(reach).array() += 1.0f;
        EXPECT_FALSE(enc.Forward(y, nullptr).logits.row(t) == base.row(t)) << "trial " << trial << " t " << t;
      }
    }
  }
}

template <typename Real>
Real Loss(const EncoderConfig &c, const ParameterSet<Real> &p, const Matrix<Real> &x, const MaskSpec &m,
          const std::vector<int32_t> &labels) {
  Encoder<Real> enc(c, p);
  auto out = enc.Forward(x, &m);
  return MaskedPredictionLoss<Real>(out.logits, labels, m, LossConfig{0.5, 0.5, 0}).loss;
}

// Relative error per parameter of analytic gradients at precision Real
// against central differences computed in double.
template <typename Real>
void CheckGradients(double tol) {
  EncoderConfig c = TinyConfig();
  auto pf = InitParameters(c, 5);
  // Non-zero mask vector and head so every path carries signal.
  pf["mask_vector"].setRandom();
  ParameterSet<double> pd = CastParameters<double>(pf);
  const int64_t T = 8;
  MatrixD x = MatrixD::Random(T, c.input_dim);
  MaskSpec m = MaskFromStarts(T, std::vector<int32_t>{2, 3}, 2);
  std::vector<int32_t> labels{0, 1, 4, 2, 2, 3, 0, 1};

  ParameterSet<Real> p = CastParameters<Real>(pf);
  Encoder<Real> enc(c, p);
  ForwardCache<Real> cache;
  auto out = enc.Forward(x.cast<Real>(), &m, &cache);
  auto loss = MaskedPredictionLoss<Real>(out.logits, labels, m, LossConfig{0.5, 0.5, 0}, true);
  ParameterSet<Real> grads = ZerosLike(p);
  enc.Backward(cache, loss.grad_logits, &grads);

  const double h = 1e-5;
  for (auto &[name, value] : pd) {
    MatrixD fd(value.rows(), value.cols());
    for (int64_t i = 0; i < value.size(); ++i) {
      const double orig = value.data()[i];
      value.data()[i] = orig + h;
      const double up = Loss(c, pd, x, m, labels);
      value.data()[i] = orig - h;
      const double down = Loss(c, pd, x, m, labels);
      value.data()[i] = orig;
      fd.data()[i] = (up - down) / (2 * h);
    }
    MatrixD an = grads.at(name).template cast<double>();
    // Key biases shift every score of a query equally, so their true
    // gradient is zero.  Compare absolutely there.
    if (fd.norm() < 1e-6) {
      EXPECT_LT(an.norm(), tol) << name;
      continue;
    }
    EXPECT_LT((an - fd).norm() / fd.norm(), tol) << name;
  }
}

TEST(EncoderGradientTest, DoublePrecision) { CheckGradients<double>(1e-5); }

TEST(EncoderGradientTest, SinglePrecision) { CheckGradients<float>(1e-3); }

// The mask-vector gradient is the sum of the input gradients at masked
// frames.
TEST(EncoderGradientTest, MaskVectorGradientSumsMaskedInputGradients) {
  EncoderConfig c = TinyConfig();
  auto pd = CastParameters<double>(InitParameters(c, 6));
  const int64_t T = 8;
  MatrixD x = MatrixD::Random(T, c.input_dim);
  MaskSpec m = MaskFromStarts(T, std::vector<int32_t>{1, 5}, 2);
  std::vector<int32_t> labels{0, 1, 4, 2, 2, 3, 0, 1};
  // Input gradient without the mask, evaluated at the masked input.
  MatrixD masked_x = ApplyMask<double>(x, m, pd.at("mask_vector").row(0));
  Encoder<double> enc(c, pd);
  ForwardCache<double> cache;
  auto out = enc.Forward(masked_x, nullptr, &cache);
  auto loss = MaskedPredictionLoss<double>(out.logits, labels, m, LossConfig{0.5, 0.5, 0}, true);
  ParameterSet<double> g1 = ZerosLike(pd);
  MatrixD gin = enc.BackwardInput(cache, loss.grad_logits, &g1);
  RowVector<double> want = RowVector<double>::Zero(c.input_dim);
  for (int64_t t = 0; t < T; ++t)
    if (m.masked[t]) want += gin.row(t);

  ForwardCache<double> cache2;
  auto out2 = enc.Forward(x, &m, &cache2);
  auto loss2 = MaskedPredictionLoss<double>(out2.logits, labels, m, LossConfig{0.5, 0.5, 0}, true);
  ParameterSet<double> g2 = ZerosLike(pd);
  enc.Backward(cache2, loss2.grad_logits, &g2);
  EXPECT_LT((g2.at("mask_vector").row(0) - want).norm(), 1e-10);
}

TEST(CheckpointTest, RoundTripIsBitExact) {
  EncoderCheckpoint ckpt;
  ckpt.config = TinyConfig();
  ckpt.params = InitParameters(ckpt.config, 7);
  ckpt.artifact_tag = "M^2k_24";
  ckpt.training_step = 2000;
  ckpt.head = EncoderCheckpoint::kCtcHead;
  auto path = std::filesystem::temp_directory_path() / "mppt_encoder_test.mpck";
  SaveCheckpoint(path, ckpt);
  EncoderCheckpoint back = LoadCheckpoint(path);
  std::filesystem::remove(path);
  EXPECT_TRUE(back.config == ckpt.config);
  EXPECT_EQ(back.artifact_tag, ckpt.artifact_tag);
  EXPECT_EQ(back.training_step, 2000);
  EXPECT_EQ(back.head, ckpt.head);
  ASSERT_EQ(back.params.size(), ckpt.params.size());
  for (const auto &[name, v] : ckpt.params) EXPECT_TRUE(back.params.at(name) == v) << name;
  MatrixF x = MatrixF::Random(10, ckpt.config.input_dim);
  EXPECT_TRUE(Encoder<float>(ckpt.config, ckpt.params).Forward(x, nullptr).logits ==
              Encoder<float>(back.config, back.params).Forward(x, nullptr).logits);
}

TEST(CheckpointTest, CorruptFileRejected) {
  auto path = std::filesystem::temp_directory_path() / "mppt_encoder_bad.mpck";
  { std::ofstream(path) << "nonsense"; }
  EXPECT_THROW(LoadCheckpoint(path), InputError);
  std::filesystem::remove(path);
}

TEST(EncoderConfigTest, Validation) {
  EncoderConfig c = TinyConfig();
  c.n_heads = 3;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TinyConfig();
  c.centre_frames = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TinyConfig();
  c.right_frames = -1;
  EXPECT_THROW(c.Validate(), ConfigError);
}

TEST(ReplaceHeadTest, KeepsEncoderParameters) {
  EncoderConfig c = TinyConfig();
  auto p = InitParameters(c, 8);
  auto q = p;
  ReplaceHead(&c, &q, 9, 1);
  EXPECT_EQ(c.vocab_out, 9);
  EXPECT_EQ(q.at("head.weight").cols(), 9);
  for (const auto &[name, v] : p)
    if (!IsHeadParameter(name)) {
      EXPECT_TRUE(q.at(name) == v) << name;
    }
}

}  // namespace
}  // namespace mppt
