// src/features.cc

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

#include "mppt/features.h"

#include <algorithm>
#include <cmath>
#include <numbers>

#include <fftw3.h>

namespace mppt {

namespace {

int64_t ReflectIndex(int64_t i, int64_t n) {
  // Symmetric reflection (edge sample repeated), iterated for short signals.
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

int32_t RoundUpToPowerOfTwo(int32_t n) {
  int32_t p = 1;
  while (p < n) p <<= 1;
  return p;
}

void CheckAudio(std::span<const float> samples, int32_t sample_rate) {
  if (samples.empty()) throw InputError("feature extraction: empty sample buffer");
  if (sample_rate < 8000)
    throw InputError("feature extraction: sample rate must be >= 8000, got " +
                     std::to_string(sample_rate));
}

// Triangular filter weights over FFT bins [0, n_fft/2].
MatrixD MelFilterbank(const FbankOptions &opts, int32_t sample_rate, int32_t n_fft) {
  std::vector<double> centres = MelBinCentres(opts, sample_rate);
  double nyquist = 0.5 * sample_rate;
  double low = opts.low_freq;
  double high = opts.high_freq > 0 ? opts.high_freq : nyquist;
  const int32_t n_bins = n_fft / 2 + 1;
  MatrixD fb = MatrixD::Zero(opts.n_mels, n_bins);
  for (int32_t m = 0; m < opts.n_mels; ++m) {
    double left = m == 0 ? low : centres[m - 1];
    double centre = centres[m];
    double right = m + 1 == opts.n_mels ? high : centres[m + 1];
    double left_mel = HzToMel(left), centre_mel = HzToMel(centre),
           right_mel = HzToMel(right);
    for (int32_t k = 0; k < n_bins; ++k) {
      double mel = HzToMel(static_cast<double>(k) * sample_rate / n_fft);
      double w = 0.0;
      if (mel > left_mel && mel <= centre_mel)
        w = (mel - left_mel) / (centre_mel - left_mel);
      else if (mel > centre_mel && mel < right_mel)
        w = (right_mel - mel) / (right_mel - centre_mel);
      fb(m, k) = w;
    }
  }
  return fb;
}

// Log-mel energies in double precision; shared by fbank and mfcc.
MatrixD LogMelEnergies(std::span<const float> samples, int32_t sample_rate,
                       const FbankOptions &opts) {
  CheckAudio(samples, sample_rate);
  const int64_t n = static_cast<int64_t>(samples.size());
  const int32_t hop = static_cast<int32_t>(std::lround(sample_rate * opts.frame_shift_ms / 1000.0));
  const int32_t win = static_cast<int32_t>(std::lround(sample_rate * opts.frame_length_ms / 1000.0));
  const int32_t n_fft = RoundUpToPowerOfTwo(win);
  const int64_t num_frames =
      std::max<int64_t>(1, std::llround(static_cast<double>(n) / hop));

  std::vector<double> window(win);
  for (int32_t i = 0; i < win; ++i)
    window[i] = 0.54 - 0.46 * std::cos(2.0 * std::numbers::pi * i / (win - 1));

  MatrixD fb = MelFilterbank(opts, sample_rate, n_fft);
  const int32_t n_bins = n_fft / 2 + 1;

  double *in = static_cast<double *>(fftw_malloc(sizeof(double) * n_fft));
  fftw_complex *out =
      static_cast<fftw_complex *>(fftw_malloc(sizeof(fftw_complex) * n_bins));
  fftw_plan plan = fftw_plan_dft_r2c_1d(n_fft, in, out, FFTW_ESTIMATE);

  MatrixD result(num_frames, opts.n_mels);
  Eigen::VectorXd power(n_bins);
  const double log_floor = std::log(opts.energy_floor);
  for (int64_t t = 0; t < num_frames; ++t) {
    // Frame t is centred on the middle of its hop interval.
    int64_t start = t * hop + hop / 2 - win / 2;
    double mean = 0.0;
    for (int32_t i = 0; i < win; ++i) {
      in[i] = samples[ReflectIndex(start + i, n)];
      mean += in[i];
    }
    mean /= win;
    for (int32_t i = 0; i < win; ++i) in[i] = (in[i] - mean) * window[i];
    std::fill(in + win, in + n_fft, 0.0);
    fftw_execute(plan);
    for (int32_t k = 0; k < n_bins; ++k)
      power(k) = out[k][0] * out[k][0] + out[k][1] * out[k][1];
    Eigen::VectorXd mel = fb * power;
    for (int32_t m = 0; m < opts.n_mels; ++m)
      result(t, m) = mel(m) > opts.energy_floor ? std::log(mel(m)) : log_floor;
  }
  fftw_destroy_plan(plan);
  fftw_free(in);
  fftw_free(out);
  return result;
}

}  // namespace

double HzToMel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }

double MelToHz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

std::vector<double> MelBinCentres(const FbankOptions &opts, int32_t sample_rate) {
  double high = opts.high_freq > 0 ? opts.high_freq : 0.5 * sample_rate;
  double low_mel = HzToMel(opts.low_freq), high_mel = HzToMel(high);
  double step = (high_mel - low_mel) / (opts.n_mels + 1);
  std::vector<double> centres(opts.n_mels);
  for (int32_t m = 0; m < opts.n_mels; ++m) centres[m] = MelToHz(low_mel + step * (m + 1));
  return centres;
}

FeatureSequence ComputeFbank(std::span<const float> samples, int32_t sample_rate,
                             const FbankOptions &opts) {
  FeatureSequence out;
  out.frames = LogMelEnergies(samples, sample_rate, opts).cast<float>();
  out.rate = 100;
  return out;
}

FeatureSequence ComputeMfccDeltas(std::span<const float> samples, int32_t sample_rate,
                                  const MfccOptions &opts) {
  MatrixD log_mel = LogMelEnergies(samples, sample_rate, opts.fbank);
  const int32_t n_mels = opts.fbank.n_mels;
  MatrixD dct(n_mels, opts.n_ceps);
  for (int32_t k = 0; k < opts.n_ceps; ++k) {
    double scale = k == 0 ? std::sqrt(1.0 / n_mels) : std::sqrt(2.0 / n_mels);
    for (int32_t m = 0; m < n_mels; ++m)
      dct(m, k) = scale * std::cos(std::numbers::pi * k * (m + 0.5) / n_mels);
  }
  MatrixF ceps = (log_mel * dct).cast<float>();
  MatrixF delta = ComputeDeltas(ceps, opts.delta_window);
  MatrixF delta2 = ComputeDeltas(delta, opts.delta_window);
  FeatureSequence out;
  out.frames.resize(ceps.rows(), 3 * opts.n_ceps);
  out.frames << ceps, delta, delta2;
  out.rate = 100;
  return out;
}

MatrixF ComputeDeltas(const MatrixF &feats, int32_t window) {
  const int64_t num_frames = feats.rows();
  double denom = 0.0;
  for (int32_t n = 1; n <= window; ++n) denom += 2.0 * n * n;
  MatrixF out(num_frames, feats.cols());
  auto clamp = [num_frames](int64_t t) { return std::clamp<int64_t>(t, 0, num_frames - 1); };
  for (int64_t t = 0; t < num_frames; ++t) {
    for (int64_t d = 0; d < feats.cols(); ++d) {
      double acc = 0.0;
      for (int32_t n = 1; n <= window; ++n)
        acc += n * (static_cast<double>(feats(clamp(t + n), d)) - feats(clamp(t - n), d));
      out(t, d) = static_cast<float>(acc / denom);
    }
  }
  return out;
}

FeatureSequence StackFrames(const FeatureSequence &feats, int32_t factor) {
  if (factor < 1) throw InputError("stack_frames: factor must be >= 1");
  const int64_t num_frames = feats.NumFrames();
  if (num_frames < factor)
    throw InputError("stack_frames: utterance too short (" + std::to_string(num_frames) +
                     " frames < factor " + std::to_string(factor) + ")");
  const int64_t out_frames = num_frames / factor;
  const int64_t dim = feats.Dim();
  FeatureSequence out;
  out.rate = feats.rate / factor;
  out.frames.resize(out_frames, dim * factor);
  // Row-major storage makes stacking a reinterpretation of the first
  // out_frames * factor rows.
  out.frames = Eigen::Map<const MatrixF>(feats.frames.data(), out_frames, dim * factor);
  return out;
}

FeatureSequence UnstackFrames(const FeatureSequence &stacked, int32_t factor) {
  if (factor < 1 || stacked.Dim() % factor != 0)
    throw InputError("unstack_frames: dim not divisible by factor");
  FeatureSequence out;
  out.rate = stacked.rate * factor;
  out.frames = Eigen::Map<const MatrixF>(stacked.frames.data(), stacked.NumFrames() * factor,
                                         stacked.Dim() / factor);
  return out;
}

}  // namespace mppt
