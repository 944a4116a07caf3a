// src/clustering.cc

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

#include "mppt/clustering.h"

#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <random>

namespace mppt {

namespace {

double SquaredDistance(const double *a, const float *x, int64_t dim) {
  double acc = 0.0;
  for (int64_t d = 0; d < dim; ++d) {
    double diff = static_cast<double>(x[d]) - a[d];
    acc += diff * diff;
  }
  return acc;
}

// Returns the inertia; fills assignment and per-point distance.
double AssignAll(const MatrixD &centroids, const MatrixF &vectors, std::vector<int32_t> *assignment,
                 std::vector<double> *distance) {
  const int64_t n = vectors.rows(), dim = vectors.cols(), k = centroids.rows();
  assignment->resize(n);
  distance->resize(n);
  double inertia = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    double best = std::numeric_limits<double>::infinity();
    int32_t best_k = 0;
    for (int64_t c = 0; c < k; ++c) {
      double dist = SquaredDistance(centroids.row(c).data(), vectors.row(i).data(), dim);
      if (dist < best) {
        best = dist;
        best_k = static_cast<int32_t>(c);
      }
    }
    (*assignment)[i] = best_k;
    (*distance)[i] = best;
    inertia += best;
  }
  return inertia;
}

MatrixD KMeansPlusPlus(const MatrixF &vectors, int32_t k, std::mt19937_64 &rng) {
  const int64_t n = vectors.rows(), dim = vectors.cols();
  MatrixD centroids(k, dim);
  int64_t first = std::uniform_int_distribution<int64_t>(0, n - 1)(rng);
  centroids.row(0) = vectors.row(first).cast<double>();
  std::vector<double> nearest(n);
  for (int64_t i = 0; i < n; ++i) nearest[i] = SquaredDistance(centroids.row(0).data(), vectors.row(i).data(), dim);
  for (int32_t c = 1; c < k; ++c) {
    double total = std::accumulate(nearest.begin(), nearest.end(), 0.0);
    if (!(total > 0.0))
      throw InputError("kmeans: fewer distinct vectors than K=" + std::to_string(k));
    double r = std::uniform_real_distribution<double>(0.0, total)(rng);
    int64_t pick = n - 1;
    double acc = 0.0;
    for (int64_t i = 0; i < n; ++i) {
      acc += nearest[i];
      if (acc > r && nearest[i] > 0.0) {
        pick = i;
        break;
      }
    }
    while (nearest[pick] == 0.0) --pick;  // r landed on the tail of rounding
    centroids.row(c) = vectors.row(pick).cast<double>();
    for (int64_t i = 0; i < n; ++i)
      nearest[i] = std::min(nearest[i], SquaredDistance(centroids.row(c).data(), vectors.row(i).data(), dim));
  }
  return centroids;
}

}  // namespace

MatrixF CorpusSample(const MatrixF &vectors, double fraction, uint64_t seed) {
  if (!(fraction > 0.0 && fraction <= 1.0))
    throw ConfigError("corpus_sample: fraction must lie in (0, 1]");
  const int64_t n = vectors.rows();
  if (n == 0) throw InputError("corpus_sample: empty vector source");
  if (fraction == 1.0) return vectors;
  const int64_t m = std::max<int64_t>(1, static_cast<int64_t>(std::floor(fraction * n)));
  std::vector<int64_t> index(n);
  std::iota(index.begin(), index.end(), 0);
  std::mt19937_64 rng(seed);
  for (int64_t i = 0; i < m; ++i) {
    int64_t j = std::uniform_int_distribution<int64_t>(i, n - 1)(rng);
    std::swap(index[i], index[j]);
  }
  std::sort(index.begin(), index.begin() + m);
  MatrixF out(m, vectors.cols());
  for (int64_t i = 0; i < m; ++i) out.row(i) = vectors.row(index[i]);
  return out;
}

KMeansResult KMeansFit(const MatrixF &vectors, const KMeansOptions &opts) {
  const int64_t n = vectors.rows(), dim = vectors.cols();
  const int32_t k = opts.k;
  if (k < 1) throw InputError("kmeans: K must be >= 1");
  if (n < k)
    throw InputError("kmeans: " + std::to_string(n) + " vectors is fewer than K=" + std::to_string(k));
  if (!vectors.allFinite()) throw InputError("kmeans: non-finite input vector");

  std::mt19937_64 rng(opts.seed);
  MatrixD centroids = KMeansPlusPlus(vectors, k, rng);

  KMeansResult result;
  std::vector<int32_t> assignment, previous;
  std::vector<double> distance;
  for (int32_t iter = 0; iter < opts.max_iters; ++iter) {
    double inertia = AssignAll(centroids, vectors, &assignment, &distance);
    result.inertia_history.push_back(inertia);
    result.iterations = iter + 1;
    if (assignment == previous) {
      result.converged = true;
      break;
    }

    // Means, accumulated in point order.
    MatrixD sums = MatrixD::Zero(k, dim);
    std::vector<int64_t> counts(k, 0);
    for (int64_t i = 0; i < n; ++i) {
      sums.row(assignment[i]) += vectors.row(i).cast<double>();
      ++counts[assignment[i]];
    }
    MatrixD updated = centroids;
    std::vector<bool> taken(n, false);
    for (int32_t c = 0; c < k; ++c) {
      if (counts[c] > 0) {
        updated.row(c) = sums.row(c) / static_cast<double>(counts[c]);
        continue;
      }
      int64_t far = -1;
      for (int64_t i = 0; i < n; ++i)
        if (!taken[i] && (far < 0 || distance[i] > distance[far])) far = i;
      taken[far] = true;
      updated.row(c) = vectors.row(far).cast<double>();
    }
    double shift = (updated - centroids).squaredNorm();
    double scale = centroids.squaredNorm();
    centroids = std::move(updated);
    previous = assignment;
    if (shift <= opts.tol * opts.tol * std::max(scale, 1e-300)) {
      // One more assignment so the reported inertia matches the final
      // centroids.
      result.inertia_history.push_back(AssignAll(centroids, vectors, &assignment, &distance));
      result.converged = assignment == previous;
      break;
    }
  }
  result.model.centroids = centroids.cast<float>();
  result.model.seed = opts.seed;
  return result;
}

std::vector<int32_t> AssignIds(const ClusterModel &model, const MatrixF &frames) {
  if (frames.cols() != model.Dim())
    throw InputError("assign: frame dim " + std::to_string(frames.cols()) +
                     " does not match model dim " + std::to_string(model.Dim()));
  MatrixD centroids = model.centroids.cast<double>();
  std::vector<int32_t> ids;
  std::vector<double> distance;
  AssignAll(centroids, frames, &ids, &distance);
  return ids;
}

FrameLabelSequence Assign(const ClusterModel &model, const MatrixF &frames, int32_t rate,
                          const std::string &utt_id) {
  FrameLabelSequence out;
  out.utt_id = utt_id;
  out.rate = rate;
  out.ids = AssignIds(model, frames);
  return out;
}

double Inertia(const ClusterModel &model, const MatrixF &vectors) {
  std::vector<int32_t> ids;
  std::vector<double> distance;
  return AssignAll(model.centroids.cast<double>(), vectors, &ids, &distance);
}

std::vector<int32_t> SubsampleIds(const std::vector<int32_t> &ids, int32_t factor,
                                  SubsampleRule rule) {
  if (factor < 1) throw InputError("subsample_labels: factor must be >= 1");
  if (static_cast<int64_t>(ids.size()) < factor)
    throw InputError("subsample_labels: " + std::to_string(ids.size()) +
                     " labels is shorter than factor " + std::to_string(factor));
  const size_t out_len = ids.size() / factor;
  std::vector<int32_t> out(out_len);
  for (size_t t = 0; t < out_len; ++t) {
    if (rule == SubsampleRule::kTakeFirst) {
      out[t] = ids[t * factor];
      continue;
    }
    std::map<int32_t, int32_t> votes;
    for (int32_t j = 0; j < factor; ++j) ++votes[ids[t * factor + j]];
    int32_t best = votes.begin()->first, best_count = 0;
    for (auto [id, count] : votes)
      if (count > best_count) {
        best = id;
        best_count = count;
      }
    out[t] = best;
  }
  return out;
}

FrameLabelSequence SubsampleLabels(const FrameLabelSequence &labels, int32_t factor,
                                   SubsampleRule rule) {
  if (labels.rate % factor != 0)
    throw InputError("subsample_labels: rate " + std::to_string(labels.rate) +
                     " not divisible by factor " + std::to_string(factor));
  FrameLabelSequence out;
  out.utt_id = labels.utt_id;
  out.rate = labels.rate / factor;
  out.ids = SubsampleIds(labels.ids, factor, rule);
  return out;
}

}  // namespace mppt
