// Copyright 2026 The hrrs Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "hrrs/codebooks.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>

namespace hrrs {

namespace {

using Index = Eigen::Index;

constexpr Index kAssignBlock = 2048;

double uniform01(std::mt19937_64& rng) {
  // 53 random bits -> [0, 1)
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

// Nearest centroid for every row of X. Candidates come from the expanded
// |x|^2 - 2 x.c + |c|^2 form; the reported distance is recomputed directly.
void assign_rows(const MatrixXr& X, const MatrixXr& C, std::vector<Index>& labels,
                 VectorXr& dist) {
  const Index n = X.rows();
  const Index k = C.rows();
  labels.resize(static_cast<std::size_t>(n));
  dist.resize(n);
  const VectorXr c_norms = C.rowwise().squaredNorm();
  for (Index start = 0; start < n; start += kAssignBlock) {
    const Index rows = std::min(kAssignBlock, n - start);
    MatrixXr cross = X.middleRows(start, rows) * C.transpose();
    for (Index i = 0; i < rows; ++i) {
      Index best = 0;
      double best_val = std::numeric_limits<double>::infinity();
      for (Index j = 0; j < k; ++j) {
        const double v = c_norms[j] - 2.0 * cross(i, j);
        if (v < best_val) {
          best_val = v;
          best = j;
        }
      }
      labels[static_cast<std::size_t>(start + i)] = best;
      dist[start + i] = (X.row(start + i) - C.row(best)).squaredNorm();
    }
  }
}

MatrixXr kmeanspp_seed(const MatrixXr& X, Index k, std::mt19937_64& rng) {
  const Index n = X.rows();
  MatrixXr C(k, X.cols());
  Index first = static_cast<Index>(uniform01(rng) * static_cast<double>(n));
  C.row(0) = X.row(std::min(first, n - 1));
  VectorXr d2 = (X.rowwise() - C.row(0)).rowwise().squaredNorm();
  for (Index j = 1; j < k; ++j) {
    const double total = d2.sum();
    Index pick = n - 1;
    if (total > 0.0) {
      const double target = uniform01(rng) * total;
      double acc = 0.0;
      for (Index i = 0; i < n; ++i) {
        acc += d2[i];
        if (acc > target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = std::min(static_cast<Index>(uniform01(rng) * static_cast<double>(n)), n - 1);
    }
    C.row(j) = X.row(pick);
    d2 = d2.cwiseMin((X.rowwise() - C.row(j)).rowwise().squaredNorm());
  }
  return C;
}

double sum_in_order(const VectorXr& v) {
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += v[i];
  return s;
}

double log_sum_exp(const VectorXr& v) {
  const double m = v.maxCoeff();
  if (!std::isfinite(m)) return m;
  double s = 0.0;
  for (Index i = 0; i < v.size(); ++i) s += std::exp(v[i] - m);
  return m + std::log(s);
}

void check_fit_args(const MatrixXr& X, Index k) {
  if (k < 1) throw ValidationError("cluster count must be >= 1");
  if (X.cols() < 1) throw ValidationError("descriptors must have dimension >= 1");
  if (X.rows() < k)
    throw InsufficientData("need at least k=" + std::to_string(k) + " samples, got " +
                           std::to_string(X.rows()));
}

}  // namespace

MatrixXr subsample_rows(const MatrixXr& X, Index max_rows, std::uint64_t seed) {
  if (max_rows <= 0 || X.rows() <= max_rows) return X;
  std::vector<Index> order(static_cast<std::size_t>(X.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::mt19937_64 rng(seed ^ 0x5eed5eedULL);
  // partial Fisher-Yates
  for (Index i = 0; i < max_rows; ++i) {
    const auto span = static_cast<std::uint64_t>(X.rows() - i);
    const Index j = i + static_cast<Index>(rng() % span);
    std::swap(order[static_cast<std::size_t>(i)], order[static_cast<std::size_t>(j)]);
  }
  std::sort(order.begin(), order.begin() + max_rows);
  MatrixXr out(max_rows, X.cols());
  for (Index i = 0; i < max_rows; ++i) out.row(i) = X.row(order[static_cast<std::size_t>(i)]);
  return out;
}

// ================================================================
// k-means
// ================================================================

Codebook kmeans_fit(const MatrixXr& X_in, Index k, const FitOptions& opts) {
  check_fit_args(X_in, k);
  const MatrixXr X = subsample_rows(X_in, opts.max_samples, opts.seed);
  std::mt19937_64 rng(opts.seed);
  return kmeans_fit(X, kmeanspp_seed(X, k, rng), FitOptions{opts.seed, opts.max_iter, opts.tol, 0});
}

Codebook kmeans_fit(const MatrixXr& X_in, const MatrixXr& init, const FitOptions& opts) {
  const Index k = init.rows();
  check_fit_args(X_in, k);
  if (init.cols() != X_in.cols()) throw DimensionMismatch("initial centroids", X_in.cols(), init.cols());
  if (opts.tol < 0.0) throw ValidationError("tol must be >= 0");
  const MatrixXr X = subsample_rows(X_in, opts.max_samples, opts.seed);
  const Index n = X.rows();
  const Index d = X.cols();

  Codebook cb;
  cb.centroids = init;
  std::vector<Index> labels;
  VectorXr dist;
  assign_rows(X, cb.centroids, labels, dist);
  cb.inertia_history.push_back(sum_in_order(dist));

  for (int iter = 0; iter < opts.max_iter; ++iter) {
    std::vector<Index> counts(static_cast<std::size_t>(k), 0);
    for (auto l : labels) ++counts[static_cast<std::size_t>(l)];

    // Re-seed empty clusters at the worst-served point, which then joins it.
    for (Index j = 0; j < k; ++j) {
      if (counts[static_cast<std::size_t>(j)] > 0) continue;
      Index far = 0;
      dist.maxCoeff(&far);
      --counts[static_cast<std::size_t>(labels[static_cast<std::size_t>(far)])];
      labels[static_cast<std::size_t>(far)] = j;
      counts[static_cast<std::size_t>(j)] = 1;
      dist[far] = 0.0;
      cb.centroids.row(j) = X.row(far);
    }

    MatrixXr sums = MatrixXr::Zero(k, d);
    for (Index i = 0; i < n; ++i) sums.row(labels[static_cast<std::size_t>(i)]) += X.row(i);
    for (Index j = 0; j < k; ++j)
      cb.centroids.row(j) = sums.row(j) / static_cast<double>(counts[static_cast<std::size_t>(j)]);

    assign_rows(X, cb.centroids, labels, dist);
    const double prev = cb.inertia_history.back();
    const double cur = sum_in_order(dist);
    cb.inertia_history.push_back(cur);
    if (prev <= 0.0 || (prev - cur) / prev < opts.tol) break;
  }
  return cb;
}

Index kmeans_assign(const Codebook& cb, const Eigen::Ref<const VectorXr>& x) {
  if (x.size() != cb.dim()) throw DimensionMismatch("kmeans_assign", cb.dim(), x.size());
  Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < cb.k(); ++j) {
    const double dj = (cb.centroids.row(j).transpose() - x).squaredNorm();
    if (dj < best_d) {
      best_d = dj;
      best = j;
    }
  }
  return best;
}

std::vector<Index> kmeans_assign_all(const Codebook& cb, const MatrixXr& X) {
  if (X.cols() != cb.dim()) throw DimensionMismatch("kmeans_assign_all", cb.dim(), X.cols());
  std::vector<Index> out(static_cast<std::size_t>(X.rows()));
  for (Index i = 0; i < X.rows(); ++i) out[static_cast<std::size_t>(i)] = kmeans_assign(cb, X.row(i).transpose());
  return out;
}

double kmeans_inertia(const Codebook& cb, const MatrixXr& X) {
  if (X.cols() != cb.dim()) throw DimensionMismatch("kmeans_inertia", cb.dim(), X.cols());
  std::vector<Index> labels;
  VectorXr dist;
  assign_rows(X, cb.centroids, labels, dist);
  return sum_in_order(dist);
}

// ================================================================
// Gaussian mixture
// ================================================================

VectorXr gmm_component_log_densities(const GmmModel& g, const Eigen::Ref<const VectorXr>& x) {
  if (x.size() != g.dim()) throw DimensionMismatch("gmm", g.dim(), x.size());
  const double log2pi = std::log(2.0 * std::numbers::pi);
  VectorXr out(g.k());
  for (Index j = 0; j < g.k(); ++j) {
    double acc = 0.0;
    for (Index r = 0; r < g.dim(); ++r) {
      const double v = g.variances(j, r);
      const double diff = x[r] - g.means(j, r);
      acc += log2pi + std::log(v) + diff * diff / v;
    }
    const double w = g.weights[j];
    out[j] = (w > 0.0 ? std::log(w) : -std::numeric_limits<double>::infinity()) - 0.5 * acc;
  }
  return out;
}

VectorXr gmm_posteriors(const GmmModel& g, const Eigen::Ref<const VectorXr>& x) {
  const VectorXr logp = gmm_component_log_densities(g, x);
  const double m = logp.maxCoeff();
  VectorXr p = (logp.array() - m).exp();
  return p / sum_in_order(p);
}

double gmm_mean_loglik(const GmmModel& g, const MatrixXr& X) {
  if (X.cols() != g.dim()) throw DimensionMismatch("gmm_mean_loglik", g.dim(), X.cols());
  double acc = 0.0;
  for (Index i = 0; i < X.rows(); ++i) acc += log_sum_exp(gmm_component_log_densities(g, X.row(i).transpose()));
  return acc / static_cast<double>(X.rows());
}

GmmModel gmm_fit(const MatrixXr& X_in, Index k, const FitOptions& opts) {
  check_fit_args(X_in, k);
  const MatrixXr X = subsample_rows(X_in, opts.max_samples, opts.seed);
  const Codebook cb = kmeans_fit(X, k, FitOptions{opts.seed, opts.max_iter, opts.tol, 0});
  const std::vector<Index> labels = kmeans_assign_all(cb, X);
  const Index n = X.rows();
  const Index d = X.cols();

  GmmModel init;
  init.means = cb.centroids;
  init.variances = MatrixXr::Zero(k, d);
  init.weights = VectorXr::Zero(k);
  for (Index i = 0; i < n; ++i) {
    const Index j = labels[static_cast<std::size_t>(i)];
    init.weights[j] += 1.0;
    init.variances.row(j) += (X.row(i) - cb.centroids.row(j)).cwiseAbs2();
  }
  const VectorXr global_var = (X.rowwise() - X.colwise().mean()).cwiseAbs2().colwise().mean();
  for (Index j = 0; j < k; ++j) {
    if (init.weights[j] > 0.0) {
      init.variances.row(j) /= init.weights[j];
    } else {
      // Cluster lost every point in the final assignment.
      init.variances.row(j) = global_var.transpose();
      init.weights[j] = 1.0;
    }
  }
  init.variances = init.variances.cwiseMax(kVarianceFloor);
  init.weights /= init.weights.sum();
  return gmm_fit(X, std::move(init), FitOptions{opts.seed, opts.max_iter, opts.tol, 0});
}

GmmModel gmm_fit(const MatrixXr& X_in, GmmModel g, const FitOptions& opts) {
  const Index k = g.k();
  check_fit_args(X_in, k);
  if (g.dim() != X_in.cols()) throw DimensionMismatch("gmm_fit", g.dim(), X_in.cols());
  const MatrixXr X = subsample_rows(X_in, opts.max_samples, opts.seed);
  const Index n = X.rows();
  const Index d = X.cols();

  MatrixXr resp(n, k);
  auto e_step = [&]() {
    double acc = 0.0;
    for (Index i = 0; i < n; ++i) {
      const VectorXr logp = gmm_component_log_densities(g, X.row(i).transpose());
      const double lse = log_sum_exp(logp);
      acc += lse;
      resp.row(i) = (logp.array() - lse).exp().transpose();
    }
    return acc / static_cast<double>(n);
  };

  g.loglik_history.clear();
  g.loglik_history.push_back(e_step());
  for (int iter = 0; iter < opts.max_iter; ++iter) {
    VectorXr nk = VectorXr::Zero(k);
    MatrixXr sx = MatrixXr::Zero(k, d);
    for (Index i = 0; i < n; ++i) {
      for (Index j = 0; j < k; ++j) {
        const double r = resp(i, j);
        nk[j] += r;
        sx.row(j) += r * X.row(i);
      }
    }
    for (Index j = 0; j < k; ++j) {
      if (nk[j] <= 1e-300) {
        g.weights[j] = 0.0;
        continue;
      }
      g.means.row(j) = sx.row(j) / nk[j];
    }
    MatrixXr sv = MatrixXr::Zero(k, d);
    for (Index i = 0; i < n; ++i)
      for (Index j = 0; j < k; ++j)
        sv.row(j) += resp(i, j) * (X.row(i) - g.means.row(j)).cwiseAbs2();
    for (Index j = 0; j < k; ++j) {
      if (nk[j] <= 1e-300) continue;
      g.variances.row(j) = (sv.row(j) / nk[j]).cwiseMax(kVarianceFloor);
      g.weights[j] = nk[j] / static_cast<double>(n);
    }
    g.weights /= sum_in_order(g.weights);

    const double prev = g.loglik_history.back();
    const double cur = e_step();
    g.loglik_history.push_back(cur);
    if (cur - prev < opts.tol) break;
  }
  return g;
}

}  // namespace hrrs
