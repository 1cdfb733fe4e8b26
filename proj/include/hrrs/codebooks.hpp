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

#pragma once

#include <cstdint>
#include <vector>

#include "hrrs/core.hpp"

namespace hrrs {

inline constexpr double kVarianceFloor = 1e-6;

/// Raised when a model asks for more clusters than there are samples.
class InsufficientData : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

struct FitOptions {
  std::uint64_t seed = 0;
  int max_iter = 100;
  double tol = 1e-4;
  /// Training sets larger than this are uniformly subsampled (seeded).
  Eigen::Index max_samples = 500000;
};

/// k-means dictionary. `centroids` is k x d.
struct Codebook {
  MatrixXr centroids;
  std::vector<double> inertia_history;

  Eigen::Index k() const { return centroids.rows(); }
  Eigen::Index dim() const { return centroids.cols(); }
};

/// Diagonal-covariance Gaussian mixture. `means` and `variances` are k x d.
struct GmmModel {
  VectorXr weights;
  MatrixXr means;
  MatrixXr variances;
  std::vector<double> loglik_history;  // mean log-likelihood per iteration

  Eigen::Index k() const { return means.rows(); }
  Eigen::Index dim() const { return means.cols(); }
};

/// Lloyd iterations from k-means++ seeding. Stops once the relative inertia
/// decrease falls below `tol` or after `max_iter` centroid updates. Empty
/// clusters are re-seeded at the point farthest from its centroid.
Codebook kmeans_fit(const MatrixXr& X, Eigen::Index k, const FitOptions& opts = {});

/// Lloyd iterations from caller-supplied initial centroids (k x d).
Codebook kmeans_fit(const MatrixXr& X, const MatrixXr& initial_centroids,
                    const FitOptions& opts = {});

/// Nearest centroid by squared Euclidean distance, lowest index on ties.
Eigen::Index kmeans_assign(const Codebook& cb, const Eigen::Ref<const VectorXr>& x);

/// Batch assignment of every row of X.
std::vector<Eigen::Index> kmeans_assign_all(const Codebook& cb, const MatrixXr& X);

/// Sum of squared distances from each row of X to its nearest centroid.
double kmeans_inertia(const Codebook& cb, const MatrixXr& X);

/// EM for a diagonal GMM, initialised from kmeans_fit (means = centroids,
/// variances = within-cluster variances, weights = cluster fractions).
GmmModel gmm_fit(const MatrixXr& X, Eigen::Index k, const FitOptions& opts = {});

/// EM from caller-supplied initial parameters.
GmmModel gmm_fit(const MatrixXr& X, GmmModel init, const FitOptions& opts = {});

/// Per-component log(w_j * N(x | mu_j, diag(var_j))).
VectorXr gmm_component_log_densities(const GmmModel& g, const Eigen::Ref<const VectorXr>& x);

/// Responsibilities of each component for x, normalised in log space.
VectorXr gmm_posteriors(const GmmModel& g, const Eigen::Ref<const VectorXr>& x);

/// Mean log-likelihood of the rows of X under g.
double gmm_mean_loglik(const GmmModel& g, const MatrixXr& X);

/// Seeded uniform row subsample without replacement (returns X if small enough).
MatrixXr subsample_rows(const MatrixXr& X, Eigen::Index max_rows, std::uint64_t seed);

}  // namespace hrrs
