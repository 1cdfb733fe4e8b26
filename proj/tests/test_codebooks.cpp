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

#include <cmath>
#include <limits>
#include <random>

#include "doctest.h"
#include "hrrs/codebooks.hpp"

using namespace hrrs;

namespace {

MatrixXr column(std::initializer_list<double> v) {
  MatrixXr X(static_cast<Eigen::Index>(v.size()), 1);
  Eigen::Index i = 0;
  for (double x : v) X(i++, 0) = x;
  return X;
}

MatrixXr random_blobs(std::mt19937_64& rng, Eigen::Index n, Eigen::Index d, int blobs) {
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXr centers(blobs, d);
  for (Eigen::Index i = 0; i < centers.size(); ++i) centers.data()[i] = 5.0 * g(rng);
  MatrixXr X(n, d);
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < d; ++j) X(i, j) = centers(i % blobs, j) + g(rng);
  return X;
}

// Nearest centroid by plain scan, first minimum wins.
Eigen::Index brute_nearest(const MatrixXr& C, const VectorXr& x) {
  Eigen::Index best = 0;
  double best_d = std::numeric_limits<double>::infinity();
  for (Eigen::Index j = 0; j < C.rows(); ++j) {
    double s = 0.0;
    for (Eigen::Index r = 0; r < C.cols(); ++r) s += (x(r) - C(j, r)) * (x(r) - C(j, r));
    if (s < best_d) {
      best_d = s;
      best = j;
    }
  }
  return best;
}

}  // namespace

TEST_CASE("kmeans 1-D worked example") {
  const MatrixXr X = column({0, 1, 9, 10});
  const Codebook cb = kmeans_fit(X, column({0, 10}));
  REQUIRE(cb.k() == 2);
  CHECK(cb.centroids(0, 0) == doctest::Approx(0.5));
  CHECK(cb.centroids(1, 0) == doctest::Approx(9.5));
  CHECK(cb.inertia_history.back() == doctest::Approx(1.0));
  CHECK(kmeans_inertia(cb, X) == doctest::Approx(1.0));

  // Exhaustive enumeration of 2-partitions: 1.0 is the optimum.
  double best = 1e300;
  for (int mask = 1; mask < 15; ++mask) {
    double s[2] = {0, 0}, n[2] = {0, 0}, ss[2] = {0, 0};
    for (int i = 0; i < 4; ++i) {
      const int g = (mask >> i) & 1;
      s[g] += X(i, 0);
      ss[g] += X(i, 0) * X(i, 0);
      n[g] += 1;
    }
    best = std::min(best, ss[0] - s[0] * s[0] / n[0] + ss[1] - s[1] * s[1] / n[1]);
  }
  CHECK(best == doctest::Approx(1.0));

  // k-means++ seeding reaches the same optimum here.
  const Codebook seeded = kmeans_fit(X, 2, {.seed = 4});
  CHECK(kmeans_inertia(seeded, X) == doctest::Approx(1.0));
}

TEST_CASE("kmeans degenerate cluster counts") {
  std::mt19937_64 rng(1);
  const MatrixXr X = random_blobs(rng, 12, 3, 3);
  SUBCASE("k = N") {
    const Codebook cb = kmeans_fit(X, X.rows(), {.seed = 2});
    CHECK(kmeans_inertia(cb, X) == doctest::Approx(0.0));
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      const auto j = kmeans_assign(cb, X.row(i).transpose());
      CHECK((cb.centroids.row(j) - X.row(i)).norm() == doctest::Approx(0.0));
    }
  }
  SUBCASE("k = 1 gives the sample mean") {
    const Codebook cb = kmeans_fit(X, 1);
    CHECK((cb.centroids.row(0) - X.colwise().mean()).norm() < 1e-12);
  }
  SUBCASE("N < k") { CHECK_THROWS_AS(kmeans_fit(X, 13), InsufficientData); }
  SUBCASE("invalid arguments") {
    CHECK_THROWS_AS(kmeans_fit(X, 0), ValidationError);
    CHECK_THROWS_AS(kmeans_fit(X, 2, {.tol = -1.0}), ValidationError);
  }
}

TEST_CASE("kmeans_assign") {
  Codebook cb;
  cb.centroids = column({0, 10});
  CHECK(kmeans_assign(cb, column({1}).col(0)) == 0);
  CHECK(kmeans_assign(cb, column({5}).col(0)) == 0);
  CHECK(kmeans_assign(cb, column({10}).col(0)) == 1);
  CHECK(kmeans_assign(cb, column({5.0000001}).col(0)) == 1);
  CHECK_THROWS_AS(kmeans_assign(cb, VectorXr::Zero(2)), DimensionMismatch);
}

TEST_CASE("property: kmeans_assign agrees with brute force on 1000 probes") {
  std::mt19937_64 rng(9);
  const MatrixXr X = random_blobs(rng, 300, 5, 6);
  const Codebook cb = kmeans_fit(X, 17, {.seed = 3});
  std::normal_distribution<double> g(0.0, 6.0);
  MatrixXr P(1000, 5);
  for (Eigen::Index i = 0; i < P.size(); ++i) P.data()[i] = g(rng);
  const auto all = kmeans_assign_all(cb, P);
  for (Eigen::Index i = 0; i < P.rows(); ++i) {
    const VectorXr p = P.row(i).transpose();
    const auto want = brute_nearest(cb.centroids, p);
    CHECK(kmeans_assign(cb, p) == want);
    CHECK(all[static_cast<std::size_t>(i)] == want);
  }
}

TEST_CASE("property: kmeans is monotone and deterministic") {
  for (int trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(100 + trial);
    const MatrixXr X = random_blobs(rng, 200, 4, 5);
    const FitOptions opts{.seed = static_cast<std::uint64_t>(trial), .max_iter = 50, .tol = 0.0};
    const Codebook a = kmeans_fit(X, 7, opts);
    for (std::size_t t = 1; t < a.inertia_history.size(); ++t)
      CHECK(a.inertia_history[t] <= a.inertia_history[t - 1] + 1e-9);
    const Codebook b = kmeans_fit(X, 7, opts);
    CHECK(a.centroids == b.centroids);
    CHECK(a.inertia_history == b.inertia_history);
    CHECK(a.centroids.allFinite());
  }
}

TEST_CASE("kmeans subsamples oversized training sets") {
  std::mt19937_64 rng(2);
  const MatrixXr X = random_blobs(rng, 400, 2, 2);
  const Codebook cb = kmeans_fit(X, 2, {.seed = 1, .max_samples = 50});
  CHECK(cb.k() == 2);
  const MatrixXr S = subsample_rows(X, 50, 1);
  CHECK(S.rows() == 50);
  CHECK(subsample_rows(X, 50, 1) == S);
  CHECK(subsample_rows(X, 1000, 1) == X);
}

TEST_CASE("gmm single component is the MLE") {
  std::mt19937_64 rng(4);
  const MatrixXr X = random_blobs(rng, 50, 3, 1);
  const GmmModel g = gmm_fit(X, 1);
  CHECK(g.weights(0) == doctest::Approx(1.0));
  const VectorXr mean = X.colwise().mean().transpose();
  CHECK((g.means.row(0).transpose() - mean).norm() < 1e-10);
  for (Eigen::Index r = 0; r < 3; ++r) {
    const double var = (X.col(r).array() - mean(r)).square().mean();
    CHECK(g.variances(0, r) == doctest::Approx(var).epsilon(1e-10));
  }
  CHECK(gmm_posteriors(g, X.row(0).transpose())(0) == 1.0);
}

TEST_CASE("gmm recovers two separated 1-D blobs") {
  std::mt19937_64 rng(5);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXr X(400, 1);
  for (Eigen::Index i = 0; i < 400; ++i) X(i, 0) = (i % 2 ? 10.0 : 0.0) + g(rng);
  const GmmModel m = gmm_fit(X, 2, {.seed = 1});
  const Eigen::Index lo = m.means(0, 0) < m.means(1, 0) ? 0 : 1;
  CHECK(std::abs(m.means(lo, 0) - 0.0) < 0.5);
  CHECK(std::abs(m.means(1 - lo, 0) - 10.0) < 0.5);
  CHECK(std::abs(m.weights(0) - 0.5) < 0.1);
  CHECK(std::abs(m.weights.sum() - 1.0) < 1e-12);
  for (std::size_t t = 1; t < m.loglik_history.size(); ++t)
    CHECK(m.loglik_history[t] >= m.loglik_history[t - 1] - 1e-7);
}

TEST_CASE("gmm on identical points clamps variances") {
  const MatrixXr X = MatrixXr::Constant(10, 2, 3.0);
  GmmModel g;
  CHECK_NOTHROW(g = gmm_fit(X, 2));
  CHECK((g.variances.array() >= kVarianceFloor).all());
  CHECK(g.means.allFinite());
  CHECK_THROWS_AS(gmm_fit(X, 11), InsufficientData);
}

TEST_CASE("gmm_posteriors") {
  GmmModel g;
  g.weights = VectorXr::Constant(2, 0.5);
  g.means = column({0, 10});
  g.variances = MatrixXr::Ones(2, 1);
  SUBCASE("symmetric midpoint") {
    const VectorXr p = gmm_posteriors(g, column({5}).col(0));
    CHECK(p(0) == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(p(1) == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("dominant component") {
    g.variances(1, 0) = 1e-4;
    CHECK(gmm_posteriors(g, column({10}).col(0))(1) >= 0.999);
  }
  SUBCASE("far-out point stays finite via log-sum-exp") {
    const VectorXr p = gmm_posteriors(g, column({1e4}).col(0));
    CHECK(p.allFinite());
    CHECK(p(1) == doctest::Approx(1.0));
  }
  SUBCASE("dimension mismatch") { CHECK_THROWS_AS(gmm_posteriors(g, VectorXr::Zero(3)), DimensionMismatch); }
}

TEST_CASE("property: posteriors sum to 1 and EM is monotone and deterministic") {
  for (int trial = 0; trial < 10; ++trial) {
    std::mt19937_64 rng(200 + trial);
    const MatrixXr X = random_blobs(rng, 150, 3, 4);
    const FitOptions opts{.seed = static_cast<std::uint64_t>(trial), .max_iter = 40, .tol = 0.0};
    const GmmModel a = gmm_fit(X, 4, opts);
    CHECK(std::abs(a.weights.sum() - 1.0) < 1e-12);
    CHECK((a.weights.array() >= 0).all());
    CHECK((a.variances.array() >= kVarianceFloor).all());
    for (std::size_t t = 1; t < a.loglik_history.size(); ++t)
      CHECK(a.loglik_history[t] >= a.loglik_history[t - 1] - 1e-7);
    std::normal_distribution<double> g(0.0, 8.0);
    for (int p = 0; p < 20; ++p) {
      VectorXr x(3);
      for (auto& v : x) v = g(rng);
      CHECK(std::abs(gmm_posteriors(a, x).sum() - 1.0) < 1e-12);
    }
    const GmmModel b = gmm_fit(X, 4, opts);
    CHECK(a.means == b.means);
    CHECK(a.variances == b.variances);
    CHECK(a.weights == b.weights);
  }
}
