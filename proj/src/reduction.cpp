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

#include "hrrs/reduction.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>

namespace hrrs {

namespace {

using Index = Eigen::Index;

constexpr double kRankTolerance = 1e-10;

struct Eigenpairs {
  VectorXr values;   // descending
  MatrixXr vectors;  // columns are unit axes in input space
};

// Eigendecomposition of the centered covariance, through the Gram matrix
// when there are fewer samples than dimensions.
Eigenpairs centered_eigenpairs(const MatrixXr& Xc) {
  const Index n = Xc.rows();
  const Index D = Xc.cols();
  Eigenpairs out;
  if (D <= n) {
    const Eigen::MatrixXd cov = (Xc.transpose() * Xc) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(cov);
    out.values = es.eigenvalues().reverse();
    out.vectors = es.eigenvectors().rowwise().reverse();
  } else {
    const Eigen::MatrixXd gram = (Xc * Xc.transpose()) / static_cast<double>(n);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram);
    out.values = es.eigenvalues().reverse();
    const Eigen::MatrixXd v = es.eigenvectors().rowwise().reverse();
    out.vectors = MatrixXr::Zero(D, n);
    for (Index j = 0; j < n; ++j) {
      const double lam = out.values[j];
      if (lam > 0.0) out.vectors.col(j) = Xc.transpose() * v.col(j) / std::sqrt(static_cast<double>(n) * lam);
    }
  }
  out.values = out.values.cwiseMax(0.0);
  return out;
}

Index rank_of(const VectorXr& values) {
  if (values.size() == 0 || values[0] <= 0.0) return 0;
  Index r = 0;
  for (Index i = 0; i < values.size(); ++i)
    if (values[i] > kRankTolerance * values[0]) ++r;
  return r;
}

MatrixXr centered(const MatrixXr& X) { return X.rowwise() - X.colwise().mean(); }

}  // namespace

VectorXr pca_spectrum(const MatrixXr& X) {
  if (X.rows() < 2) throw ValidationError("pca needs at least 2 samples");
  return centered_eigenpairs(centered(X)).values;
}

Index pca_rank(const MatrixXr& X) { return rank_of(pca_spectrum(X)); }

PcaModel pca_fit(const MatrixXr& X, Index d) {
  const Index n = X.rows();
  const Index D = X.cols();
  if (n < 2) throw ValidationError("pca needs at least 2 samples");
  if (d < 1 || d > std::min(D, n))
    throw ValidationError("target dimension " + std::to_string(d) + " outside [1, " +
                          std::to_string(std::min(D, n)) + "]");
  PcaModel m;
  m.mean = X.colwise().mean().transpose();
  const Eigenpairs ep = centered_eigenpairs(X.rowwise() - m.mean.transpose());
  const Index rank = rank_of(ep.values);
  if (d > rank)
    throw ValidationError("target dimension " + std::to_string(d) + " exceeds the data rank; at most " +
                          std::to_string(rank) + " axes are achievable");

  m.components.resize(d, D);
  m.explained_variance = ep.values.head(d);
  for (Index j = 0; j < d; ++j) {
    VectorXr axis = ep.vectors.col(j).normalized();
    Index arg = 0;
    axis.cwiseAbs().maxCoeff(&arg);
    if (axis[arg] < 0.0) axis = -axis;
    m.components.row(j) = axis.transpose();
  }
  return m;
}

VectorXr pca_apply(const PcaModel& m, const Eigen::Ref<const VectorXr>& v) {
  if (v.size() != m.input_dim()) throw DimensionMismatch("pca_apply", m.input_dim(), v.size());
  return m.components * (v - m.mean);
}

MatrixXr pca_apply_rows(const PcaModel& m, const MatrixXr& X) {
  if (X.cols() != m.input_dim()) throw DimensionMismatch("pca_apply", m.input_dim(), X.cols());
  return (X.rowwise() - m.mean.transpose()) * m.components.transpose();
}

MatrixXr pca_reconstruct_rows(const PcaModel& m, const MatrixXr& Y) {
  if (Y.cols() != m.output_dim()) throw DimensionMismatch("pca_reconstruct", m.output_dim(), Y.cols());
  return (Y * m.components).rowwise() + m.mean.transpose();
}

}  // namespace hrrs
