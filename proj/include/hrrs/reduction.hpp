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

#include "hrrs/core.hpp"

namespace hrrs {

/// Plain (unwhitened) PCA projection. Variances use the 1/N convention, so
/// the mean squared reconstruction error on the training set equals the sum
/// of the discarded eigenvalues.
struct PcaModel {
  VectorXr mean;                // D
  MatrixXr components;          // d x D, orthonormal rows
  VectorXr explained_variance;  // d, nonincreasing

  Eigen::Index input_dim() const { return mean.size(); }
  Eigen::Index output_dim() const { return components.rows(); }
};

/// Eigenvalues of the centered 1/N covariance of X, descending, length min(N, D).
VectorXr pca_spectrum(const MatrixXr& X);

/// Numerical rank of the centered data (eigenvalues above 1e-10 * largest).
Eigen::Index pca_rank(const MatrixXr& X);

/// Top-d principal axes of X (N x D). Each axis is signed so that its
/// largest-magnitude entry is positive.
PcaModel pca_fit(const MatrixXr& X, Eigen::Index d);

VectorXr pca_apply(const PcaModel& m, const Eigen::Ref<const VectorXr>& v);
/// Projects every row of X.
MatrixXr pca_apply_rows(const PcaModel& m, const MatrixXr& X);
/// Maps projected rows back to the input space.
MatrixXr pca_reconstruct_rows(const PcaModel& m, const MatrixXr& Y);

}  // namespace hrrs
