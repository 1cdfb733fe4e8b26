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

#include <string>

#include "hrrs/codebooks.hpp"
#include "hrrs/core.hpp"
#include "hrrs/tensor_store.hpp"

namespace hrrs {

enum class EncoderTag { kBovw, kVlad, kIfk, kFcRaw, kLdcnn };

std::string to_string(EncoderTag t);
EncoderTag parse_encoder_tag(const std::string& s);

/// Local descriptors of one feature map: one row per spatial site (row-major
/// site order), one column per channel.
struct DescriptorSet {
  MatrixXr descriptors;
  std::string source_id;

  Eigen::Index size() const { return descriptors.rows(); }
  Eigen::Index dim() const { return descriptors.cols(); }
};

struct EncodedFeature {
  VectorXr vector;
  EncoderTag tag = EncoderTag::kFcRaw;
  /// False when the raw vector was zero and normalization was skipped.
  bool normalized = false;
};

// ------------------------------------------------ elementwise helpers

template <class Derived>
auto relu(const Eigen::MatrixBase<Derived>& v) {
  return v.cwiseMax(typename Derived::Scalar(0));
}

/// Signed power normalization sign(z)|z|^alpha.
template <class Derived>
Vector<typename Derived::Scalar> power_normalize(const Eigen::MatrixBase<Derived>& v,
                                                 typename Derived::Scalar alpha) {
  using S = typename Derived::Scalar;
  if (!(alpha > S(0) && alpha <= S(1))) throw ValidationError("alpha must lie in (0, 1]");
  return v.unaryExpr([alpha](S z) {
    const S m = std::pow(std::abs(z), alpha);
    return z < S(0) ? -m : m;
  });
}

inline constexpr double kZeroNormThreshold = 1e-12;

template <class Scalar>
struct Normalized {
  Vector<Scalar> vector;
  bool zero_norm = false;
};

/// v / |v|_2, or v unchanged with `zero_norm` set when |v|_2 <= 1e-12.
template <class Derived>
Normalized<typename Derived::Scalar> l2_normalize(const Eigen::MatrixBase<Derived>& v) {
  using S = typename Derived::Scalar;
  const S n = v.norm();
  if (!(n > S(kZeroNormThreshold))) return {v, true};
  return {v / n, false};
}

// ------------------------------------------------ descriptors and encoders

/// Flattens an [h, w, c] map into h*w descriptors of dimension c.
DescriptorSet extract_descriptors(const Tensor& map, bool apply_relu, std::string source_id = {});

/// k-bin histogram of hard assignments, L2-normalized.
EncodedFeature encode_bovw(const Codebook& cb, const DescriptorSet& D);

/// Per-centroid residual sums (k*d), globally L2-normalized.
VectorXr vlad_raw(const Codebook& cb, const DescriptorSet& D);
EncodedFeature encode_vlad(const Codebook& cb, const DescriptorSet& D);

/// Fisher vector w.r.t. means then variances, before any normalization (2*k*d,
/// laid out [mean part k*d | variance part k*d], component-major).
VectorXr fisher_vector_raw(const GmmModel& g, const DescriptorSet& D);
/// Improved Fisher vector: signed power normalization, then L2.
EncodedFeature encode_ifk(const GmmModel& g, const DescriptorSet& D, double alpha = 0.5);

/// Fully connected activation vector, optional ReLU, L2-normalized.
EncodedFeature encode_fc(const Tensor& fc, bool apply_relu);

/// Wraps a raw vector: L2-normalizes and records the tag.
EncodedFeature finalize_feature(const VectorXr& raw, EncoderTag tag);

}  // namespace hrrs
