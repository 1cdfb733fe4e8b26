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

#include "hrrs/encoders.hpp"

#include <cmath>

namespace hrrs {

namespace {

using Index = Eigen::Index;

void check_descriptors(const DescriptorSet& D, Index expected_dim, const char* who) {
  if (D.size() == 0) throw ValidationError(std::string(who) + ": empty descriptor set (no spatial sites)");
  if (D.dim() != expected_dim) throw DimensionMismatch(who, expected_dim, D.dim());
}

}  // namespace

std::string to_string(EncoderTag t) {
  switch (t) {
    case EncoderTag::kBovw: return "bovw";
    case EncoderTag::kVlad: return "vlad";
    case EncoderTag::kIfk: return "ifk";
    case EncoderTag::kFcRaw: return "fc_raw";
    case EncoderTag::kLdcnn: return "ldcnn";
  }
  return "fc_raw";
}

EncoderTag parse_encoder_tag(const std::string& s) {
  if (s == "bovw") return EncoderTag::kBovw;
  if (s == "vlad") return EncoderTag::kVlad;
  if (s == "ifk") return EncoderTag::kIfk;
  if (s == "fc_raw") return EncoderTag::kFcRaw;
  if (s == "ldcnn") return EncoderTag::kLdcnn;
  throw ValidationError("unknown encoder tag \"" + s + "\"");
}

DescriptorSet extract_descriptors(const Tensor& map, bool apply_relu, std::string source_id) {
  if (map.rank() != 3)
    throw ValidationError("feature map must be rank 3 [h, w, c], got rank " + std::to_string(map.rank()));
  const auto sites = static_cast<Index>(map.shape[0] * map.shape[1]);
  const auto channels = static_cast<Index>(map.shape[2]);
  DescriptorSet D;
  D.source_id = std::move(source_id);
  D.descriptors = Eigen::Map<const RowMatrix<float>>(map.data.data(), sites, channels).cast<double>();
  if (apply_relu) D.descriptors = relu(D.descriptors);
  return D;
}

EncodedFeature finalize_feature(const VectorXr& raw, EncoderTag tag) {
  auto n = l2_normalize(raw);
  return {std::move(n.vector), tag, !n.zero_norm};
}

EncodedFeature encode_bovw(const Codebook& cb, const DescriptorSet& D) {
  check_descriptors(D, cb.dim(), "encode_bovw");
  VectorXr hist = VectorXr::Zero(cb.k());
  for (Index i = 0; i < D.size(); ++i) hist[kmeans_assign(cb, D.descriptors.row(i).transpose())] += 1.0;
  return finalize_feature(hist, EncoderTag::kBovw);
}

VectorXr vlad_raw(const Codebook& cb, const DescriptorSet& D) {
  check_descriptors(D, cb.dim(), "encode_vlad");
  const Index d = cb.dim();
  VectorXr v = VectorXr::Zero(cb.k() * d);
  for (Index i = 0; i < D.size(); ++i) {
    const auto x = D.descriptors.row(i).transpose();
    const Index j = kmeans_assign(cb, x);
    v.segment(j * d, d) += x - cb.centroids.row(j).transpose();
  }
  return v;
}

EncodedFeature encode_vlad(const Codebook& cb, const DescriptorSet& D) {
  return finalize_feature(vlad_raw(cb, D), EncoderTag::kVlad);
}

VectorXr fisher_vector_raw(const GmmModel& g, const DescriptorSet& D) {
  check_descriptors(D, g.dim(), "encode_ifk");
  const Index k = g.k();
  const Index d = g.dim();
  const double m = static_cast<double>(D.size());
  const MatrixXr sigma = g.variances.cwiseSqrt();

  MatrixXr mean_part = MatrixXr::Zero(k, d);
  MatrixXr var_part = MatrixXr::Zero(k, d);
  for (Index i = 0; i < D.size(); ++i) {
    const VectorXr x = D.descriptors.row(i).transpose();
    const VectorXr gamma = gmm_posteriors(g, x);
    for (Index j = 0; j < k; ++j) {
      if (gamma[j] == 0.0) continue;
      const Eigen::ArrayXd z = (x.transpose() - g.means.row(j)).array() / sigma.row(j).array();
      mean_part.row(j).array() += gamma[j] * z;
      var_part.row(j).array() += gamma[j] * (z.square() - 1.0);
    }
  }
  VectorXr fv(2 * k * d);
  for (Index j = 0; j < k; ++j) {
    const double w = g.weights[j];
    const double mean_scale = w > 0.0 ? 1.0 / (m * std::sqrt(w)) : 0.0;
    const double var_scale = w > 0.0 ? 1.0 / (m * std::sqrt(2.0 * w)) : 0.0;
    fv.segment(j * d, d) = mean_scale * mean_part.row(j).transpose();
    fv.segment(k * d + j * d, d) = var_scale * var_part.row(j).transpose();
  }
  return fv;
}

EncodedFeature encode_ifk(const GmmModel& g, const DescriptorSet& D, double alpha) {
  return finalize_feature(power_normalize(fisher_vector_raw(g, D), alpha), EncoderTag::kIfk);
}

EncodedFeature encode_fc(const Tensor& fc, bool apply_relu) {
  VectorXr v = tensor_to_vector(fc);
  if (apply_relu) v = relu(v);
  return finalize_feature(v, EncoderTag::kFcRaw);
}

}  // namespace hrrs
