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

#include <random>

#include "hrrs/codebooks.hpp"
#include "hrrs/encoders.hpp"
#include "oracles/fisher_oracle.hpp"

namespace hrrs::oracle {

/// Random diagonal GMM and descriptor set for Fisher checks.
struct FisherFixture {
  GmmModel model;
  DescriptorSet descriptors;

  DiagGmm as_oracle() const {
    DiagGmm g;
    for (Eigen::Index j = 0; j < model.k(); ++j) {
      g.w.push_back(model.weights(j));
      g.mu.emplace_back();
      g.sigma.emplace_back();
      for (Eigen::Index r = 0; r < model.dim(); ++r) {
        g.mu.back().push_back(model.means(j, r));
        g.sigma.back().push_back(std::sqrt(model.variances(j, r)));
      }
    }
    return g;
  }
  std::vector<std::vector<double>> rows() const {
    std::vector<std::vector<double>> X;
    for (Eigen::Index i = 0; i < descriptors.size(); ++i)
      X.emplace_back(descriptors.descriptors.row(i).begin(), descriptors.descriptors.row(i).end());
    return X;
  }
};

inline FisherFixture random_fisher_fixture(std::mt19937_64& rng, Eigen::Index k, Eigen::Index d,
                                           Eigen::Index m) {
  std::uniform_real_distribution<double> u(0.2, 1.0), v(0.5, 2.0);
  std::normal_distribution<double> g(0.0, 1.0);
  FisherFixture fx;
  fx.model.weights.resize(k);
  for (auto& w : fx.model.weights) w = u(rng);
  fx.model.weights /= fx.model.weights.sum();
  fx.model.means.resize(k, d);
  fx.model.variances.resize(k, d);
  for (Eigen::Index i = 0; i < k * d; ++i) {
    fx.model.means.data()[i] = 1.5 * g(rng);
    fx.model.variances.data()[i] = v(rng);
  }
  fx.descriptors.descriptors.resize(m, d);
  for (Eigen::Index i = 0; i < m * d; ++i) fx.descriptors.descriptors.data()[i] = 1.5 * g(rng);
  return fx;
}

}  // namespace hrrs::oracle
