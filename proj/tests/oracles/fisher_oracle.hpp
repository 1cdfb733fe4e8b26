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

// Raw Fisher vector reconstructed from finite differences of the mixture's
// mean log-likelihood. Shares no code with the encoder.

#include <cmath>
#include <numbers>
#include <vector>

#include "oracles/gradient.hpp"

namespace hrrs::oracle {

struct DiagGmm {
  std::vector<double> w;                   // k
  std::vector<std::vector<double>> mu;     // k x d
  std::vector<std::vector<double>> sigma;  // k x d, standard deviations
};

inline double mean_loglik(const DiagGmm& g, const std::vector<std::vector<double>>& X) {
  double total = 0.0;
  for (const auto& x : X) {
    double p = 0.0;
    for (std::size_t j = 0; j < g.w.size(); ++j) {
      double dens = g.w[j];
      for (std::size_t r = 0; r < x.size(); ++r) {
        const double z = (x[r] - g.mu[j][r]) / g.sigma[j][r];
        dens *= std::exp(-0.5 * z * z) / (std::sqrt(2.0 * std::numbers::pi) * g.sigma[j][r]);
      }
      p += dens;
    }
    total += std::log(p);
  }
  return total / static_cast<double>(X.size());
}

/// [mean part | variance part], each k*d component-major:
///   mean:     sigma / sqrt(w)    * dL/dmu
///   variance: sigma / sqrt(2 w)  * dL/dsigma
/// with L the mean log-likelihood.
inline std::vector<double> fisher_by_differences(DiagGmm g, const std::vector<std::vector<double>>& X,
                                                 double h = 1e-3) {
  const std::size_t k = g.w.size(), d = g.mu[0].size();
  std::vector<double> out(2 * k * d);
  auto f = [&] { return mean_loglik(g, X); };
  for (std::size_t j = 0; j < k; ++j)
    for (std::size_t r = 0; r < d; ++r) {
      const double s = g.sigma[j][r];
      const double dmu = five_point_difference(g.mu[j][r], h * s, f);
      const double dsig = five_point_difference(g.sigma[j][r], h * s, f);
      out[j * d + r] = s / std::sqrt(g.w[j]) * dmu;
      out[k * d + j * d + r] = s / std::sqrt(2.0 * g.w[j]) * dsig;
    }
  return out;
}

}  // namespace hrrs::oracle
