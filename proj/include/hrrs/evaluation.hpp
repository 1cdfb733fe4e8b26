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

#include <filesystem>
#include <set>
#include <string>
#include <vector>

#include "hrrs/retrieval.hpp"

namespace hrrs {

/// Raised when a query has no ground truth (a singleton class with the query excluded).
class EmptyGroundTruth : public ValidationError {
 public:
  using ValidationError::ValidationError;
};

/// Ranks (1-based, ascending) at which ground-truth items appear, plus the
/// ground-truth size NG. Fewer ranks than NG means some were never retrieved.
struct QueryJudgment {
  std::string query_id;
  std::vector<std::size_t> relevant_ranks;
  std::size_t ground_truth = 0;  // NG(q)
  std::size_t list_length = 0;
};

/// Locates every relevant id in the list. For a self-excluded list the query
/// is dropped from `relevant` first.
QueryJudgment judge(const RankedList& rl, const std::set<std::string>& relevant);

/// Normalized modified retrieval rank with penalty threshold K = 2 NG.
double nmrr(const QueryJudgment& j);
double anmrr(const std::vector<double>& nmrr_values);

/// Mean over the NG ground-truth items of precision at each hit.
double average_precision(const QueryJudgment& j);
double mean_ap(const std::vector<double>& avep_values);

double precision_at_k(const QueryJudgment& j, std::size_t k);

inline const std::vector<std::size_t> kDefaultPrecisionCutoffs = {5, 10, 50, 100, 1000};

struct EvalOptions {
  bool self_included = true;
  std::vector<std::size_t> k_list = kDefaultPrecisionCutoffs;
};

struct QueryMetrics {
  std::string query_id;
  std::string class_label;
  double nmrr = 0.0;
  double avep = 0.0;
  std::vector<double> p_at_k;  // aligned with k_list; NaN when k exceeds the list
};

struct EvalReport {
  std::vector<QueryMetrics> per_query;
  double anmrr = 0.0;
  double map = 0.0;
  std::vector<double> p_at_k;  // mean over queries where defined
  EvalOptions protocol;
  std::vector<std::string> skipped;  // queries without ground truth
};

/// Uses every indexed image as a query; relevance is "same class label".
EvalReport evaluate_dataset(const Index& idx, const DatasetManifest& manifest, const EvalOptions& opts = {});

/// Writes per_query.csv, aggregate.csv and summary.json into `dir`.
void write_eval_report(const EvalReport& r, const std::filesystem::path& dir);

}  // namespace hrrs
