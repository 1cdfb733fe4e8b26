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
#include <utility>
#include <vector>

#include "hrrs/encoders.hpp"
#include "hrrs/tensor_store.hpp"

namespace hrrs {

/// Exhaustive Euclidean index over L2-normalized rows.
struct Index {
  std::vector<std::string> ids;
  std::vector<std::string> classes;  // aligned with ids
  MatrixXr matrix;                   // N x d, unit rows (zero rows kept as-is)
  std::vector<bool> zero_row;
  EncoderTag tag = EncoderTag::kFcRaw;

  std::size_t size() const { return ids.size(); }
  Eigen::Index dim() const { return matrix.cols(); }
  /// Row of `id`; throws ValidationError if absent.
  std::size_t row_of(const std::string& id) const;
};

struct RankedItem {
  std::string id;
  double distance = 0.0;
};

struct RankedList {
  std::string query_id;
  std::vector<RankedItem> ranked;  // ascending distance, ties by id
  bool self_included = true;
};

/// Features are (image id, feature) pairs; every id must appear in the manifest.
Index build_index(const std::vector<std::pair<std::string, EncodedFeature>>& features,
                  const DatasetManifest& manifest);

RankedList query(const Index& idx, const std::string& query_id, bool include_self = true);

/// Ranks the index against an external vector (normalized first).
RankedList query_vector(const Index& idx, const VectorXr& q, const std::string& query_id = {});

}  // namespace hrrs
