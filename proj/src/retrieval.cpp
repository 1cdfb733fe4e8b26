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

#include "hrrs/retrieval.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <unordered_map>

namespace hrrs {

namespace {

using Idx = Eigen::Index;

RankedList rank_against(const Index& idx, const VectorXr& q, const std::string& query_id, std::size_t skip_row,
                        bool include_self) {
  RankedList rl;
  rl.query_id = query_id;
  rl.self_included = include_self;
  rl.ranked.reserve(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) {
    if (i == skip_row) continue;
    const double d = std::sqrt((idx.matrix.row(static_cast<Idx>(i)).transpose() - q).squaredNorm());
    rl.ranked.push_back({idx.ids[i], d});
  }
  // The query itself stays at rank 1 even if other rows coincide with it.
  std::sort(rl.ranked.begin(), rl.ranked.end(), [&](const RankedItem& a, const RankedItem& b) {
    if (a.distance != b.distance) return a.distance < b.distance;
    if ((a.id == query_id) != (b.id == query_id)) return a.id == query_id;
    return a.id < b.id;
  });
  return rl;
}

}  // namespace

std::size_t Index::row_of(const std::string& id) const {
  for (std::size_t i = 0; i < ids.size(); ++i)
    if (ids[i] == id) return i;
  throw ValidationError("id \"" + id + "\" is not in the index");
}

Index build_index(const std::vector<std::pair<std::string, EncodedFeature>>& features,
                  const DatasetManifest& manifest) {
  if (features.empty()) throw ValidationError("cannot build an empty index");
  std::unordered_map<std::string, const ManifestEntry*> by_id;
  for (const auto& e : manifest.entries) by_id[e.id] = &e;

  Index idx;
  idx.tag = features.front().second.tag;
  const Idx d = features.front().second.vector.size();
  if (d < 1) throw ValidationError("features must have dimension >= 1");
  idx.matrix.resize(static_cast<Idx>(features.size()), d);
  std::set<std::string> seen;
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& [id, f] = features[i];
    if (f.tag != idx.tag)
      throw ValidationError("mixed encoder tags in index: " + to_string(idx.tag) + " and " + to_string(f.tag));
    if (f.vector.size() != d) throw DimensionMismatch("feature \"" + id + "\"", d, f.vector.size());
    if (!seen.insert(id).second) throw ValidationError("duplicate id \"" + id + "\" in index");
    const auto it = by_id.find(id);
    if (it == by_id.end()) throw ValidationError("id \"" + id + "\" is not in the manifest");
    auto n = l2_normalize(f.vector);
    idx.ids.push_back(id);
    idx.classes.push_back(it->second->class_label);
    idx.zero_row.push_back(n.zero_norm);
    idx.matrix.row(static_cast<Idx>(i)) = n.vector.transpose();
  }
  return idx;
}

RankedList query(const Index& idx, const std::string& query_id, bool include_self) {
  const std::size_t row = idx.row_of(query_id);
  const VectorXr q = idx.matrix.row(static_cast<Idx>(row)).transpose();
  return rank_against(idx, q, query_id, include_self ? idx.size() : row, include_self);
}

RankedList query_vector(const Index& idx, const VectorXr& q, const std::string& query_id) {
  if (q.size() != idx.dim()) throw DimensionMismatch("query vector", idx.dim(), q.size());
  return rank_against(idx, l2_normalize(q).vector, query_id, idx.size(), false);
}

}  // namespace hrrs
