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

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "hrrs/core.hpp"

namespace hrrs {

// ================================================================
// Tensor
// ================================================================

/// Dense row-major float32 array. Feature maps are laid out [height, width, channels].
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<float> data;

  Tensor() = default;
  /// Validates rank >= 1, no zero dimension, and data.size() == prod(shape).
  Tensor(std::vector<std::size_t> shape, std::vector<float> data);
  /// Zero-filled tensor of the given shape.
  explicit Tensor(std::vector<std::size_t> shape);

  std::size_t rank() const { return shape.size(); }
  std::size_t numel() const { return data.size(); }

  float& at(std::size_t y, std::size_t x, std::size_t c) {
    return data[(y * shape[1] + x) * shape[2] + c];
  }
  float at(std::size_t y, std::size_t x, std::size_t c) const {
    return data[(y * shape[1] + x) * shape[2] + c];
  }

  bool operator==(const Tensor&) const = default;
};

inline constexpr std::uint32_t kTensorFormatVersion = 1;
inline constexpr std::uint32_t kDtypeFloat32 = 1;

std::size_t shape_numel(std::span<const std::size_t> shape);

void write_tensor(const Tensor& t, const std::filesystem::path& path);
Tensor read_tensor(const std::filesystem::path& path);

/// Rank-1 tensor from a vector (narrowed to float32).
Tensor tensor_from_vector(const VectorXr& v);
/// Rank-2 tensor from a matrix (row-major, narrowed to float32).
Tensor tensor_from_matrix(const MatrixXr& m);
VectorXr tensor_to_vector(const Tensor& t);
/// Views a rank-2 tensor as a matrix; a rank-1 tensor becomes a single row.
MatrixXr tensor_to_matrix(const Tensor& t);

// ================================================================
// DatasetManifest
// ================================================================

enum class Split { kTrain, kTest, kAll };

Split parse_split(const std::string& token);
std::string to_string(Split s);

struct ManifestEntry {
  std::string id;
  std::string class_label;
  std::string tensor_path;
  Split split = Split::kAll;
};

struct DatasetManifest {
  std::vector<ManifestEntry> entries;
  /// class label -> 0..C-1, assigned in lexicographic label order.
  std::map<std::string, int> class_index;
  /// Directory that relative tensor paths resolve against.
  std::filesystem::path base_dir;

  std::size_t num_classes() const { return class_index.size(); }
  int label_of(const ManifestEntry& e) const { return class_index.at(e.class_label); }
  std::filesystem::path resolve(const ManifestEntry& e) const;
  /// Linear lookup; throws ValidationError for an unknown id.
  const ManifestEntry& entry(const std::string& id) const;
};

/// Validates entries (unique ids, non-empty labels) and builds the class index.
DatasetManifest make_manifest(std::vector<ManifestEntry> entries,
                              std::filesystem::path base_dir = {});

DatasetManifest load_manifest(const std::filesystem::path& path);
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);

/// Loads every tensor in the manifest, in entry order.
std::vector<Tensor> load_tensors(const DatasetManifest& m);

// ================================================================
// synthetic data
// ================================================================

struct SyntheticOptions {
  std::size_t classes = 3;
  std::size_t per_class = 20;
  std::vector<std::size_t> map_shape = {6, 6, 16};
  double separation = 8.0;
  std::uint64_t seed = 0;
};

struct SyntheticDataset {
  DatasetManifest manifest;
  std::vector<Tensor> maps;  // aligned with manifest.entries
  MatrixXr class_means;      // classes x channels
};

/// Class j's maps are mu_j plus a fixed class-specific spatial pattern plus unit
/// Gaussian noise. The channel-mean vectors mu_j are pairwise at least
/// `separation` apart (exactly, when classes <= channels). The pattern assigns
/// each site one of four class-specific part vectors of norm `separation`,
/// centred to zero spatial mean. separation = 0 makes all classes identical.
/// Entries are split 80/20 per class into train/test.
SyntheticDataset gen_synthetic(const SyntheticOptions& opts);

/// Writes the maps as FTNS files plus manifest.json under `dir`; returns the manifest path.
std::filesystem::path write_synthetic(const SyntheticDataset& ds, const std::filesystem::path& dir);

}  // namespace hrrs
