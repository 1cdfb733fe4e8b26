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

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "hrrs/evaluation.hpp"
#include "hrrs/model_io.hpp"

namespace hrrs {

// ================================================================
// dataset-level helpers
// ================================================================

/// Which manifest entries a step uses. kAll selects every entry.
bool split_selected(Split entry_split, Split wanted);

/// Stacks the descriptors of every selected map into one matrix.
MatrixXr collect_descriptors(const DatasetManifest& m, const std::vector<Tensor>& maps, bool apply_relu,
                             Split wanted = Split::kAll);

/// Default dictionary sizes: bovw 1000, vlad 100, ifk 100.
Eigen::Index default_codebook_size(EncoderTag kind);

struct EncodeModels {
  const Codebook* codebook = nullptr;  // bovw, vlad
  const GmmModel* gmm = nullptr;       // ifk
  const MlpconvHead<float>* head = nullptr;  // ldcnn
};

/// Encodes every manifest entry (tensors aligned with m.entries).
FeatureSet encode_dataset(const DatasetManifest& m, const std::vector<Tensor>& tensors, EncoderTag kind,
                          const EncodeModels& models, bool apply_relu, double alpha = 0.5);

/// Features restricted to (and ordered like) the manifest's entries.
MatrixXr feature_matrix(const FeatureSet& features, const DatasetManifest& m);

/// Projects every feature with `pca` and re-normalizes; tag is preserved.
FeatureSet project_features(const FeatureSet& features, const PcaModel& pca);

/// Splits by the manifest's train/test tokens. Entries marked "all" are
/// assigned per class: a seeded 80% to train, the rest to test.
struct TrainTestSplit {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};
TrainTestSplit split_train_test(const DatasetManifest& m, std::uint64_t seed, double train_fraction = 0.8);

LabeledMaps gather_labeled(const DatasetManifest& m, const std::vector<Tensor>& maps,
                           const std::vector<std::size_t>& rows);

/// Trains a float head on the manifest's train split, tracking the test
/// split. Input shape and class count come from the data; `base` supplies
/// hidden sizes, dropout and init.
HeadCheckpoint train_head_on_manifest(const DatasetManifest& m, const std::vector<Tensor>& maps,
                                      const HeadConfig& base, const TrainHyperparams& hp,
                                      const EpochCallback& on_epoch = {});

struct PcaSweepRow {
  Eigen::Index dim = 0;
  EvalReport report;
};

/// Fits PCA on `fit_set` (ids from fit_manifest) for each requested dimension,
/// projects `features`, and evaluates retrieval. Dimensions above the
/// achievable rank are skipped and reported through `skipped`.
std::vector<PcaSweepRow> pca_sweep(const FeatureSet& features, const DatasetManifest& manifest,
                                   const DatasetManifest& fit_manifest, const std::vector<Eigen::Index>& dims,
                                   const EvalOptions& eval, std::vector<Eigen::Index>* skipped = nullptr);

// ================================================================
// pipeline configuration and sweeps
// ================================================================

struct PipelineConfig {
  std::filesystem::path manifest;
  struct Encoder {
    EncoderTag kind = EncoderTag::kVlad;
    std::optional<Eigen::Index> k;  // unset: per-kind default_codebook_size
    double alpha = 0.5;
    bool relu = true;
    int max_iter = 100;
    double tol = 1e-4;
  } encoder;
  struct Pca {
    std::optional<Eigen::Index> d;
  } pca;
  struct Head {
    HeadConfig config;  // in_* and classes are taken from the data
    TrainHyperparams hp;
    std::filesystem::path checkpoint;  // empty = train inside the cell
  } head;
  EvalOptions eval;
  struct Sweep {
    std::vector<bool> relu;
    std::vector<EncoderTag> encoder;
    std::vector<Eigen::Index> pca_dims;  // 0 = no PCA
  } sweep;
  std::uint64_t seed = 0;
  int workers = 1;
};

/// Validates against the schema (unknown keys rejected) and fills defaults.
PipelineConfig parse_pipeline_config(const std::string& json_text, const std::filesystem::path& base_dir = {});
/// Effective config with every default filled in.
std::string pipeline_config_json(const PipelineConfig& c);

/// 64-bit FNV-1a, hex encoded.
std::string content_hash(const std::string& bytes);

struct SweepCell {
  EncoderTag encoder = EncoderTag::kVlad;
  bool relu = true;
  Eigen::Index pca_dim = 0;
};

struct SweepRow {
  SweepCell cell;
  double anmrr = 0.0;
  double map = 0.0;
  std::vector<double> p_at_k;
  bool cache_hit = false;
};

using LogFn = std::function<void(const std::string&)>;

/// Evaluates the Cartesian product of the sweep axes. Each cell's result is
/// cached under `cache_dir` by a content hash of the cell config and the
/// manifest bytes; a rerun reads the cache instead of recomputing.
std::vector<SweepRow> run_sweep(const PipelineConfig& config, const std::filesystem::path& cache_dir,
                                const LogFn& log = {});

std::string sweep_csv(const PipelineConfig& config, const std::vector<SweepRow>& rows);

}  // namespace hrrs
