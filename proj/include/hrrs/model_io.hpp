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
#include <string>
#include <utility>
#include <vector>

#include "hrrs/codebooks.hpp"
#include "hrrs/encoders.hpp"
#include "hrrs/ldcnn_head.hpp"
#include "hrrs/reduction.hpp"
#include "hrrs/retrieval.hpp"

// Model bundles are directories of FTNS tensors plus one JSON sidecar.

namespace hrrs {

namespace fs = std::filesystem;

void save_codebook(const Codebook& cb, const fs::path& dir);
Codebook load_codebook(const fs::path& dir);

void save_gmm(const GmmModel& g, const fs::path& dir);
GmmModel load_gmm(const fs::path& dir);

/// "kmeans" or "gmm", read from the bundle's sidecar.
std::string bundle_kind(const fs::path& dir);

void save_pca(const PcaModel& m, const fs::path& dir);
PcaModel load_pca(const fs::path& dir);

struct HeadCheckpoint {
  MlpconvHead<float> head;
  std::vector<EpochRecord> history;
  std::vector<LrDropEvent> lr_drops;
};

void save_head(const HeadCheckpoint& ckpt, const fs::path& dir);
HeadCheckpoint load_head(const fs::path& dir);

/// One FTNS vector per image plus index.json {encoder_tag, dims, vectors: {id: path}}.
using FeatureSet = std::vector<std::pair<std::string, EncodedFeature>>;
void save_features(const FeatureSet& features, const fs::path& dir);
FeatureSet load_features(const fs::path& dir);

void save_index(const Index& idx, const fs::path& dir);
Index load_index(const fs::path& dir);

/// Writes `text` to `path`, creating parent directories.
void write_text(const fs::path& path, const std::string& text);
std::string read_text(const fs::path& path);

}  // namespace hrrs
