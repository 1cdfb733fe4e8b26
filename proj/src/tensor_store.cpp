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

#include "hrrs/tensor_store.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <random>
#include <set>

#include "json.hpp"

static_assert(std::endian::native == std::endian::little,
              "FTNS payloads are written as native little-endian memory");

namespace hrrs {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr char kMagic[4] = {'F', 'T', 'N', 'S'};

template <class T>
void put(std::ofstream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
bool get(std::ifstream& in, T& v) {
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  return static_cast<std::size_t>(in.gcount()) == sizeof(T);
}

void check_shape(std::span<const std::size_t> shape) {
  if (shape.empty()) throw ValidationError("tensor rank must be >= 1");
  for (std::size_t i = 0; i < shape.size(); ++i)
    if (shape[i] == 0)
      throw ValidationError("tensor dimension " + std::to_string(i) + " is empty");
}

}  // namespace

std::size_t shape_numel(std::span<const std::size_t> shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

Tensor::Tensor(std::vector<std::size_t> s, std::vector<float> d)
    : shape(std::move(s)), data(std::move(d)) {
  check_shape(shape);
  if (data.size() != shape_numel(shape))
    throw ValidationError("tensor data length " + std::to_string(data.size()) +
                          " does not match shape product " + std::to_string(shape_numel(shape)));
}

Tensor::Tensor(std::vector<std::size_t> s) : shape(std::move(s)) {
  check_shape(shape);
  data.assign(shape_numel(shape), 0.0f);
}

void write_tensor(const Tensor& t, const fs::path& path) {
  check_shape(t.shape);
  if (t.data.size() != shape_numel(t.shape))
    throw ValidationError("tensor data length does not match shape");
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open for writing: " + path.string());
  out.write(kMagic, 4);
  put<std::uint32_t>(out, kTensorFormatVersion);
  put<std::uint32_t>(out, kDtypeFloat32);
  put<std::uint32_t>(out, static_cast<std::uint32_t>(t.shape.size()));
  for (auto d : t.shape) put<std::uint64_t>(out, d);
  out.write(reinterpret_cast<const char*>(t.data.data()),
            static_cast<std::streamsize>(t.data.size() * sizeof(float)));
  if (!out) throw IoError("write failed: " + path.string());
}

Tensor read_tensor(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open for reading: " + path.string());
  const std::string where = " in " + path.string();

  char magic[4];
  in.read(magic, 4);
  if (in.gcount() != 4 || std::memcmp(magic, kMagic, 4) != 0)
    throw FormatError("magic", "expected \"FTNS\"" + where);
  std::uint32_t version = 0, dtype = 0, rank = 0;
  if (!get(in, version)) throw FormatError("version", "truncated header" + where);
  if (version != kTensorFormatVersion)
    throw FormatError("version", "unsupported version " + std::to_string(version) + where);
  if (!get(in, dtype)) throw FormatError("dtype", "truncated header" + where);
  if (dtype != kDtypeFloat32)
    throw FormatError("dtype", "unknown dtype code " + std::to_string(dtype) + where);
  if (!get(in, rank)) throw FormatError("rank", "truncated header" + where);
  if (rank == 0) throw FormatError("rank", "rank must be >= 1" + where);

  std::vector<std::size_t> shape(rank);
  for (auto& d : shape) {
    std::uint64_t v = 0;
    if (!get(in, v)) throw FormatError("dims", "truncated header" + where);
    if (v == 0) throw FormatError("dims", "empty dimension" + where);
    d = static_cast<std::size_t>(v);
  }

  const std::size_t n = shape_numel(shape);
  std::vector<float> data(n);
  in.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(n * sizeof(float)));
  const auto got = static_cast<std::size_t>(in.gcount());
  if (got != n * sizeof(float))
    throw FormatError("payload", "length mismatch: expected " + std::to_string(n * sizeof(float)) +
                                     " bytes, got " + std::to_string(got) + where);
  if (in.peek() != std::ifstream::traits_type::eof())
    throw FormatError("payload", "trailing bytes after payload" + where);

  for (std::size_t i = 0; i < n; ++i)
    if (!std::isfinite(data[i]))
      throw FormatError("payload", "non-finite value at flat index " + std::to_string(i) + where);

  return Tensor(std::move(shape), std::move(data));
}

Tensor tensor_from_vector(const VectorXr& v) {
  std::vector<float> d(static_cast<std::size_t>(v.size()));
  for (Eigen::Index i = 0; i < v.size(); ++i) d[i] = static_cast<float>(v[i]);
  const std::size_t n = d.size();
  return Tensor({n}, std::move(d));
}

Tensor tensor_from_matrix(const MatrixXr& m) {
  std::vector<float> d(static_cast<std::size_t>(m.size()));
  Eigen::Map<RowMatrix<float>>(d.data(), m.rows(), m.cols()) = m.cast<float>();
  return Tensor({static_cast<std::size_t>(m.rows()), static_cast<std::size_t>(m.cols())},
                std::move(d));
}

VectorXr tensor_to_vector(const Tensor& t) {
  return Eigen::Map<const Vector<float>>(t.data.data(), static_cast<Eigen::Index>(t.numel()))
      .cast<double>();
}

MatrixXr tensor_to_matrix(const Tensor& t) {
  if (t.rank() == 1) return tensor_to_vector(t).transpose();
  if (t.rank() != 2) throw ValidationError("expected a rank-2 tensor");
  return Eigen::Map<const RowMatrix<float>>(t.data.data(), static_cast<Eigen::Index>(t.shape[0]),
                                            static_cast<Eigen::Index>(t.shape[1]))
      .cast<double>();
}

// ---------------------------------------------------------------- manifest

Split parse_split(const std::string& token) {
  if (token == "train") return Split::kTrain;
  if (token == "test") return Split::kTest;
  if (token == "all") return Split::kAll;
  throw ValidationError("unknown split token \"" + token + "\"");
}

std::string to_string(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kTest: return "test";
    case Split::kAll: return "all";
  }
  return "all";
}

fs::path DatasetManifest::resolve(const ManifestEntry& e) const {
  fs::path p(e.tensor_path);
  return p.is_absolute() ? p : base_dir / p;
}

const ManifestEntry& DatasetManifest::entry(const std::string& id) const {
  for (const auto& e : entries)
    if (e.id == id) return e;
  throw ValidationError("unknown image id \"" + id + "\"");
}

DatasetManifest make_manifest(std::vector<ManifestEntry> entries, fs::path base_dir) {
  if (entries.empty()) throw ValidationError("manifest has no entries");
  std::set<std::string> ids;
  std::set<std::string> labels;
  for (const auto& e : entries) {
    if (e.id.empty()) throw ValidationError("manifest entry with empty id");
    if (e.class_label.empty()) throw ValidationError("entry \"" + e.id + "\" has an empty class");
    if (!ids.insert(e.id).second) throw ValidationError("duplicate id \"" + e.id + "\"");
    labels.insert(e.class_label);
  }
  DatasetManifest m;
  m.entries = std::move(entries);
  m.base_dir = std::move(base_dir);
  int next = 0;
  for (const auto& l : labels) m.class_index[l] = next++;
  return m;
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path.string());
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& e) {
    throw FormatError("manifest", std::string("invalid JSON: ") + e.what());
  }
  if (!doc.is_object() || !doc.contains("entries") || !doc["entries"].is_array())
    throw FormatError("entries", "manifest must be an object with an \"entries\" array");

  std::vector<ManifestEntry> entries;
  for (const auto& j : doc["entries"]) {
    for (const char* key : {"id", "class", "path"})
      if (!j.contains(key) || !j[key].is_string())
        throw FormatError(key, "each entry needs a string \"" + std::string(key) + "\"");
    ManifestEntry e;
    e.id = j["id"].get<std::string>();
    e.class_label = j["class"].get<std::string>();
    e.tensor_path = j["path"].get<std::string>();
    e.split = j.contains("split") ? parse_split(j["split"].get<std::string>()) : Split::kAll;
    entries.push_back(std::move(e));
  }
  return make_manifest(std::move(entries), path.parent_path());
}

void save_manifest(const DatasetManifest& m, const fs::path& path) {
  json doc;
  doc["entries"] = json::array();
  for (const auto& e : m.entries)
    doc["entries"].push_back(
        {{"id", e.id}, {"class", e.class_label}, {"path", e.tensor_path}, {"split", to_string(e.split)}});
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path.string());
  out << doc.dump(2) << "\n";
}

std::vector<Tensor> load_tensors(const DatasetManifest& m) {
  std::vector<Tensor> out;
  out.reserve(m.entries.size());
  for (const auto& e : m.entries) out.push_back(read_tensor(m.resolve(e)));
  return out;
}

// ---------------------------------------------------------------- synthetic

SyntheticDataset gen_synthetic(const SyntheticOptions& opts) {
  if (opts.classes < 1) throw ValidationError("classes must be >= 1");
  if (opts.per_class < 1) throw ValidationError("per_class must be >= 1");
  if (!(opts.separation >= 0.0)) throw ValidationError("separation must be >= 0");
  check_shape(opts.map_shape);
  if (opts.map_shape.size() != 3) throw ValidationError("map_shape must be [h, w, c]");

  const std::size_t channels = opts.map_shape[2];
  const auto C = static_cast<Eigen::Index>(opts.classes);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> normal(0.0, 1.0);

  MatrixXr means = MatrixXr::Zero(C, static_cast<Eigen::Index>(channels));
  if (opts.separation > 0.0) {
    if (opts.classes <= channels) {
      // Scaled basis vectors: every pair is exactly `separation` apart.
      for (Eigen::Index j = 0; j < C; ++j) means(j, j) = opts.separation / std::sqrt(2.0);
    } else {
      for (Eigen::Index j = 0; j < C; ++j)
        for (Eigen::Index c = 0; c < means.cols(); ++c) means(j, c) = normal(rng);
      double min_dist = std::numeric_limits<double>::infinity();
      for (Eigen::Index a = 0; a < C; ++a)
        for (Eigen::Index b = a + 1; b < C; ++b)
          min_dist = std::min(min_dist, (means.row(a) - means.row(b)).norm());
      if (min_dist > 0.0) means *= opts.separation / min_dist;
    }
  }

  // Each class also gets a fixed spatial pattern: every site carries one of
  // kParts class-specific part vectors (norm = separation), centred so the
  // spatial mean of the pattern is zero and the channel means stay mu_j.
  constexpr std::size_t kParts = 4;
  const std::size_t sites = opts.map_shape[0] * opts.map_shape[1];
  std::vector<MatrixXr> patterns(opts.classes, MatrixXr::Zero(static_cast<Eigen::Index>(sites),
                                                             static_cast<Eigen::Index>(channels)));
  if (opts.separation > 0.0) {
    for (auto& pat : patterns) {
      MatrixXr parts(static_cast<Eigen::Index>(kParts), static_cast<Eigen::Index>(channels));
      for (Eigen::Index p = 0; p < parts.rows(); ++p) {
        for (Eigen::Index c = 0; c < parts.cols(); ++c) parts(p, c) = normal(rng);
        parts.row(p) *= opts.separation / parts.row(p).norm();
      }
      for (std::size_t s = 0; s < sites; ++s)
        pat.row(static_cast<Eigen::Index>(s)) = parts.row(static_cast<Eigen::Index>(rng() % kParts));
      pat.rowwise() -= pat.colwise().mean();
    }
  }

  SyntheticDataset ds;
  ds.class_means = means;
  std::vector<ManifestEntry> entries;
  const std::size_t n_train =
      std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(0.8 * opts.per_class)));

  for (std::size_t j = 0; j < opts.classes; ++j) {
    char label[32];
    std::snprintf(label, sizeof label, "class_%03zu", j);
    const auto jj = static_cast<Eigen::Index>(j);
    for (std::size_t i = 0; i < opts.per_class; ++i) {
      char id[48];
      std::snprintf(id, sizeof id, "c%03zu_%05zu", j, i);
      Tensor t(opts.map_shape);
      for (std::size_t s = 0; s < sites; ++s)
        for (std::size_t c = 0; c < channels; ++c) {
          const auto cc = static_cast<Eigen::Index>(c);
          t.data[s * channels + c] =
              static_cast<float>(means(jj, cc) + patterns[j](static_cast<Eigen::Index>(s), cc) + normal(rng));
        }
      entries.push_back({id, label, std::string("maps/") + id + ".ftns",
                         i < n_train ? Split::kTrain : Split::kTest});
      ds.maps.push_back(std::move(t));
    }
  }
  ds.manifest = make_manifest(std::move(entries));
  return ds;
}

fs::path write_synthetic(const SyntheticDataset& ds, const fs::path& dir) {
  fs::create_directories(dir / "maps");
  for (std::size_t i = 0; i < ds.maps.size(); ++i)
    write_tensor(ds.maps[i], dir / ds.manifest.entries[i].tensor_path);
  const fs::path mp = dir / "manifest.json";
  save_manifest(ds.manifest, mp);
  return mp;
}

}  // namespace hrrs
