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

#include "hrrs/model_io.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace hrrs {

using nlohmann::json;

namespace {

json read_json(const fs::path& p) {
  std::ifstream in(p);
  if (!in) throw IoError("cannot open " + p.string());
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw FormatError(p.filename().string(), e.what());
  }
}

void write_json(const json& j, const fs::path& p) { write_text(p, j.dump(2) + "\n"); }

template <class T>
T field(const json& j, const char* key, const fs::path& where) {
  if (!j.contains(key)) throw FormatError(key, "missing in " + where.string());
  try {
    return j.at(key).get<T>();
  } catch (const json::exception& e) {
    throw FormatError(key, e.what());
  }
}

template <class Scalar>
Tensor weights_tensor(const RowMatrix<Scalar>& w, std::vector<std::size_t> shape) {
  std::vector<float> d(static_cast<std::size_t>(w.size()));
  Eigen::Map<RowMatrix<float>>(d.data(), w.rows(), w.cols()) = w.template cast<float>();
  return Tensor(std::move(shape), std::move(d));
}

void load_weights(RowMatrix<float>& w, const fs::path& p) {
  const Tensor t = read_tensor(p);
  if (static_cast<Eigen::Index>(t.numel()) != w.size())
    throw FormatError(p.filename().string(), "parameter count does not match config");
  w = Eigen::Map<const RowMatrix<float>>(t.data.data(), w.rows(), w.cols());
}

void load_bias(Vector<float>& b, const fs::path& p) {
  const Tensor t = read_tensor(p);
  if (static_cast<Eigen::Index>(t.numel()) != b.size())
    throw FormatError(p.filename().string(), "bias length does not match config");
  b = Eigen::Map<const Vector<float>>(t.data.data(), b.size());
}

json config_to_json(const HeadConfig& c) {
  return {{"in_channels", c.in_channels}, {"in_height", c.in_height},   {"in_width", c.in_width},
          {"hidden1", c.hidden1},         {"hidden2", c.hidden2},       {"classes", c.classes},
          {"dropout_rate", c.dropout_rate}, {"init_std", c.init_std},
          {"activation", c.activation == Activation::kRelu ? "relu" : "identity"}};
}

HeadConfig config_from_json(const json& j, const fs::path& where) {
  HeadConfig c;
  c.in_channels = field<Eigen::Index>(j, "in_channels", where);
  c.in_height = field<Eigen::Index>(j, "in_height", where);
  c.in_width = field<Eigen::Index>(j, "in_width", where);
  c.hidden1 = field<Eigen::Index>(j, "hidden1", where);
  c.hidden2 = field<Eigen::Index>(j, "hidden2", where);
  c.classes = field<Eigen::Index>(j, "classes", where);
  c.dropout_rate = field<double>(j, "dropout_rate", where);
  c.init_std = field<double>(j, "init_std", where);
  c.activation = j.value("activation", "relu") == "identity" ? Activation::kIdentity : Activation::kRelu;
  c.validate();
  return c;
}

}  // namespace

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("write failed: " + path.string());
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string bundle_kind(const fs::path& dir) {
  if (fs::exists(dir / "codebook.json")) return "kmeans";
  if (fs::exists(dir / "gmm.json")) return "gmm";
  throw FormatError("bundle", "no codebook.json or gmm.json in " + dir.string());
}

// ---------------------------------------------------------------- codebooks

void save_codebook(const Codebook& cb, const fs::path& dir) {
  fs::create_directories(dir);
  write_tensor(tensor_from_matrix(cb.centroids), dir / "centroids.ftns");
  write_json({{"kind", "kmeans"}, {"k", cb.k()}, {"d", cb.dim()}, {"history", cb.inertia_history}},
             dir / "codebook.json");
}

Codebook load_codebook(const fs::path& dir) {
  const json j = read_json(dir / "codebook.json");
  Codebook cb;
  cb.centroids = tensor_to_matrix(read_tensor(dir / "centroids.ftns"));
  cb.inertia_history = field<std::vector<double>>(j, "history", dir);
  if (cb.k() != field<Eigen::Index>(j, "k", dir) || cb.dim() != field<Eigen::Index>(j, "d", dir))
    throw FormatError("k", "sidecar disagrees with centroids.ftns in " + dir.string());
  return cb;
}

void save_gmm(const GmmModel& g, const fs::path& dir) {
  fs::create_directories(dir);
  write_tensor(tensor_from_vector(g.weights), dir / "weights.ftns");
  write_tensor(tensor_from_matrix(g.means), dir / "means.ftns");
  write_tensor(tensor_from_matrix(g.variances), dir / "variances.ftns");
  write_json({{"kind", "gmm"}, {"k", g.k()}, {"d", g.dim()}, {"history", g.loglik_history}}, dir / "gmm.json");
}

GmmModel load_gmm(const fs::path& dir) {
  const json j = read_json(dir / "gmm.json");
  GmmModel g;
  g.weights = tensor_to_vector(read_tensor(dir / "weights.ftns"));
  g.weights /= g.weights.sum();  // undo float32 rounding drift
  g.means = tensor_to_matrix(read_tensor(dir / "means.ftns"));
  g.variances = tensor_to_matrix(read_tensor(dir / "variances.ftns")).cwiseMax(kVarianceFloor);
  g.loglik_history = field<std::vector<double>>(j, "history", dir);
  if (g.k() != field<Eigen::Index>(j, "k", dir) || g.dim() != field<Eigen::Index>(j, "d", dir) ||
      g.weights.size() != g.k() || g.variances.rows() != g.k() || g.variances.cols() != g.dim())
    throw FormatError("k", "sidecar disagrees with tensors in " + dir.string());
  return g;
}

// ---------------------------------------------------------------- pca

void save_pca(const PcaModel& m, const fs::path& dir) {
  fs::create_directories(dir);
  write_tensor(tensor_from_vector(m.mean), dir / "mean.ftns");
  write_tensor(tensor_from_matrix(m.components), dir / "components.ftns");
  write_tensor(tensor_from_vector(m.explained_variance), dir / "explained_variance.ftns");
  write_json({{"D", m.input_dim()}, {"d", m.output_dim()}}, dir / "pca.json");
}

PcaModel load_pca(const fs::path& dir) {
  const json j = read_json(dir / "pca.json");
  PcaModel m;
  m.mean = tensor_to_vector(read_tensor(dir / "mean.ftns"));
  m.components = tensor_to_matrix(read_tensor(dir / "components.ftns"));
  m.explained_variance = tensor_to_vector(read_tensor(dir / "explained_variance.ftns"));
  if (m.input_dim() != field<Eigen::Index>(j, "D", dir) || m.output_dim() != field<Eigen::Index>(j, "d", dir) ||
      m.components.cols() != m.input_dim())
    throw FormatError("D", "sidecar disagrees with tensors in " + dir.string());
  return m;
}

// ---------------------------------------------------------------- head

void save_head(const HeadCheckpoint& ckpt, const fs::path& dir) {
  fs::create_directories(dir);
  const auto& h = ckpt.head;
  const auto& c = h.config;
  auto u = [](Eigen::Index v) { return static_cast<std::size_t>(v); };
  write_tensor(weights_tensor(h.W1, {3, 3, u(c.in_channels), u(c.hidden1)}), dir / "W1.ftns");
  write_tensor(weights_tensor(h.W2, {1, 1, u(c.hidden1), u(c.hidden2)}), dir / "W2.ftns");
  write_tensor(weights_tensor(h.W3, {1, 1, u(c.hidden2), u(c.classes)}), dir / "W3.ftns");
  write_tensor(tensor_from_vector(h.b1.cast<double>()), dir / "b1.ftns");
  write_tensor(tensor_from_vector(h.b2.cast<double>()), dir / "b2.ftns");
  write_tensor(tensor_from_vector(h.b3.cast<double>()), dir / "b3.ftns");

  json hist = json::array();
  for (const auto& r : ckpt.history)
    hist.push_back({{"epoch", r.epoch}, {"lr", r.lr}, {"train_loss", r.train_loss},
                    {"train_acc", r.train_accuracy}, {"test_acc", r.test_accuracy}});
  json drops = json::array();
  for (const auto& d : ckpt.lr_drops) drops.push_back({{"epoch", d.epoch}, {"from", d.from}, {"to", d.to}});
  write_json({{"config", config_to_json(c)}, {"history", hist}, {"lr_drops", drops}}, dir / "head.json");
}

HeadCheckpoint load_head(const fs::path& dir) {
  const json j = read_json(dir / "head.json");
  HeadCheckpoint ck;
  ck.head = MlpconvHead<float>::zeros(config_from_json(field<json>(j, "config", dir), dir));
  load_weights(ck.head.W1, dir / "W1.ftns");
  load_weights(ck.head.W2, dir / "W2.ftns");
  load_weights(ck.head.W3, dir / "W3.ftns");
  load_bias(ck.head.b1, dir / "b1.ftns");
  load_bias(ck.head.b2, dir / "b2.ftns");
  load_bias(ck.head.b3, dir / "b3.ftns");
  for (const auto& r : j.value("history", json::array()))
    ck.history.push_back({r.at("epoch").get<int>(), r.at("lr").get<double>(), r.at("train_loss").get<double>(),
                          r.at("train_acc").get<double>(), r.at("test_acc").get<double>()});
  for (const auto& d : j.value("lr_drops", json::array()))
    ck.lr_drops.push_back({d.at("epoch").get<int>(), d.at("from").get<double>(), d.at("to").get<double>()});
  return ck;
}

// ---------------------------------------------------------------- features

void save_features(const FeatureSet& features, const fs::path& dir) {
  if (features.empty()) throw ValidationError("no features to save");
  fs::create_directories(dir / "vectors");
  json vectors = json::object();
  json zero = json::array();
  const EncoderTag tag = features.front().second.tag;
  const auto dims = features.front().second.vector.size();
  for (std::size_t i = 0; i < features.size(); ++i) {
    const auto& [id, f] = features[i];
    if (f.tag != tag) throw ValidationError("mixed encoder tags in feature set");
    char name[32];
    std::snprintf(name, sizeof name, "vectors/%06zu.ftns", i);
    const std::string rel = name;
    write_tensor(tensor_from_vector(f.vector), dir / rel);
    vectors[id] = rel;
    if (!f.normalized) zero.push_back(id);
  }
  write_json({{"encoder_tag", to_string(tag)}, {"dims", dims}, {"vectors", vectors}, {"unnormalized", zero}},
             dir / "index.json");
}

FeatureSet load_features(const fs::path& dir) {
  const json j = read_json(dir / "index.json");
  const EncoderTag tag = parse_encoder_tag(field<std::string>(j, "encoder_tag", dir));
  const auto dims = field<Eigen::Index>(j, "dims", dir);
  std::set<std::string> unnormalized;
  for (const auto& z : j.value("unnormalized", json::array())) unnormalized.insert(z.get<std::string>());
  FeatureSet out;
  const json vectors = field<json>(j, "vectors", dir);
  for (const auto& [id, rel] : vectors.items()) {
    EncodedFeature f;
    f.vector = tensor_to_vector(read_tensor(dir / rel.get<std::string>()));
    if (f.vector.size() != dims) throw FormatError("dims", "vector \"" + id + "\" has the wrong length");
    f.tag = tag;
    f.normalized = !unnormalized.count(id);
    out.emplace_back(id, std::move(f));
  }
  return out;
}

void save_index(const Index& idx, const fs::path& dir) {
  fs::create_directories(dir);
  write_tensor(tensor_from_matrix(idx.matrix), dir / "matrix.ftns");
  std::vector<std::string> zero;
  for (std::size_t i = 0; i < idx.size(); ++i)
    if (idx.zero_row[i]) zero.push_back(idx.ids[i]);
  write_json({{"encoder_tag", to_string(idx.tag)}, {"ids", idx.ids}, {"classes", idx.classes}, {"zero_rows", zero}},
             dir / "index.json");
}

Index load_index(const fs::path& dir) {
  const json j = read_json(dir / "index.json");
  Index idx;
  idx.tag = parse_encoder_tag(field<std::string>(j, "encoder_tag", dir));
  idx.ids = field<std::vector<std::string>>(j, "ids", dir);
  idx.classes = field<std::vector<std::string>>(j, "classes", dir);
  idx.matrix = tensor_to_matrix(read_tensor(dir / "matrix.ftns"));
  if (idx.classes.size() != idx.ids.size() || static_cast<std::size_t>(idx.matrix.rows()) != idx.ids.size())
    throw FormatError("ids", "index.json disagrees with matrix.ftns in " + dir.string());
  const auto zero = field<std::vector<std::string>>(j, "zero_rows", dir);
  const std::set<std::string> zs(zero.begin(), zero.end());
  for (const auto& id : idx.ids) idx.zero_row.push_back(zs.count(id) > 0);
  // float32 storage: restore unit rows exactly
  for (Eigen::Index i = 0; i < idx.matrix.rows(); ++i)
    if (!idx.zero_row[static_cast<std::size_t>(i)]) idx.matrix.row(i).normalize();
  return idx;
}

}  // namespace hrrs
