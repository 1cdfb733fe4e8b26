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

#include "hrrs/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <mutex>
#include <random>
#include <set>
#include <thread>
#include <unordered_map>

#include "json.hpp"

namespace hrrs {

using nlohmann::json;
using Idx = Eigen::Index;

namespace {

std::string fmt_full(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

// ================================================================
// dataset-level helpers
// ================================================================

bool split_selected(Split entry_split, Split wanted) {
  return wanted == Split::kAll || entry_split == Split::kAll || entry_split == wanted;
}

MatrixXr collect_descriptors(const DatasetManifest& m, const std::vector<Tensor>& maps, bool apply_relu,
                             Split wanted) {
  if (maps.size() != m.entries.size()) throw ValidationError("maps are not aligned with the manifest");
  std::vector<MatrixXr> blocks;
  Idx rows = 0;
  Idx dim = -1;
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (!split_selected(m.entries[i].split, wanted)) continue;
    DescriptorSet D = extract_descriptors(maps[i], apply_relu, m.entries[i].id);
    if (dim >= 0 && D.dim() != dim) throw DimensionMismatch("descriptors of \"" + m.entries[i].id + "\"", dim, D.dim());
    dim = D.dim();
    rows += D.size();
    blocks.push_back(std::move(D.descriptors));
  }
  if (blocks.empty()) throw ValidationError("no feature maps selected for descriptor collection");
  MatrixXr X(rows, dim);
  Idx at = 0;
  for (const auto& b : blocks) {
    X.middleRows(at, b.rows()) = b;
    at += b.rows();
  }
  return X;
}

Idx default_codebook_size(EncoderTag kind) {
  switch (kind) {
    case EncoderTag::kBovw: return 1000;
    case EncoderTag::kVlad: return 100;
    case EncoderTag::kIfk: return 100;
    default: return 0;
  }
}

FeatureSet encode_dataset(const DatasetManifest& m, const std::vector<Tensor>& tensors, EncoderTag kind,
                          const EncodeModels& models, bool apply_relu, double alpha) {
  if (tensors.size() != m.entries.size()) throw ValidationError("tensors are not aligned with the manifest");
  FeatureSet out;
  out.reserve(tensors.size());
  for (std::size_t i = 0; i < tensors.size(); ++i) {
    const auto& id = m.entries[i].id;
    EncodedFeature f;
    switch (kind) {
      case EncoderTag::kBovw:
        if (!models.codebook) throw ValidationError("bovw encoding needs a k-means codebook");
        f = encode_bovw(*models.codebook, extract_descriptors(tensors[i], apply_relu, id));
        break;
      case EncoderTag::kVlad:
        if (!models.codebook) throw ValidationError("vlad encoding needs a k-means codebook");
        f = encode_vlad(*models.codebook, extract_descriptors(tensors[i], apply_relu, id));
        break;
      case EncoderTag::kIfk:
        if (!models.gmm) throw ValidationError("ifk encoding needs a GMM");
        f = encode_ifk(*models.gmm, extract_descriptors(tensors[i], apply_relu, id), alpha);
        break;
      case EncoderTag::kFcRaw:
        f = encode_fc(tensors[i], apply_relu);
        break;
      case EncoderTag::kLdcnn: {
        if (!models.head) throw ValidationError("ldcnn encoding needs a head checkpoint");
        if (apply_relu) {
          Tensor t = tensors[i];
          for (auto& v : t.data) v = std::max(v, 0.0f);
          f = head_feature(*models.head, t);
        } else {
          f = head_feature(*models.head, tensors[i]);
        }
        break;
      }
    }
    out.emplace_back(id, std::move(f));
  }
  return out;
}

MatrixXr feature_matrix(const FeatureSet& features, const DatasetManifest& m) {
  std::unordered_map<std::string, const EncodedFeature*> by_id;
  for (const auto& [id, f] : features) by_id[id] = &f;
  if (features.empty()) throw ValidationError("empty feature set");
  MatrixXr X(static_cast<Idx>(m.entries.size()), features.front().second.vector.size());
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    const auto it = by_id.find(m.entries[i].id);
    if (it == by_id.end()) throw ValidationError("no feature for manifest id \"" + m.entries[i].id + "\"");
    X.row(static_cast<Idx>(i)) = it->second->vector.transpose();
  }
  return X;
}

FeatureSet project_features(const FeatureSet& features, const PcaModel& pca) {
  FeatureSet out;
  out.reserve(features.size());
  for (const auto& [id, f] : features) {
    EncodedFeature p = finalize_feature(pca_apply(pca, f.vector), f.tag);
    out.emplace_back(id, std::move(p));
  }
  return out;
}

TrainTestSplit split_train_test(const DatasetManifest& m, std::uint64_t seed, double train_fraction) {
  TrainTestSplit s;
  std::map<std::string, std::vector<std::size_t>> undecided;
  for (std::size_t i = 0; i < m.entries.size(); ++i) {
    switch (m.entries[i].split) {
      case Split::kTrain: s.train.push_back(i); break;
      case Split::kTest: s.test.push_back(i); break;
      case Split::kAll: undecided[m.entries[i].class_label].push_back(i); break;
    }
  }
  std::mt19937_64 rng(seed ^ 0x5b1175eedULL);
  for (auto& [label, rows] : undecided) {
    std::shuffle(rows.begin(), rows.end(), rng);
    auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(rows.size())));
    n_train = std::clamp<std::size_t>(n_train, 1, rows.size());
    s.train.insert(s.train.end(), rows.begin(), rows.begin() + static_cast<std::ptrdiff_t>(n_train));
    s.test.insert(s.test.end(), rows.begin() + static_cast<std::ptrdiff_t>(n_train), rows.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

LabeledMaps gather_labeled(const DatasetManifest& m, const std::vector<Tensor>& maps,
                           const std::vector<std::size_t>& rows) {
  LabeledMaps out;
  for (auto r : rows) {
    out.maps.push_back(maps[r]);
    out.labels.push_back(m.label_of(m.entries[r]));
  }
  return out;
}

HeadCheckpoint train_head_on_manifest(const DatasetManifest& m, const std::vector<Tensor>& maps,
                                      const HeadConfig& base, const TrainHyperparams& hp,
                                      const EpochCallback& on_epoch) {
  if (maps.empty() || maps.front().rank() != 3) throw ValidationError("head training needs [h, w, c] feature maps");
  HeadConfig cfg = base;
  cfg.in_height = static_cast<Idx>(maps.front().shape[0]);
  cfg.in_width = static_cast<Idx>(maps.front().shape[1]);
  cfg.in_channels = static_cast<Idx>(maps.front().shape[2]);
  cfg.classes = static_cast<Idx>(m.num_classes());
  const TrainTestSplit split = split_train_test(m, hp.seed);
  HeadCheckpoint ck;
  ck.head = head_init<float>(cfg, hp.seed);
  auto st = head_train<float>(ck.head, gather_labeled(m, maps, split.train), gather_labeled(m, maps, split.test), hp,
                              on_epoch);
  ck.history = std::move(st.history);
  ck.lr_drops = std::move(st.lr_drops);
  return ck;
}

std::vector<PcaSweepRow> pca_sweep(const FeatureSet& features, const DatasetManifest& manifest,
                                   const DatasetManifest& fit_manifest, const std::vector<Idx>& dims,
                                   const EvalOptions& eval, std::vector<Idx>* skipped) {
  const MatrixXr fit = feature_matrix(features, fit_manifest);
  const Idx rank = pca_rank(fit);
  const Idx cap = std::min({rank, fit.rows(), fit.cols()});
  std::vector<PcaSweepRow> rows;
  for (Idx d : dims) {
    if (d < 1 || d > cap) {
      if (skipped) skipped->push_back(d);
      continue;
    }
    const PcaModel pca = pca_fit(fit, d);
    const FeatureSet projected = project_features(features, pca);
    rows.push_back({d, evaluate_dataset(build_index(projected, manifest), manifest, eval)});
  }
  return rows;
}

// ================================================================
// configuration
// ================================================================

namespace {

void reject_unknown(const json& obj, const std::set<std::string>& allowed, const std::string& section) {
  if (!obj.is_object()) throw ValidationError("config section \"" + section + "\" must be an object");
  for (const auto& [key, _] : obj.items())
    if (!allowed.count(key)) throw ValidationError("unknown config key \"" + section + "." + key + "\"");
}

template <class T>
void read_opt(const json& obj, const char* key, T& out, const std::string& section) {
  if (!obj.contains(key) || obj.at(key).is_null()) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const json::exception&) {
    throw ValidationError("config key \"" + section + "." + key + "\" has the wrong type");
  }
}

json config_to_json(const PipelineConfig& c) {
  json j;
  j["dataset"] = {{"manifest", c.manifest.string()}};
  j["encoder"] = {{"kind", to_string(c.encoder.kind)},
                  {"k", c.encoder.k ? json(*c.encoder.k) : json(nullptr)},
                  {"alpha", c.encoder.alpha},
                  {"relu", c.encoder.relu},
                  {"max_iter", c.encoder.max_iter},
                  {"tol", c.encoder.tol}};
  j["pca"] = {{"d", c.pca.d ? json(*c.pca.d) : json(nullptr)}};
  const auto& h = c.head;
  j["head"] = {{"hidden1", h.config.hidden1},
               {"hidden2", h.config.hidden2},
               {"dropout_rate", h.config.dropout_rate},
               {"init_std", h.config.init_std},
               {"lr0", h.hp.lr0},
               {"momentum", h.hp.momentum},
               {"weight_decay", h.hp.weight_decay},
               {"batch", h.hp.batch},
               {"plateau_patience", h.hp.plateau_patience},
               {"plateau_min_improvement", h.hp.plateau_min_improvement},
               {"lr_drop", h.hp.lr_drop},
               {"min_lr", h.hp.min_lr},
               {"max_epochs", h.hp.max_epochs},
               {"checkpoint", h.checkpoint.string()}};
  j["eval"] = {{"self_included", c.eval.self_included}, {"k_list", c.eval.k_list}};
  json enc = json::array();
  for (auto e : c.sweep.encoder) enc.push_back(to_string(e));
  json relu = json::array();
  for (bool r : c.sweep.relu) relu.push_back(r);
  j["sweep"] = {{"relu", relu}, {"encoder", enc}, {"pca_dims", c.sweep.pca_dims}};
  j["seed"] = c.seed;
  j["workers"] = c.workers;
  return j;
}

}  // namespace

PipelineConfig parse_pipeline_config(const std::string& text, const std::filesystem::path& base_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw ValidationError(std::string("config is not valid JSON: ") + e.what());
  }
  reject_unknown(j, {"dataset", "encoder", "pca", "head", "eval", "sweep", "seed", "workers"}, "config");

  PipelineConfig c;
  if (!j.contains("dataset")) throw ValidationError("config needs a \"dataset\" section");
  reject_unknown(j["dataset"], {"manifest"}, "dataset");
  std::string manifest;
  read_opt(j["dataset"], "manifest", manifest, "dataset");
  if (manifest.empty()) throw ValidationError("config needs dataset.manifest");
  c.manifest = std::filesystem::path(manifest).is_absolute() ? std::filesystem::path(manifest) : base_dir / manifest;

  if (j.contains("encoder")) {
    const auto& e = j["encoder"];
    reject_unknown(e, {"kind", "k", "alpha", "relu", "max_iter", "tol"}, "encoder");
    std::string kind = to_string(c.encoder.kind);
    read_opt(e, "kind", kind, "encoder");
    c.encoder.kind = parse_encoder_tag(kind);
    Idx k = 0;
    read_opt(e, "k", k, "encoder");
    if (k != 0) c.encoder.k = k;
    read_opt(e, "alpha", c.encoder.alpha, "encoder");
    read_opt(e, "relu", c.encoder.relu, "encoder");
    read_opt(e, "max_iter", c.encoder.max_iter, "encoder");
    read_opt(e, "tol", c.encoder.tol, "encoder");
  }
  if (c.encoder.k && *c.encoder.k < 1) throw ValidationError("encoder.k must be >= 1");
  if (!(c.encoder.alpha > 0.0 && c.encoder.alpha <= 1.0)) throw ValidationError("encoder.alpha must lie in (0, 1]");

  if (j.contains("pca")) {
    reject_unknown(j["pca"], {"d"}, "pca");
    Idx d = 0;
    read_opt(j["pca"], "d", d, "pca");
    if (d < 0) throw ValidationError("pca.d must be >= 1");
    if (d > 0) c.pca.d = d;
  }

  if (j.contains("head")) {
    const auto& h = j["head"];
    reject_unknown(h,
                   {"hidden1", "hidden2", "dropout_rate", "init_std", "lr0", "momentum", "weight_decay", "batch",
                    "plateau_patience", "plateau_min_improvement", "lr_drop", "min_lr", "max_epochs", "checkpoint"},
                   "head");
    read_opt(h, "hidden1", c.head.config.hidden1, "head");
    read_opt(h, "hidden2", c.head.config.hidden2, "head");
    read_opt(h, "dropout_rate", c.head.config.dropout_rate, "head");
    read_opt(h, "init_std", c.head.config.init_std, "head");
    read_opt(h, "lr0", c.head.hp.lr0, "head");
    read_opt(h, "momentum", c.head.hp.momentum, "head");
    read_opt(h, "weight_decay", c.head.hp.weight_decay, "head");
    read_opt(h, "batch", c.head.hp.batch, "head");
    read_opt(h, "plateau_patience", c.head.hp.plateau_patience, "head");
    read_opt(h, "plateau_min_improvement", c.head.hp.plateau_min_improvement, "head");
    read_opt(h, "lr_drop", c.head.hp.lr_drop, "head");
    read_opt(h, "min_lr", c.head.hp.min_lr, "head");
    read_opt(h, "max_epochs", c.head.hp.max_epochs, "head");
    std::string ckpt;
    read_opt(h, "checkpoint", ckpt, "head");
    if (!ckpt.empty())
      c.head.checkpoint = std::filesystem::path(ckpt).is_absolute() ? std::filesystem::path(ckpt) : base_dir / ckpt;
  }
  c.head.config.validate();

  if (j.contains("eval")) {
    reject_unknown(j["eval"], {"self_included", "k_list"}, "eval");
    read_opt(j["eval"], "self_included", c.eval.self_included, "eval");
    read_opt(j["eval"], "k_list", c.eval.k_list, "eval");
    for (auto k : c.eval.k_list)
      if (k < 1) throw ValidationError("eval.k_list entries must be >= 1");
  }

  if (j.contains("sweep")) {
    const auto& s = j["sweep"];
    reject_unknown(s, {"relu", "encoder", "pca_dims"}, "sweep");
    read_opt(s, "relu", c.sweep.relu, "sweep");
    std::vector<std::string> enc;
    read_opt(s, "encoder", enc, "sweep");
    for (const auto& e : enc) c.sweep.encoder.push_back(parse_encoder_tag(e));
    read_opt(s, "pca_dims", c.sweep.pca_dims, "sweep");
    for (auto d : c.sweep.pca_dims)
      if (d < 0) throw ValidationError("invalid sweep axis: pca_dims entries must be >= 0");
  }
  read_opt(j, "seed", c.seed, "config");
  read_opt(j, "workers", c.workers, "config");
  if (c.workers < 1) throw ValidationError("workers must be >= 1");
  return c;
}

std::string pipeline_config_json(const PipelineConfig& c) { return config_to_json(c).dump(2) + "\n"; }

std::string content_hash(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// ================================================================
// sweeps
// ================================================================

namespace {

std::vector<SweepCell> expand_cells(const PipelineConfig& c) {
  const std::vector<EncoderTag> encoders = c.sweep.encoder.empty() ? std::vector{c.encoder.kind} : c.sweep.encoder;
  const std::vector<bool> relus = c.sweep.relu.empty() ? std::vector{c.encoder.relu} : c.sweep.relu;
  const std::vector<Idx> dims = c.sweep.pca_dims.empty() ? std::vector<Idx>{c.pca.d.value_or(0)} : c.sweep.pca_dims;
  std::vector<SweepCell> cells;
  for (auto e : encoders)
    for (bool r : relus)
      for (auto d : dims) cells.push_back({e, r, d});
  return cells;
}

json cell_key(const PipelineConfig& c, const SweepCell& cell, const std::string& manifest_hash) {
  const Idx k = c.encoder.k.value_or(default_codebook_size(cell.encoder));
  json key = {{"encoder", to_string(cell.encoder)},
              {"relu", cell.relu},
              {"pca_dim", cell.pca_dim},
              {"manifest", manifest_hash},
              {"seed", c.seed},
              {"eval", {{"self_included", c.eval.self_included}, {"k_list", c.eval.k_list}}}};
  if (cell.encoder == EncoderTag::kBovw || cell.encoder == EncoderTag::kVlad || cell.encoder == EncoderTag::kIfk)
    key["codebook"] = {{"k", k},
                       {"max_iter", c.encoder.max_iter},
                       {"tol", c.encoder.tol}};
  if (cell.encoder == EncoderTag::kIfk) key["alpha"] = c.encoder.alpha;
  if (cell.encoder == EncoderTag::kLdcnn) {
    const json full = config_to_json(c);
    key["head"] = full["head"];
    if (!c.head.checkpoint.empty()) key["checkpoint_hash"] = content_hash(read_text(c.head.checkpoint / "W3.ftns"));
  }
  return key;
}

SweepRow compute_cell(const PipelineConfig& c, const SweepCell& cell, const DatasetManifest& m,
                      const std::vector<Tensor>& tensors) {
  const Idx k = c.encoder.k.value_or(default_codebook_size(cell.encoder));
  const FitOptions fit{c.seed, c.encoder.max_iter, c.encoder.tol};
  FeatureSet features;
  switch (cell.encoder) {
    case EncoderTag::kBovw:
    case EncoderTag::kVlad: {
      const Codebook cb = kmeans_fit(collect_descriptors(m, tensors, cell.relu), k, fit);
      features = encode_dataset(m, tensors, cell.encoder, {&cb, nullptr, nullptr}, cell.relu);
      break;
    }
    case EncoderTag::kIfk: {
      const GmmModel g = gmm_fit(collect_descriptors(m, tensors, cell.relu), k, fit);
      features = encode_dataset(m, tensors, cell.encoder, {nullptr, &g, nullptr}, cell.relu, c.encoder.alpha);
      break;
    }
    case EncoderTag::kFcRaw:
      features = encode_dataset(m, tensors, cell.encoder, {}, cell.relu);
      break;
    case EncoderTag::kLdcnn: {
      HeadCheckpoint ck;
      if (!c.head.checkpoint.empty()) {
        ck = load_head(c.head.checkpoint);
      } else {
        TrainHyperparams hp = c.head.hp;
        hp.seed = c.seed;
        ck = train_head_on_manifest(m, tensors, c.head.config, hp);
      }
      features = encode_dataset(m, tensors, cell.encoder, {nullptr, nullptr, &ck.head}, cell.relu);
      break;
    }
  }
  if (cell.pca_dim > 0) features = project_features(features, pca_fit(feature_matrix(features, m), cell.pca_dim));
  const EvalReport rep = evaluate_dataset(build_index(features, m), m, c.eval);
  return {cell, rep.anmrr, rep.map, rep.p_at_k, false};
}

json row_to_json(const SweepRow& r) {
  json pk = json::array();
  for (double p : r.p_at_k) pk.push_back(std::isnan(p) ? json(nullptr) : json(p));
  return {{"anmrr", r.anmrr}, {"map", r.map}, {"p_at_k", pk}};
}

SweepRow row_from_json(const json& j, const SweepCell& cell) {
  SweepRow r;
  r.cell = cell;
  r.anmrr = j.at("anmrr").get<double>();
  r.map = j.at("map").get<double>();
  for (const auto& p : j.at("p_at_k")) r.p_at_k.push_back(p.is_null() ? std::nan("") : p.get<double>());
  r.cache_hit = true;
  return r;
}

}  // namespace

std::vector<SweepRow> run_sweep(const PipelineConfig& config, const std::filesystem::path& cache_dir,
                                const LogFn& log) {
  const DatasetManifest m = load_manifest(config.manifest);
  const std::string manifest_hash = content_hash(read_text(config.manifest));
  const std::vector<SweepCell> cells = expand_cells(config);
  std::filesystem::create_directories(cache_dir);

  std::mutex log_mu;
  auto say = [&](const std::string& s) {
    if (!log) return;
    std::lock_guard<std::mutex> lock(log_mu);
    log(s);
  };

  // Tensors are loaded lazily, once, and only if some cell misses the cache.
  std::once_flag loaded;
  std::vector<Tensor> tensors;
  std::vector<SweepRow> rows(cells.size());
  std::vector<std::string> errors(cells.size());
  std::atomic<std::size_t> next{0};

  auto worker = [&]() {
    for (std::size_t i = next++; i < cells.size(); i = next++) {
      const SweepCell& cell = cells[i];
      const std::string hash = content_hash(cell_key(config, cell, manifest_hash).dump());
      const auto cache_file = cache_dir / (hash + ".json");
      const std::string label = "cell encoder=" + to_string(cell.encoder) + " relu=" + (cell.relu ? "on" : "off") +
                                " pca_dim=" + std::to_string(cell.pca_dim);
      try {
        if (std::filesystem::exists(cache_file)) {
          rows[i] = row_from_json(json::parse(read_text(cache_file)), cell);
          say("cache hit " + hash + " (" + label + ")");
          continue;
        }
        std::call_once(loaded, [&] { tensors = load_tensors(m); });
        rows[i] = compute_cell(config, cell, m, tensors);
        write_text(cache_file, row_to_json(rows[i]).dump() + "\n");
        say("computed " + hash + " (" + label + ")");
      } catch (const std::exception& e) {
        errors[i] = label + ": " + e.what();
      }
    }
  };

  const int width = std::max(1, std::min<int>(config.workers, static_cast<int>(cells.size())));
  std::vector<std::thread> pool;
  for (int w = 1; w < width; ++w) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (const auto& e : errors)
    if (!e.empty()) throw Error("sweep failed: " + e);
  return rows;
}

std::string sweep_csv(const PipelineConfig& config, const std::vector<SweepRow>& rows) {
  std::string out = "encoder,relu,pca_dim,ANMRR,mAP";
  for (auto k : config.eval.k_list) out += ",P@" + std::to_string(k);
  out += "\n";
  for (const auto& r : rows) {
    out += to_string(r.cell.encoder) + "," + (r.cell.relu ? "on" : "off") + "," + std::to_string(r.cell.pca_dim) +
           "," + fmt_full(r.anmrr) + "," + fmt_full(r.map);
    for (double p : r.p_at_k) out += "," + fmt_full(p);
    out += "\n";
  }
  return out;
}

}  // namespace hrrs
