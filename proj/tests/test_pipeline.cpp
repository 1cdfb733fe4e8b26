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

#include <algorithm>
#include <cmath>
#include <fstream>

#include "doctest.h"
#include "hrrs/model_io.hpp"
#include "hrrs/pipeline.hpp"
#include "test_util.hpp"

using namespace hrrs;
using hrrs::testing::TempDir;

namespace {

std::filesystem::path small_dataset(const TempDir& tmp, double separation = 8.0) {
  return write_synthetic(gen_synthetic({3, 6, {3, 3, 4}, separation, 3}), tmp / "data");
}

}  // namespace

TEST_CASE("content_hash is 64-bit FNV-1a") {
  // reference values of the FNV-1a 64 specification
  CHECK(content_hash("") == "cbf29ce484222325");
  CHECK(content_hash("a") == "af63dc4c8601ec8c");
  CHECK(content_hash("foobar") == "85944171f73967e8");
}

TEST_CASE("parse_pipeline_config") {
  SUBCASE("defaults") {
    const auto c = parse_pipeline_config(R"({"dataset": {"manifest": "m.json"}})", "/base");
    CHECK(c.manifest == std::filesystem::path("/base/m.json"));
    CHECK(c.encoder.kind == EncoderTag::kVlad);
    CHECK_FALSE(c.encoder.k.has_value());
    CHECK(c.encoder.alpha == 0.5);
    CHECK(c.head.hp.lr0 == 0.001);
    CHECK(c.eval.self_included);
    CHECK(c.eval.k_list == kDefaultPrecisionCutoffs);
    CHECK(c.workers == 1);
  }
  SUBCASE("effective config round-trips") {
    const auto c = parse_pipeline_config(
        R"({"dataset": {"manifest": "/abs/m.json"}, "encoder": {"kind": "ifk", "k": 4, "relu": false},
            "sweep": {"relu": [true, false], "encoder": ["bovw", "vlad"], "pca_dims": [0, 8]}, "seed": 9})");
    const std::string dumped = pipeline_config_json(c);
    CHECK(pipeline_config_json(parse_pipeline_config(dumped)) == dumped);
    CHECK(c.sweep.encoder.size() == 2);
    CHECK(*c.encoder.k == 4);
  }
  SUBCASE("rejections") {
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"manifest": "m"}, "colour": 1})"), ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"manifest": "m"}, "encoder": {"kk": 1}})"), ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"encoder": {}})"), ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"manifest": 3}})"), ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config("{not json"), ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"manifest": "m"}, "sweep": {"pca_dims": [-1]}})"),
                    ValidationError);
    CHECK_THROWS_AS(parse_pipeline_config(R"({"dataset": {"manifest": "m"}, "sweep": {"encoder": ["sift"]}})"),
                    ValidationError);
  }
}

TEST_CASE("split_train_test honours manifest splits and splits 'all' 80/20 per class") {
  std::vector<ManifestEntry> es;
  for (int c = 0; c < 2; ++c)
    for (int i = 0; i < 10; ++i) es.push_back({"i" + std::to_string(c * 10 + i), "c" + std::to_string(c), "p", Split::kAll});
  es.push_back({"t", "c0", "p", Split::kTest});
  es.push_back({"r", "c1", "p", Split::kTrain});
  const auto m = make_manifest(es);
  const auto s = split_train_test(m, 4);
  CHECK(s.train.size() == 17);
  CHECK(s.test.size() == 5);
  const auto again = split_train_test(m, 4);
  CHECK(again.train == s.train);
  CHECK(std::find(s.test.begin(), s.test.end(), 20) != s.test.end());
  CHECK(std::find(s.train.begin(), s.train.end(), 21) != s.train.end());
}

TEST_CASE("encode_dataset produces contract dimensions") {
  TempDir tmp;
  const auto m = load_manifest(small_dataset(tmp));
  const auto maps = load_tensors(m);
  const MatrixXr X = collect_descriptors(m, maps, true);
  CHECK(X.rows() == 18 * 9);
  CHECK((X.array() >= 0).all());
  const MatrixXr Xtr = collect_descriptors(m, maps, true, Split::kTrain);
  CHECK(Xtr.rows() == 15 * 9);  // round(0.8 * 6) = 5 train maps per class

  const Codebook cb = kmeans_fit(X, 5, {.seed = 1});
  const GmmModel g = gmm_fit(X, 3, {.seed = 1});
  const auto bovw = encode_dataset(m, maps, EncoderTag::kBovw, {&cb, nullptr, nullptr}, true);
  const auto vlad = encode_dataset(m, maps, EncoderTag::kVlad, {&cb, nullptr, nullptr}, true);
  const auto ifk = encode_dataset(m, maps, EncoderTag::kIfk, {nullptr, &g, nullptr}, true);
  CHECK(bovw.size() == 18);
  CHECK(bovw[0].second.vector.size() == 5);
  CHECK(vlad[0].second.vector.size() == 20);
  CHECK(ifk[0].second.vector.size() == 24);
  CHECK_THROWS_AS(encode_dataset(m, maps, EncoderTag::kIfk, {&cb, nullptr, nullptr}, true), ValidationError);

  const MatrixXr F = feature_matrix(vlad, m);
  CHECK(F.rows() == 18);
  const PcaModel p = pca_fit(F, 4);
  const auto proj = project_features(vlad, p);
  CHECK(proj[0].second.vector.size() == 4);
  CHECK(std::abs(proj[0].second.vector.norm() - 1.0) < 1e-9);
}

TEST_CASE("pca_sweep echoes dimensions and skips infeasible ones") {
  TempDir tmp;
  const auto m = load_manifest(small_dataset(tmp));
  const auto maps = load_tensors(m);
  const MatrixXr X = collect_descriptors(m, maps, true);
  const Codebook cb = kmeans_fit(X, 8, {.seed = 1});
  const auto vlad = encode_dataset(m, maps, EncoderTag::kVlad, {&cb, nullptr, nullptr}, true);
  std::vector<Eigen::Index> skipped;
  const auto rows = pca_sweep(vlad, m, m, {2, 4, 8, 64}, {}, &skipped);
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].dim == 2);
  CHECK(rows[2].dim == 8);
  CHECK(skipped == std::vector<Eigen::Index>{64});
}

TEST_CASE("train_head_on_manifest takes shapes from the data") {
  TempDir tmp;
  const auto m = load_manifest(small_dataset(tmp));
  HeadConfig base;
  base.hidden1 = 8;
  base.hidden2 = 8;
  TrainHyperparams hp;
  hp.max_epochs = 2;
  hp.batch = 5;
  const auto ck = train_head_on_manifest(m, load_tensors(m), base, hp);
  CHECK(ck.head.config.in_channels == 4);
  CHECK(ck.head.config.in_height == 3);
  CHECK(ck.head.config.classes == 3);
  CHECK(ck.history.size() == 2);

  save_head(ck, tmp / "head");
  const auto back = load_head(tmp / "head");
  CHECK(back.head.W1 == ck.head.W1);
  CHECK(back.head.config == ck.head.config);
  CHECK(back.history.size() == 2);
}

TEST_CASE("run_sweep: product of axes, cached reruns") {
  TempDir tmp;
  const auto mpath = small_dataset(tmp);
  const std::string cfg_text = R"({"dataset": {"manifest": ")" + mpath.string() + R"("},
      "encoder": {"k": 4},
      "sweep": {"relu": [true, false], "encoder": ["bovw", "vlad", "ifk"]},
      "eval": {"k_list": [1, 5]}, "workers": 2})";
  const auto cfg = parse_pipeline_config(cfg_text);
  std::vector<std::string> log1, log2;
  const auto rows = run_sweep(cfg, tmp / "cache", [&](const std::string& s) { log1.push_back(s); });
  REQUIRE(rows.size() == 6);
  CHECK(rows[0].cell.encoder == EncoderTag::kBovw);
  for (const auto& r : rows) {
    CHECK_FALSE(r.cache_hit);
    CHECK(r.anmrr >= 0.0);
    CHECK(r.anmrr <= 1.0);
  }
  const auto again = run_sweep(cfg, tmp / "cache", [&](const std::string& s) { log2.push_back(s); });
  REQUIRE(log2.size() == 6);
  for (const auto& line : log2) CHECK(line.rfind("cache hit", 0) == 0);
  for (const auto& r : again) CHECK(r.cache_hit);
  CHECK(sweep_csv(cfg, again) == sweep_csv(cfg, rows));
  const std::string csv = sweep_csv(cfg, rows);
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 7);

  // single worker recomputation gives identical numbers
  auto serial = cfg;
  serial.workers = 1;
  CHECK(sweep_csv(cfg, run_sweep(serial, tmp / "cache2")) == sweep_csv(cfg, rows));
}
