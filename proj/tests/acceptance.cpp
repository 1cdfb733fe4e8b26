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

// Acceptance suite: one line per criterion, exit status 1 if any fails.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "hrrs/codebooks.hpp"
#include "hrrs/encoders.hpp"
#include "hrrs/evaluation.hpp"
#include "hrrs/ldcnn_head.hpp"
#include "hrrs/pipeline.hpp"
#include "hrrs/reduction.hpp"
#include "hrrs/retrieval.hpp"
#include "oracles/fixtures.hpp"
#include "oracles/head_gradcheck.hpp"
#include "oracles/metrics_oracle.hpp"
#include "oracles/pca_oracle.hpp"

using namespace hrrs;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double v) {
  char b[64];
  std::snprintf(b, sizeof b, f, v);
  return b;
}

// ---------------------------------------------------------------- metrics

QueryJudgment random_judgment(std::mt19937_64& rng) {
  const std::size_t len = 1 + rng() % 200;
  const std::size_t ng = 1 + rng() % 20;
  std::size_t found = std::min(ng, len);
  if (rng() % 4 == 0) found = rng() % (found + 1);
  std::vector<std::size_t> pos(len);
  for (std::size_t i = 0; i < len; ++i) pos[i] = i + 1;
  std::shuffle(pos.begin(), pos.end(), rng);
  pos.resize(found);
  std::sort(pos.begin(), pos.end());
  return {"q", pos, ng, len};
}

Outcome metric_oracle_suite() {
  std::mt19937_64 rng(2024);
  double worst = 0.0;
  std::vector<double> nm, ap, onm, oap;
  for (int t = 0; t < 200; ++t) {
    const auto j = random_judgment(rng);
    std::vector<int> rel(j.list_length, 0);
    for (auto r : j.relevant_ranks) rel[r - 1] = 1;
    const int ng = static_cast<int>(j.ground_truth);
    nm.push_back(nmrr(j));
    ap.push_back(average_precision(j));
    onm.push_back(oracle::nmrr(rel, ng));
    oap.push_back(oracle::average_precision(rel, ng));
    worst = std::max({worst, std::abs(nm.back() - onm.back()), std::abs(ap.back() - oap.back())});
    for (std::size_t k = 1; k <= j.list_length; ++k)
      worst = std::max(worst, std::abs(precision_at_k(j, k) - oracle::precision_at(rel, k)));
  }
  worst = std::max({worst, std::abs(anmrr(nm) - oracle::mean(onm)), std::abs(mean_ap(ap) - oracle::mean(oap))});

  const std::string e1 = fmt("%.6f", nmrr({"q", {1, 3}, 2, 10}));
  const std::string e2 = fmt("%.6f", nmrr({"q", {1, 6}, 2, 10}));
  const std::string e3 = fmt("%.6f", average_precision({"q", {1, 3, 4}, 3, 10}));
  const double e4 = precision_at_k({"q", {1, 3}, 2, 10}, 5);
  const bool examples = e1 == "0.142857" && e2 == "0.428571" && e3 == "0.805556" && e4 == 0.4;
  return {worst <= 1e-12 && examples, "max |impl - oracle| = " + fmt("%.3g", worst) + " over 200 judgments; examples " +
                                          e1 + " " + e2 + " " + e3 + " " + fmt("%.1f", e4)};
}

// ---------------------------------------------------------------- parameter counts

Outcome parameter_counts() {
  const auto ldcnn = static_cast<double>(param_count(head_layer_shapes(HeadConfig{})));
  const auto vggm = static_cast<double>(param_count(vggm_fc_layer_shapes(1000)));
  const auto tuned = static_cast<double>(param_count(vggm_fc_layer_shapes(30)));
  const double r1 = vggm / ldcnn, r2 = tuned / ldcnn;
  // target ratios: 2.7 against VGGM, 2.6 against the fine-tuned VGGM
  const bool ok = std::abs(r1 - 2.7) <= 0.2 && std::abs(r2 - 2.6) <= 0.2 && ldcnn == 35782686 && vggm == 96379880 &&
                  tuned == 92405790;
  return {ok, "LDCNN " + fmt("%.0f", ldcnn) + ", VGGM " + fmt("%.0f", vggm) + " (ratio " + fmt("%.2f", r1) +
                  "), VGGM-Finetune " + fmt("%.0f", tuned) + " (ratio " + fmt("%.2f", r2) + ")"};
}

// ---------------------------------------------------------------- gradients

Outcome head_gradient_check() {
  auto fx = oracle::stable_grad_fixture();
  const auto r = oracle::run_grad_check(fx);
  return {r.max_rel_error < 1e-4 && r.pattern_flips == 0,
          "max relative error " + fmt("%.3g", r.max_rel_error) + " over " + std::to_string(r.params) +
              " parameters (step 1e-3)"};
}

Outcome fisher_gradient_check() {
  std::mt19937_64 rng(99);
  double worst = 0.0;
  int fixtures = 0;
  for (Eigen::Index k = 1; k <= 4; ++k)
    for (Eigen::Index d : {1, 3, 6})
      for (Eigen::Index m : {1, 7, 20}) {
        const auto fx = oracle::random_fisher_fixture(rng, k, d, m);
        const VectorXr got = fisher_vector_raw(fx.model, fx.descriptors);
        const auto want = oracle::fisher_by_differences(fx.as_oracle(), fx.rows());
        for (Eigen::Index i = 0; i < got.size(); ++i)
          worst = std::max(worst, oracle::relative_error(got(i), want[static_cast<std::size_t>(i)], 1e-6));
        ++fixtures;
      }
  return {worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " over " + std::to_string(fixtures) + " fixtures"};
}

// ---------------------------------------------------------------- monotonicity

Outcome optimization_monotonicity() {
  double worst_inertia = 0.0, worst_loglik = 0.0;
  for (int t = 0; t < 50; ++t) {
    std::mt19937_64 rng(5000 + t);
    const Eigen::Index n = 50 + static_cast<Eigen::Index>(rng() % 300);
    const Eigen::Index d = 1 + static_cast<Eigen::Index>(rng() % 8);
    const Eigen::Index k = 1 + static_cast<Eigen::Index>(rng() % 8);
    std::normal_distribution<double> g(0.0, 1.0);
    MatrixXr X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index r = 0; r < d; ++r) X(i, r) = g(rng) + 4.0 * static_cast<double>((i * 7 + r) % 3);
    const FitOptions opts{.seed = static_cast<std::uint64_t>(t), .max_iter = 100, .tol = 0.0};
    const Codebook cb = kmeans_fit(X, k, opts);
    for (std::size_t i = 1; i < cb.inertia_history.size(); ++i)
      worst_inertia = std::max(worst_inertia, cb.inertia_history[i] - cb.inertia_history[i - 1]);
    const GmmModel gm = gmm_fit(X, k, opts);
    for (std::size_t i = 1; i < gm.loglik_history.size(); ++i)
      worst_loglik = std::max(worst_loglik, gm.loglik_history[i - 1] - gm.loglik_history[i]);
  }
  return {worst_inertia <= 1e-9 && worst_loglik <= 1e-7,
          "largest inertia increase " + fmt("%.3g", worst_inertia) + ", largest log-likelihood decrease " +
              fmt("%.3g", worst_loglik) + " over 50 instances"};
}

// ---------------------------------------------------------------- end to end

double vlad_anmrr(double separation, double* map_out) {
  const SyntheticDataset ds = gen_synthetic({3, 20, {6, 6, 16}, separation, 0});
  std::vector<DescriptorSet> sets;
  for (std::size_t i = 0; i < ds.maps.size(); ++i)
    sets.push_back(extract_descriptors(ds.maps[i], true, ds.manifest.entries[i].id));
  MatrixXr all(static_cast<Eigen::Index>(sets.size()) * sets[0].size(), sets[0].dim());
  for (std::size_t i = 0; i < sets.size(); ++i)
    all.middleRows(static_cast<Eigen::Index>(i) * sets[0].size(), sets[0].size()) = sets[i].descriptors;
  const Codebook cb = kmeans_fit(all, 8, {.seed = 0});
  std::vector<std::pair<std::string, EncodedFeature>> feats;
  for (const auto& s : sets) feats.emplace_back(s.source_id, encode_vlad(cb, s));
  const Index idx = build_index(feats, ds.manifest);
  const EvalReport r = evaluate_dataset(idx, ds.manifest);
  if (map_out) *map_out = r.map;
  return r.anmrr;
}

Outcome end_to_end() {
  double map8 = 0.0, map0 = 0.0;
  const double a8 = vlad_anmrr(8.0, &map8);
  const double a0 = vlad_anmrr(0.0, &map0);
  const auto base = oracle::random_ranking_baseline({20, 20, 20}, true, 2000, 7);
  const bool ok = a8 <= 0.05 && map8 >= 0.95 && std::abs(a0 - base.anmrr) <= 0.05;
  return {ok, "separation 8: ANMRR " + fmt("%.4f", a8) + ", mAP " + fmt("%.4f", map8) + "; separation 0: ANMRR " +
                  fmt("%.4f", a0) + " vs random-ranking baseline " + fmt("%.4f", base.anmrr)};
}

// ---------------------------------------------------------------- head training

LabeledMaps labeled(const SyntheticDataset& ds, Split s) {
  LabeledMaps out;
  for (std::size_t i = 0; i < ds.maps.size(); ++i)
    if (ds.manifest.entries[i].split == s) {
      out.maps.push_back(ds.maps[i]);
      out.labels.push_back(ds.manifest.label_of(ds.manifest.entries[i]));
    }
  return out;
}

// Reference lr0, momentum, decay and init; narrower layers and a batch that
// gives several updates per epoch on 48 training maps.
HeadConfig training_config() {
  HeadConfig cfg;
  cfg.in_channels = 16;
  cfg.in_height = 6;
  cfg.in_width = 6;
  cfg.hidden1 = 256;
  cfg.hidden2 = 256;
  cfg.classes = 3;
  return cfg;
}

TrainHyperparams training_hyperparams(int max_epochs) {
  TrainHyperparams hp;
  hp.batch = 8;
  hp.max_epochs = max_epochs;
  hp.seed = 0;
  return hp;
}

Outcome head_training() {
  const auto sep = gen_synthetic({3, 20, {6, 6, 16}, 8.0, 0});
  auto h = head_init<float>(training_config(), 0);
  const auto st = head_train(h, labeled(sep, Split::kTrain), labeled(sep, Split::kTest), training_hyperparams(30));
  double best = 0.0;
  int reached = 0;
  for (const auto& r : st.history) {
    best = std::max(best, r.train_accuracy);
    if (!reached && r.train_accuracy >= 0.95) reached = r.epoch;
  }

  const auto flat = gen_synthetic({3, 20, {6, 6, 16}, 0.0, 0});
  auto h0 = head_init<float>(training_config(), 0);
  const auto st0 = head_train(h0, labeled(flat, Split::kTrain), labeled(flat, Split::kTest), training_hyperparams(100));
  for (const auto& d : st0.lr_drops)
    std::printf("  [log] lr drop after epoch %d: %g -> %g\n", d.epoch, d.from, d.to);
  const bool drop_ok = !st0.lr_drops.empty() && std::abs(st0.lr_drops[0].to - st0.lr_drops[0].from * 0.1) < 1e-15;
  return {reached > 0 && drop_ok,
          "separable: train accuracy " + fmt("%.3f", best) + (reached ? " (>= 0.95 at epoch " + std::to_string(reached) + ")" : "") +
              "; separation 0: " + std::to_string(st0.lr_drops.size()) + " lr drop(s)" +
              (st0.lr_drops.empty() ? "" : ", first after epoch " + std::to_string(st0.lr_drops[0].epoch))};
}

// ---------------------------------------------------------------- pca

Outcome pca_properties() {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> g(0.0, 1.0);
  MatrixXr A(60, 12);
  for (Eigen::Index i = 0; i < A.size(); ++i) A.data()[i] = g(rng) * (1.0 + static_cast<double>(i % 12));
  const PcaModel full = pca_fit(A, 12);
  const MatrixXr Y = pca_apply_rows(full, A);
  double iso = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = i + 1; j < A.rows(); ++j)
      iso = std::max(iso, std::abs((A.row(i) - A.row(j)).norm() - (Y.row(i) - Y.row(j)).norm()));

  MatrixXr B(100, 64);
  for (Eigen::Index i = 0; i < B.size(); ++i) B.data()[i] = g(rng);
  const PcaModel p = pca_fit(B, 16);
  const double err = oracle::mean_squared_residual(B, pca_reconstruct_rows(p, pca_apply_rows(p, B)));
  const double discarded = oracle::covariance_eigenvalues(B).tail(48).sum();
  return {iso <= 1e-9 && std::abs(err - discarded) <= 1e-6,
          "d=D max distance change " + fmt("%.3g", iso) + "; reconstruction " + fmt("%.9f", err) + " vs discarded " +
              fmt("%.9f", discarded)};
}

// ---------------------------------------------------------------- encoder dimensions

Outcome encoder_dimensions() {
  std::mt19937_64 rng(13);
  std::normal_distribution<double> g(0.0, 1.0);
  std::vector<float> data(6 * 6 * 512);
  for (auto& v : data) v = static_cast<float>(g(rng));
  const DescriptorSet D = extract_descriptors(Tensor({6, 6, 512}, data), true);
  auto random_rows = [&](Eigen::Index k) {
    MatrixXr M(k, 512);
    for (Eigen::Index i = 0; i < M.size(); ++i) M.data()[i] = g(rng);
    return M;
  };
  Codebook bovw_cb, vlad_cb;
  bovw_cb.centroids = random_rows(default_codebook_size(EncoderTag::kBovw));
  vlad_cb.centroids = random_rows(default_codebook_size(EncoderTag::kVlad));
  GmmModel gm;
  const Eigen::Index kg = default_codebook_size(EncoderTag::kIfk);
  gm.weights = VectorXr::Constant(kg, 1.0 / static_cast<double>(kg));
  gm.means = random_rows(kg);
  gm.variances = MatrixXr::Ones(kg, 512);
  const auto b = encode_bovw(bovw_cb, D).vector.size();
  const auto v = encode_vlad(vlad_cb, D).vector.size();
  const auto f = encode_ifk(gm, D).vector.size();
  return {b == 1000 && v == 51200 && f == 102400 && D.dim() == 512,
          "bovw " + std::to_string(b) + ", vlad " + std::to_string(v) + ", ifk " + std::to_string(f)};
}

}  // namespace

int main() {
  struct Criterion {
    const char* name;
    double budget_s;
    std::function<Outcome()> run;
  };
  const std::vector<Criterion> criteria = {
      {"metric oracle suite", 5, metric_oracle_suite},
      {"parameter-count ratios", 1, parameter_counts},
      {"head gradient check", 60, head_gradient_check},
      {"fisher gradient check", 30, fisher_gradient_check},
      {"optimization monotonicity", 60, optimization_monotonicity},
      {"end-to-end retrieval", 120, end_to_end},
      {"head training", 180, head_training},
      {"pca", 10, pca_properties},
      {"encoder dimensions", 1, encoder_dimensions},
  };
  int failed = 0;
  for (const auto& c : criteria) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = c.run();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    const bool in_time = secs < c.budget_s;
    const bool pass = o.pass && in_time;
    failed += !pass;
    std::printf("%s  %-26s %s [%.2fs of %.0fs%s]\n", pass ? "PASS" : "FAIL", c.name, o.detail.c_str(), secs,
                c.budget_s, in_time ? "" : ", over budget");
    std::fflush(stdout);
  }
  std::printf("%d of %zu criteria passed\n", static_cast<int>(criteria.size()) - failed, criteria.size());
  return failed == 0 ? 0 : 1;
}
