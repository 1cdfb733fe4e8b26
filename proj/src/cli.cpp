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

#include "hrrs/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include "CLI11.hpp"
#include "hrrs/pipeline.hpp"

namespace hrrs::cli {

namespace fs = std::filesystem;

namespace {

std::string fmt4(double v) {
  if (std::isnan(v)) return "n/a";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::string fmt_full(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

bool on_off(const std::string& s) { return s == "on"; }

// Records the default-filled options of a subcommand next to its output.
void write_provenance(const CLI::App* sub, const fs::path& out, bool out_is_dir) {
  const fs::path target = out_is_dir ? out / "effective_config.toml" : fs::path(out.string() + ".config.toml");
  write_text(target, "# " + sub->get_name() + "\n" + sub->config_to_str(true, false));
}

void print_report(std::ostream& out, const EvalReport& r) {
  out << "queries " << r.per_query.size() << (r.skipped.empty() ? "" : " (skipped " + std::to_string(r.skipped.size()) + ")")
      << ", protocol " << (r.protocol.self_included ? "self-included" : "self-excluded") << "\n";
  out << "ANMRR " << fmt4(r.anmrr) << "\n";
  out << "mAP   " << fmt4(r.map) << "\n";
  for (std::size_t c = 0; c < r.protocol.k_list.size(); ++c)
    out << "P@" << r.protocol.k_list[c] << " " << fmt4(r.p_at_k[c]) << "\n";
}

std::string ranked_csv(const RankedList& rl, const Index& idx, bool with_query) {
  std::unordered_map<std::string, std::string> cls;
  for (std::size_t i = 0; i < idx.size(); ++i) cls[idx.ids[i]] = idx.classes[i];
  std::string s;
  for (std::size_t r = 0; r < rl.ranked.size(); ++r) {
    if (with_query) s += rl.query_id + ",";
    s += std::to_string(r + 1) + "," + rl.ranked[r].id + "," + cls[rl.ranked[r].id] + "," +
         fmt_full(rl.ranked[r].distance) + "\n";
  }
  return s;
}

struct Options {
  // shared
  std::string manifest, features, model, out, index_dir, config, fit_manifest, log;
  std::string relu = "on";
  std::uint64_t seed = 0;
  // synth
  std::size_t classes = 3, per_class = 20;
  std::vector<std::size_t> shape = {6, 6, 16};
  double separation = 8.0;
  // codebook
  std::string kind = "kmeans";
  Eigen::Index k = 0;
  std::string split = "all";
  int max_iter = 100;
  double tol = 1e-4;
  // encode
  double alpha = 0.5;
  // pca
  Eigen::Index d = 0;
  std::vector<Eigen::Index> dims;
  // eval / query
  bool self_excluded = false;
  std::vector<std::size_t> k_list = kDefaultPrecisionCutoffs;
  std::string query_id;
  bool all_queries = false;
  bool long_format = false;
  // head
  HeadConfig head;
  TrainHyperparams hp;
  // sweep
  int workers = 0;
};

}  // namespace

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Content-based retrieval over CNN feature tensors", "hrrs"};
  app.require_subcommand(1);
  Options o;
  const auto relu_check = CLI::IsMember({"on", "off"});

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic feature-map dataset");
  synth->add_option("--classes", o.classes)->check(CLI::PositiveNumber);
  synth->add_option("--per-class", o.per_class)->check(CLI::PositiveNumber);
  synth->add_option("--shape", o.shape, "h,w,c")->delimiter(',')->expected(3);
  synth->add_option("--separation", o.separation)->check(CLI::NonNegativeNumber);
  synth->add_option("--seed", o.seed);
  synth->add_option("--out", o.out, "Output directory")->required();

  // codebook
  auto* codebook = app.add_subcommand("codebook", "Dictionary learning");
  codebook->require_subcommand(1);
  auto* cb_train = codebook->add_subcommand("train", "Fit a k-means codebook or a diagonal GMM");
  cb_train->add_option("--kind", o.kind)->check(CLI::IsMember({"kmeans", "gmm"}));
  cb_train->add_option("--k", o.k, "Cluster count")->required()->check(CLI::PositiveNumber);
  cb_train->add_option("--manifest", o.manifest)->required();
  cb_train->add_option("--relu", o.relu)->check(relu_check);
  cb_train->add_option("--split", o.split)->check(CLI::IsMember({"all", "train", "test"}));
  cb_train->add_option("--seed", o.seed);
  cb_train->add_option("--max-iter", o.max_iter);
  cb_train->add_option("--tol", o.tol);
  cb_train->add_option("--out", o.out, "Bundle directory")->required();

  // encode
  auto* encode = app.add_subcommand("encode", "Encode every image of a manifest");
  encode->add_option("--kind", o.kind)->required()->check(CLI::IsMember({"bovw", "vlad", "ifk", "fc_raw", "ldcnn"}));
  encode->add_option("--manifest", o.manifest)->required();
  encode->add_option("--model", o.model, "Codebook/GMM bundle or head checkpoint");
  encode->add_option("--relu", o.relu)->check(relu_check);
  encode->add_option("--alpha", o.alpha, "IFK power-normalization exponent");
  encode->add_option("--out", o.out, "Feature directory")->required();

  // pca
  auto* pca = app.add_subcommand("pca", "PCA reduction");
  pca->require_subcommand(1);
  auto* pca_fit_cmd = pca->add_subcommand("fit", "Fit PCA on the features of a manifest");
  pca_fit_cmd->add_option("--manifest", o.manifest, "Fit-set manifest")->required();
  pca_fit_cmd->add_option("--features", o.features)->required();
  pca_fit_cmd->add_option("--d", o.d)->required()->check(CLI::PositiveNumber);
  pca_fit_cmd->add_option("--out", o.out)->required();
  auto* pca_apply_cmd = pca->add_subcommand("apply", "Project a feature directory");
  pca_apply_cmd->add_option("--model", o.model)->required();
  pca_apply_cmd->add_option("--features", o.features)->required();
  pca_apply_cmd->add_option("--out", o.out)->required();
  auto* pca_sweep_cmd = pca->add_subcommand("sweep", "Retrieval quality across PCA dimensions");
  pca_sweep_cmd->add_option("--manifest", o.manifest)->required();
  pca_sweep_cmd->add_option("--fit-manifest", o.fit_manifest, "Defaults to --manifest");
  pca_sweep_cmd->add_option("--features", o.features)->required();
  pca_sweep_cmd->add_option("--dims", o.dims)->delimiter(',')->required();
  pca_sweep_cmd->add_flag("--self-excluded", o.self_excluded);
  pca_sweep_cmd->add_option("--k-list", o.k_list)->delimiter(',');
  pca_sweep_cmd->add_option("--out", o.out, "CSV path")->required();

  // head
  auto* head = app.add_subcommand("head", "mlpconv + GAP head");
  head->require_subcommand(1);
  auto* head_train_cmd = head->add_subcommand("train", "Train the head on feature maps");
  head_train_cmd->add_option("--manifest", o.manifest)->required();
  head_train_cmd->add_option("--hidden1", o.head.hidden1);
  head_train_cmd->add_option("--hidden2", o.head.hidden2);
  head_train_cmd->add_option("--dropout", o.head.dropout_rate);
  head_train_cmd->add_option("--init-std", o.head.init_std);
  head_train_cmd->add_option("--lr0", o.hp.lr0);
  head_train_cmd->add_option("--momentum", o.hp.momentum);
  head_train_cmd->add_option("--weight-decay", o.hp.weight_decay);
  head_train_cmd->add_option("--batch", o.hp.batch);
  head_train_cmd->add_option("--patience", o.hp.plateau_patience);
  head_train_cmd->add_option("--lr-drop", o.hp.lr_drop);
  head_train_cmd->add_option("--min-lr", o.hp.min_lr);
  head_train_cmd->add_option("--max-epochs", o.hp.max_epochs);
  head_train_cmd->add_option("--seed", o.seed);
  head_train_cmd->add_option("--out", o.out, "Checkpoint directory")->required();
  head_train_cmd->add_option("--log", o.log, "Training log CSV (default <out>/train_log.csv)");

  // index
  auto* index_cmd = app.add_subcommand("index", "Build a retrieval index from a feature directory");
  index_cmd->add_option("--manifest", o.manifest)->required();
  index_cmd->add_option("--features", o.features)->required();
  index_cmd->add_option("--out", o.out)->required();

  // query
  auto* query_cmd = app.add_subcommand("query", "Rank the index against a query image");
  query_cmd->add_option("--index", o.index_dir)->required();
  auto* id_opt = query_cmd->add_option("--id", o.query_id);
  auto* all_opt = query_cmd->add_flag("--all", o.all_queries, "Query every indexed image");
  id_opt->excludes(all_opt);
  query_cmd->add_flag("--exclude-self", o.self_excluded);
  query_cmd->add_flag("--long", o.long_format, "With --all: one long-format CSV instead of one file per query");
  query_cmd->add_option("--out", o.out, "CSV path (or directory for --all without --long); stdout if omitted");

  // eval
  auto* eval = app.add_subcommand("eval", "Score every image as a query");
  eval->add_option("--manifest", o.manifest)->required();
  auto* feat_opt = eval->add_option("--features", o.features);
  auto* idx_opt = eval->add_option("--index", o.index_dir);
  feat_opt->excludes(idx_opt);
  auto* incl = eval->add_flag("--self-included", "Keep the query in its list and ground truth (default)");
  auto* excl = eval->add_flag("--self-excluded", o.self_excluded);
  incl->excludes(excl);
  eval->add_option("--k-list", o.k_list)->delimiter(',');
  eval->add_option("--out", o.out, "Report directory")->required();

  // sweep
  auto* sweep = app.add_subcommand("sweep", "Evaluate a grid of pipeline configurations");
  sweep->add_option("--config", o.config)->required();
  sweep->add_option("--workers", o.workers, "Overrides the config's worker count");
  sweep->add_option("--out", o.out, "Output directory")->required();

  std::vector<std::string> rev(args.rbegin(), args.rend());
  try {
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << "\n\n" << app.help();
    return kExitUsage;
  }

  try {
    if (synth->parsed()) {
      SyntheticOptions so{o.classes, o.per_class, o.shape, o.separation, o.seed};
      const fs::path mp = write_synthetic(gen_synthetic(so), o.out);
      write_provenance(synth, o.out, true);
      out << "wrote " << mp.string() << "\n";
    } else if (cb_train->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      const MatrixXr X = collect_descriptors(m, load_tensors(m), on_off(o.relu), parse_split(o.split));
      const FitOptions fit{o.seed, o.max_iter, o.tol};
      if (o.kind == "kmeans") {
        const Codebook cb = kmeans_fit(X, o.k, fit);
        save_codebook(cb, o.out);
        out << "kmeans k=" << cb.k() << " d=" << cb.dim() << " iterations=" << cb.inertia_history.size() - 1
            << " inertia=" << fmt_full(cb.inertia_history.back()) << "\n";
      } else {
        const GmmModel g = gmm_fit(X, o.k, fit);
        save_gmm(g, o.out);
        out << "gmm k=" << g.k() << " d=" << g.dim() << " iterations=" << g.loglik_history.size() - 1
            << " mean_loglik=" << fmt_full(g.loglik_history.back()) << "\n";
      }
      write_provenance(cb_train, o.out, true);
    } else if (encode->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      const EncoderTag kind = parse_encoder_tag(o.kind);
      Codebook cb;
      GmmModel g;
      HeadCheckpoint ck;
      EncodeModels models;
      if (kind != EncoderTag::kFcRaw && o.model.empty()) throw ValidationError("--model is required for " + o.kind);
      if (kind == EncoderTag::kBovw || kind == EncoderTag::kVlad) {
        cb = load_codebook(o.model);
        models.codebook = &cb;
      } else if (kind == EncoderTag::kIfk) {
        g = load_gmm(o.model);
        models.gmm = &g;
      } else if (kind == EncoderTag::kLdcnn) {
        ck = load_head(o.model);
        models.head = &ck.head;
      }
      const FeatureSet fs_out = encode_dataset(m, load_tensors(m), kind, models, on_off(o.relu), o.alpha);
      save_features(fs_out, o.out);
      write_provenance(encode, o.out, true);
      out << "encoded " << fs_out.size() << " images as " << o.kind << " (" << fs_out.front().second.vector.size()
          << "-D)\n";
    } else if (pca_fit_cmd->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      const PcaModel p = pca_fit(feature_matrix(load_features(o.features), m), o.d);
      save_pca(p, o.out);
      write_provenance(pca_fit_cmd, o.out, true);
      out << "pca " << p.input_dim() << " -> " << p.output_dim() << "\n";
    } else if (pca_apply_cmd->parsed()) {
      const FeatureSet projected = project_features(load_features(o.features), load_pca(o.model));
      save_features(projected, o.out);
      write_provenance(pca_apply_cmd, o.out, true);
      out << "projected " << projected.size() << " vectors\n";
    } else if (pca_sweep_cmd->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      const DatasetManifest fit_m = o.fit_manifest.empty() ? m : load_manifest(o.fit_manifest);
      EvalOptions eo{!o.self_excluded, o.k_list};
      std::vector<Eigen::Index> skipped;
      const auto rows = pca_sweep(load_features(o.features), m, fit_m, o.dims, eo, &skipped);
      std::string csv = "dim,ANMRR,mAP";
      for (auto k : eo.k_list) csv += ",P@" + std::to_string(k);
      csv += "\n";
      for (const auto& r : rows) {
        csv += std::to_string(r.dim) + "," + fmt_full(r.report.anmrr) + "," + fmt_full(r.report.map);
        for (double p : r.report.p_at_k) csv += "," + (std::isnan(p) ? std::string() : fmt_full(p));
        csv += "\n";
        out << "d=" << r.dim << " ANMRR " << fmt4(r.report.anmrr) << " mAP " << fmt4(r.report.map) << "\n";
      }
      for (auto d : skipped) err << "skipped d=" << d << " (exceeds achievable rank)\n";
      write_text(o.out, csv);
      write_provenance(pca_sweep_cmd, o.out, false);
    } else if (head_train_cmd->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      TrainHyperparams hp = o.hp;
      hp.seed = o.seed;
      const fs::path log_path = o.log.empty() ? fs::path(o.out) / "train_log.csv" : fs::path(o.log);
      std::string log = "epoch,lr,train_loss,train_acc,test_acc\n";
      auto on_epoch = [&](const EpochRecord& r) {
        log += std::to_string(r.epoch) + "," + fmt_full(r.lr) + "," + fmt_full(r.train_loss) + "," +
               fmt_full(r.train_accuracy) + "," + fmt_full(r.test_accuracy) + "\n";
        out << "epoch " << r.epoch << " lr " << r.lr << " loss " << fmt4(r.train_loss) << " train_acc "
            << fmt4(r.train_accuracy) << " test_acc " << fmt4(r.test_accuracy) << "\n";
      };
      const HeadCheckpoint ck = train_head_on_manifest(m, load_tensors(m), o.head, hp, on_epoch);
      for (const auto& d : ck.lr_drops)
        out << "lr drop after epoch " << d.epoch << ": " << d.from << " -> " << d.to << "\n";
      save_head(ck, o.out);
      write_text(log_path, log);
      write_provenance(head_train_cmd, o.out, true);
    } else if (index_cmd->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      const Index idx = build_index(load_features(o.features), m);
      save_index(idx, o.out);
      write_provenance(index_cmd, o.out, true);
      out << "indexed " << idx.size() << " vectors of dimension " << idx.dim() << "\n";
    } else if (query_cmd->parsed()) {
      const Index idx = load_index(o.index_dir);
      const bool include_self = !o.self_excluded;
      if (!o.all_queries) {
        if (o.query_id.empty()) throw ValidationError("query needs --id or --all");
        const std::string csv =
            "rank,id,class,distance\n" + ranked_csv(query(idx, o.query_id, include_self), idx, false);
        if (o.out.empty()) out << csv;
        else write_text(o.out, csv);
      } else if (o.long_format || o.out.empty()) {
        std::string csv = "query_id,rank,id,class,distance\n";
        for (const auto& id : idx.ids) csv += ranked_csv(query(idx, id, include_self), idx, true);
        if (o.out.empty()) out << csv;
        else write_text(o.out, csv);
      } else {
        for (std::size_t i = 0; i < idx.size(); ++i) {
          char name[32];
          std::snprintf(name, sizeof name, "query_%06zu.csv", i);
          write_text(fs::path(o.out) / name, "# query " + idx.ids[i] + "\nrank,id,class,distance\n" +
                                                 ranked_csv(query(idx, idx.ids[i], include_self), idx, false));
        }
      }
    } else if (eval->parsed()) {
      const DatasetManifest m = load_manifest(o.manifest);
      if (o.features.empty() == o.index_dir.empty()) throw ValidationError("eval needs exactly one of --features or --index");
      const Index idx = o.index_dir.empty() ? build_index(load_features(o.features), m) : load_index(o.index_dir);
      const EvalReport r = evaluate_dataset(idx, m, EvalOptions{!o.self_excluded, o.k_list});
      write_eval_report(r, o.out);
      write_provenance(eval, o.out, true);
      print_report(out, r);
    } else if (sweep->parsed()) {
      const fs::path cfg_path(o.config);
      PipelineConfig cfg = parse_pipeline_config(read_text(cfg_path), cfg_path.parent_path());
      if (o.workers > 0) cfg.workers = o.workers;
      const char* env_cache = std::getenv("HRRS_CACHE_DIR");
      const fs::path cache = env_cache && *env_cache ? fs::path(env_cache) : fs::path(o.out) / "cache";
      const auto rows = run_sweep(cfg, cache, [&](const std::string& line) { err << line << "\n"; });
      write_text(fs::path(o.out) / "sweep.csv", sweep_csv(cfg, rows));
      write_text(fs::path(o.out) / "effective_config.json", pipeline_config_json(cfg));
      for (const auto& r : rows)
        out << to_string(r.cell.encoder) << " relu=" << (r.cell.relu ? "on" : "off") << " pca=" << r.cell.pca_dim
            << " ANMRR " << fmt4(r.anmrr) << " mAP " << fmt4(r.map) << "\n";
    }
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return kExitFailure;
  }
  return kExitOk;
}

}  // namespace hrrs::cli
