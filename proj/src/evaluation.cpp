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

#include "hrrs/evaluation.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <unordered_map>

#include "json.hpp"

namespace hrrs {

namespace {

void check_judgment(const QueryJudgment& j) {
  if (j.ground_truth == 0) throw EmptyGroundTruth("query \"" + j.query_id + "\" has an empty ground-truth set");
  if (j.relevant_ranks.size() > j.ground_truth)
    throw ValidationError("more relevant ranks than ground-truth items");
}

double mean_in_order(const std::vector<double>& v, const char* what) {
  if (v.empty()) throw ValidationError(std::string(what) + " of an empty list");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

std::string fmt_full(double v) {
  if (std::isnan(v)) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

QueryJudgment judge(const RankedList& rl, const std::set<std::string>& relevant_in) {
  std::set<std::string> relevant = relevant_in;
  if (!rl.self_included) relevant.erase(rl.query_id);
  if (relevant.empty()) throw EmptyGroundTruth("query \"" + rl.query_id + "\" has an empty ground-truth set");

  QueryJudgment j;
  j.query_id = rl.query_id;
  j.ground_truth = relevant.size();
  j.list_length = rl.ranked.size();
  for (std::size_t r = 0; r < rl.ranked.size(); ++r)
    if (relevant.count(rl.ranked[r].id)) j.relevant_ranks.push_back(r + 1);
  if (j.relevant_ranks.size() != relevant.size())
    throw ValidationError("ranked list for \"" + rl.query_id + "\" is missing ground-truth items");
  return j;
}

double nmrr(const QueryJudgment& j) {
  check_judgment(j);
  const double ng = static_cast<double>(j.ground_truth);
  const double K = 2.0 * ng;
  const double penalty = 1.25 * K;
  double sum = 0.0;
  for (auto r : j.relevant_ranks) sum += static_cast<double>(r) > K ? penalty : static_cast<double>(r);
  sum += static_cast<double>(j.ground_truth - j.relevant_ranks.size()) * penalty;
  const double ar = sum / ng;
  const double best = 0.5 * (1.0 + ng);
  return (ar - best) / (penalty - best);
}

double anmrr(const std::vector<double>& v) { return mean_in_order(v, "anmrr"); }

double average_precision(const QueryJudgment& j) {
  check_judgment(j);
  double sum = 0.0;
  for (std::size_t i = 0; i < j.relevant_ranks.size(); ++i)
    sum += static_cast<double>(i + 1) / static_cast<double>(j.relevant_ranks[i]);
  return sum / static_cast<double>(j.ground_truth);
}

double mean_ap(const std::vector<double>& v) { return mean_in_order(v, "mean_ap"); }

double precision_at_k(const QueryJudgment& j, std::size_t k) {
  if (k < 1 || k > j.list_length)
    throw ValidationError("cutoff k=" + std::to_string(k) + " outside [1, " + std::to_string(j.list_length) + "]");
  const auto hits = std::count_if(j.relevant_ranks.begin(), j.relevant_ranks.end(),
                                  [k](std::size_t r) { return r <= k; });
  return static_cast<double>(hits) / static_cast<double>(k);
}

EvalReport evaluate_dataset(const Index& idx, const DatasetManifest& manifest, const EvalOptions& opts) {
  for (const auto& id : idx.ids) manifest.entry(id);
  std::map<std::string, std::set<std::string>> members;
  for (std::size_t i = 0; i < idx.size(); ++i) members[idx.classes[i]].insert(idx.ids[i]);

  EvalReport rep;
  rep.protocol = opts;
  std::vector<double> nmrrs, aveps;
  std::vector<double> p_sums(opts.k_list.size(), 0.0);
  std::vector<std::size_t> p_counts(opts.k_list.size(), 0);

  for (std::size_t q = 0; q < idx.size(); ++q) {
    const RankedList rl = query(idx, idx.ids[q], opts.self_included);
    QueryJudgment j;
    try {
      j = judge(rl, members.at(idx.classes[q]));
    } catch (const EmptyGroundTruth&) {
      rep.skipped.push_back(idx.ids[q]);
      continue;
    }
    QueryMetrics m;
    m.query_id = idx.ids[q];
    m.class_label = idx.classes[q];
    m.nmrr = nmrr(j);
    m.avep = average_precision(j);
    for (std::size_t c = 0; c < opts.k_list.size(); ++c) {
      const std::size_t k = opts.k_list[c];
      if (k >= 1 && k <= j.list_length) {
        m.p_at_k.push_back(precision_at_k(j, k));
        p_sums[c] += m.p_at_k.back();
        ++p_counts[c];
      } else {
        m.p_at_k.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    nmrrs.push_back(m.nmrr);
    aveps.push_back(m.avep);
    rep.per_query.push_back(std::move(m));
  }
  if (rep.per_query.empty()) throw ValidationError("no query has a non-empty ground-truth set");
  rep.anmrr = anmrr(nmrrs);
  rep.map = mean_ap(aveps);
  for (std::size_t c = 0; c < opts.k_list.size(); ++c)
    rep.p_at_k.push_back(p_counts[c] ? p_sums[c] / static_cast<double>(p_counts[c])
                                     : std::numeric_limits<double>::quiet_NaN());
  return rep;
}

void write_eval_report(const EvalReport& r, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    std::ofstream out(dir / "per_query.csv");
    if (!out) throw IoError("cannot write " + (dir / "per_query.csv").string());
    out << "query_id,class,NMRR,AveP";
    for (auto k : r.protocol.k_list) out << ",P@" << k;
    out << "\n";
    for (const auto& q : r.per_query) {
      out << q.query_id << "," << q.class_label << "," << fmt_full(q.nmrr) << "," << fmt_full(q.avep);
      for (double p : q.p_at_k) out << "," << fmt_full(p);
      out << "\n";
    }
  }
  {
    std::ofstream out(dir / "aggregate.csv");
    if (!out) throw IoError("cannot write " + (dir / "aggregate.csv").string());
    out << "metric,value\n";
    out << "ANMRR," << fmt_full(r.anmrr) << "\n";
    out << "mAP," << fmt_full(r.map) << "\n";
    for (std::size_t c = 0; c < r.protocol.k_list.size(); ++c)
      out << "P@" << r.protocol.k_list[c] << "," << fmt_full(r.p_at_k[c]) << "\n";
  }
  nlohmann::json j;
  j["protocol"] = {{"self_included", r.protocol.self_included}, {"k_list", r.protocol.k_list}};
  j["aggregates"] = {{"ANMRR", r.anmrr}, {"mAP", r.map}};
  for (std::size_t c = 0; c < r.protocol.k_list.size(); ++c) {
    const std::string key = "P@" + std::to_string(r.protocol.k_list[c]);
    j["aggregates"][key] = std::isnan(r.p_at_k[c]) ? nlohmann::json(nullptr) : nlohmann::json(r.p_at_k[c]);
  }
  j["num_queries"] = r.per_query.size();
  j["skipped"] = r.skipped;
  j["per_query"] = nlohmann::json::array();
  for (const auto& q : r.per_query) {
    nlohmann::json pk = nlohmann::json::object();
    for (std::size_t c = 0; c < q.p_at_k.size(); ++c)
      pk["P@" + std::to_string(r.protocol.k_list[c])] =
          std::isnan(q.p_at_k[c]) ? nlohmann::json(nullptr) : nlohmann::json(q.p_at_k[c]);
    j["per_query"].push_back({{"query_id", q.query_id}, {"class", q.class_label}, {"NMRR", q.nmrr},
                              {"AveP", q.avep}, {"P@k", pk}});
  }
  std::ofstream out(dir / "summary.json");
  if (!out) throw IoError("cannot write " + (dir / "summary.json").string());
  out << j.dump(2) << "\n";
}

}  // namespace hrrs
