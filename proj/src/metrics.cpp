// Copyright 2026 The Capture Authors. All Rights Reserved.
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
#include <fstream>
#include <set>

#include "json.hpp"
#include "capture/retrieval.hpp"

namespace capture {

CutoffMetrics metrics_at(std::span<const char> relevance, int R, int N) {
  if (R <= 0) throw InputError("metrics need at least one relevant item");
  if (N <= 0) throw InputError("cutoff must be positive");
  CutoffMetrics m;
  int hits = 0;
  double ap_sum = 0.0;
  const int depth = std::min<int>(N, static_cast<int>(relevance.size()));
  for (int k = 0; k < depth; ++k) {
    if (!relevance[static_cast<size_t>(k)]) continue;
    ++hits;
    ap_sum += static_cast<double>(hits) / (k + 1);
  }
  m.prec = static_cast<double>(hits) / N;
  m.ap = ap_sum / std::min(R, N);
  m.ar = static_cast<double>(hits) / R;
  return m;
}

MetricReport evaluate(std::span<const RetrievalResult> results,
                      const std::map<int, std::vector<int>>& query_labels,
                      const std::map<int, int>& gallery_categories,
                      const std::vector<int>& cutoffs) {
  if (cutoffs.empty()) throw ConfigError("no metric cutoffs");
  if (std::set<int>(cutoffs.begin(), cutoffs.end()).size() != cutoffs.size())
    throw ConfigError("duplicate metric cutoffs");
  for (int n : cutoffs)
    if (n <= 0) throw ConfigError("metric cutoffs must be positive");
  MetricReport report;
  report.cutoffs = cutoffs;
  report.num_queries = static_cast<int>(results.size());
  for (int n : cutoffs) report.mean[n] = {};
  double chance = 0.0;

  for (const auto& r : results) {
    const auto it = query_labels.find(r.query_id);
    if (it == query_labels.end())
      throw InputError("no ground truth for query " + std::to_string(r.query_id));
    const std::set<int> labels(it->second.begin(), it->second.end());
    auto relevant = [&](int gallery_id) {
      const auto c = gallery_categories.find(gallery_id);
      if (c == gallery_categories.end())
        throw InputError("unknown gallery id " + std::to_string(gallery_id));
      return labels.count(c->second) > 0;
    };
    // A gallery item used as its own query (leave-one-out) is not a target.
    int R = 0;
    int pool = 0;
    for (const auto& [gid, cat] : gallery_categories) {
      if (gid == r.query_id) continue;
      ++pool;
      if (labels.count(cat)) ++R;
    }
    if (R == 0) {
      ++report.num_excluded;
      continue;
    }
    std::vector<char> rel;
    rel.reserve(r.ranked_ids.size());
    for (int g : r.ranked_ids) rel.push_back(relevant(g) ? 1 : 0);

    QueryMetrics q;
    q.query_id = r.query_id;
    q.relevant = R;
    for (int n : cutoffs) {
      q.at[n] = metrics_at(rel, R, n);
      report.mean[n].ap += q.at[n].ap;
      report.mean[n].ar += q.at[n].ar;
      report.mean[n].prec += q.at[n].prec;
    }
    chance += static_cast<double>(R) / pool;
    report.per_query.push_back(std::move(q));
  }
  const double scored = static_cast<double>(report.per_query.size());
  if (scored > 0) {
    for (auto& [n, m] : report.mean) {
      m.ap /= scored;
      m.ar /= scored;
      m.prec /= scored;
    }
    report.chance_precision = chance / scored;
  }
  return report;
}

std::string metric_formula_note() {
  return "Prec@N = hits(N)/N; AP@N = sum_{k<=N} Prec@k*rel(k) / min(R,N); "
         "AR@N = hits(N)/R; R = relevant gallery items; queries with R = 0 excluded; "
         "per-proposal scores merged per gallery item before ranking";
}

void write_metric_report(const std::string& json_path, const std::string& csv_path,
                         const MetricReport& report) {
  nlohmann::ordered_json j;
  j["formulas"] = metric_formula_note();
  j["cutoffs"] = report.cutoffs;
  j["num_queries"] = report.num_queries;
  j["num_scored"] = report.per_query.size();
  j["num_excluded"] = report.num_excluded;
  j["chance_precision"] = report.chance_precision;
  for (const auto& [n, m] : report.mean) {
    const std::string s = std::to_string(n);
    j["mAP@" + s] = m.ap;
    j["mAR@" + s] = m.ar;
    j["Prec@" + s] = m.prec;
  }
  std::ofstream js(json_path);
  if (!js) throw FormatError("cannot write " + json_path);
  js << j.dump(2) << '\n';

  std::ofstream cs(csv_path);
  if (!cs) throw FormatError("cannot write " + csv_path);
  cs << "query,relevant";
  for (int n : report.cutoffs) cs << ",AP@" << n << ",AR@" << n << ",Prec@" << n;
  cs << '\n';
  cs.precision(10);
  for (const auto& q : report.per_query) {
    cs << q.query_id << ',' << q.relevant;
    for (int n : report.cutoffs) {
      const auto& m = q.at.at(n);
      cs << ',' << m.ap << ',' << m.ar << ',' << m.prec;
    }
    cs << '\n';
  }
}

}  // namespace capture
