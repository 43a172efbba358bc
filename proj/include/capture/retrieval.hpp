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

// Gallery search and the truncated ranking metrics.

#pragma once

#include <map>
#include <span>
#include <string>
#include <vector>

#include "capture/common.hpp"
#include "capture/corpus.hpp"
#include "capture/model.hpp"
#include "capture/proposer.hpp"

namespace capture {

enum class MergeMode { kMax, kMean };

const char* merge_mode_name(MergeMode m);
MergeMode parse_merge_mode(const std::string& name);

// Options shared by gallery and query encoding.
struct EncodeOptions {
  ProposerConfig proposer;
  bool concat = true;  // append the contrastive product to the joint feature
};

struct GalleryIndex {
  std::vector<int> ids;
  Matrix embeddings;  // one unit-norm row per id
  // Held for evaluation only; ranking never reads it.
  std::map<int, int> categories;
};

struct RetrievalResult {
  int query_id = -1;
  std::vector<int> ranked_ids;
  std::vector<double> scores;  // non-increasing
};

// One embedding row per region, each encoded alone with the full caption.
Matrix encode_regions(const CaptureModel& model, const TokenSequence& tokens,
                      const RegionSet& regions, bool concat);

// Gallery samples are encoded with their single largest proposal.
GalleryIndex build_gallery_index(std::span<const Sample* const> gallery, const CaptureModel& model,
                                 const RegionEncoder& encoder, const EncodeOptions& options);

// Scores every gallery row against each query row by cosine similarity and
// merges per gallery item. Ties go to the smaller gallery id.
RetrievalResult rank_gallery(int query_id, const Matrix& query_embeddings,
                             const GalleryIndex& index, MergeMode merge,
                             int exclude_id = -1);

RetrievalResult retrieve(const Sample& query, const CaptureModel& model,
                         const RegionEncoder& encoder, const GalleryIndex& index,
                         const EncodeOptions& options, MergeMode merge = MergeMode::kMax);

// Leave-one-out single-product retrieval over the gallery itself.
std::vector<RetrievalResult> retrieve_within_gallery(const GalleryIndex& index);

void write_results(const std::string& path, std::span<const RetrievalResult> results);
std::vector<RetrievalResult> read_results(const std::string& path);

// ---- metrics (metrics.cpp) ----

struct CutoffMetrics {
  double ap = 0.0;
  double ar = 0.0;
  double prec = 0.0;
};

// relevance[k] is 1 when the item at rank k+1 is relevant; R is the total
// number of relevant gallery items (R > 0).
CutoffMetrics metrics_at(std::span<const char> relevance, int R, int N);

struct QueryMetrics {
  int query_id = -1;
  int relevant = 0;  // R
  std::map<int, CutoffMetrics> at;
};

struct MetricReport {
  std::vector<int> cutoffs;
  std::map<int, CutoffMetrics> mean;  // mAP@N, mAR@N, Prec@N
  int num_queries = 0;
  int num_excluded = 0;  // queries with R = 0
  double chance_precision = 0.0;  // mean R / gallery size over scored queries
  std::vector<QueryMetrics> per_query;
};

inline const std::vector<int> kDefaultCutoffs{10, 50, 100};

// Relevance of gallery item g for query q: category(g) is in labels(q).
// Queries absent from `query_labels` are an error.
MetricReport evaluate(std::span<const RetrievalResult> results,
                      const std::map<int, std::vector<int>>& query_labels,
                      const std::map<int, int>& gallery_categories,
                      const std::vector<int>& cutoffs = kDefaultCutoffs);

// Formula strings written into every report header.
std::string metric_formula_note();

void write_metric_report(const std::string& json_path, const std::string& csv_path,
                         const MetricReport& report);

}  // namespace capture
