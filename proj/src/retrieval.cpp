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
#include <numeric>

#include "json.hpp"

#include "capture/retrieval.hpp"

namespace capture {

const char* merge_mode_name(MergeMode m) { return m == MergeMode::kMax ? "max" : "mean"; }

MergeMode parse_merge_mode(const std::string& name) {
  if (name == "max") return MergeMode::kMax;
  if (name == "mean") return MergeMode::kMean;
  throw ConfigError("unknown merge mode: " + name);
}

Matrix encode_regions(const CaptureModel& model, const TokenSequence& tokens,
                      const RegionSet& regions, bool concat) {
  if (regions.size() == 0) throw InputError("no regions to encode");
  Matrix out;
  for (int r = 0; r < regions.size(); ++r) {
    const int rows[] = {r};
    const Vector e = instance_embedding(model.forward(tokens, regions.subset(rows)), concat);
    if (out.size() == 0) out.resize(regions.size(), e.size());
    out.row(r) = e.transpose();
  }
  return out;
}

GalleryIndex build_gallery_index(std::span<const Sample* const> gallery, const CaptureModel& model,
                                 const RegionEncoder& encoder, const EncodeOptions& options) {
  if (gallery.empty()) throw InputError("gallery is empty");
  GalleryIndex index;
  std::vector<Vector> rows;
  for (const Sample* s : gallery) {
    if (s->split() != Split::kGallery || !s->category_id())
      throw InputError("gallery index needs labeled single-product samples");
    const auto gt = s->ground_truth_boxes();
    const auto boxes = propose_regions(s->image(), &gt, options.proposer,
                                       static_cast<std::uint64_t>(s->id()));
    const auto largest = std::max_element(boxes.begin(), boxes.end(), [](const Box& a, const Box& b) {
      return a.area() < b.area();
    });
    const RegionSet region = encoder.encode(s->image(), std::span<const Box>(&*largest, 1));
    const Matrix e = encode_regions(model, model.tokenize(s->caption()), region, options.concat);
    rows.push_back(e.row(0).transpose());
    index.ids.push_back(s->id());
    index.categories[s->id()] = *s->category_id();
  }
  index.embeddings.resize(static_cast<Eigen::Index>(rows.size()), rows.front().size());
  for (size_t i = 0; i < rows.size(); ++i)
    index.embeddings.row(static_cast<Eigen::Index>(i)) = rows[i].transpose();
  return index;
}

RetrievalResult rank_gallery(int query_id, const Matrix& query_embeddings,
                             const GalleryIndex& index, MergeMode merge, int exclude_id) {
  if (query_embeddings.rows() == 0) throw InputError("query has no embeddings");
  if (query_embeddings.cols() != index.embeddings.cols())
    throw InputError("query and gallery embedding widths differ");
  // Rows are unit norm, so the dot product is the cosine similarity.
  const Matrix sims = query_embeddings * index.embeddings.transpose();
  const Eigen::Index g = sims.cols();
  Vector merged(g);
  for (Eigen::Index j = 0; j < g; ++j)
    merged(j) = merge == MergeMode::kMax ? sims.col(j).maxCoeff() : sims.col(j).mean();

  std::vector<Eigen::Index> order;
  for (Eigen::Index j = 0; j < g; ++j)
    if (index.ids[static_cast<size_t>(j)] != exclude_id) order.push_back(j);
  std::sort(order.begin(), order.end(), [&](Eigen::Index a, Eigen::Index b) {
    if (merged(a) != merged(b)) return merged(a) > merged(b);
    return index.ids[static_cast<size_t>(a)] < index.ids[static_cast<size_t>(b)];
  });
  RetrievalResult out;
  out.query_id = query_id;
  for (auto j : order) {
    out.ranked_ids.push_back(index.ids[static_cast<size_t>(j)]);
    out.scores.push_back(merged(j));
  }
  return out;
}

RetrievalResult retrieve(const Sample& query, const CaptureModel& model,
                         const RegionEncoder& encoder, const GalleryIndex& index,
                         const EncodeOptions& options, MergeMode merge) {
  const auto gt = query.ground_truth_boxes();
  const RegionSet regions = extract_regions(query.image(), &gt, options.proposer, encoder,
                                            static_cast<std::uint64_t>(query.id()));
  const Matrix q = encode_regions(model, model.tokenize(query.caption()), regions, options.concat);
  return rank_gallery(query.id(), q, index, merge);
}

std::vector<RetrievalResult> retrieve_within_gallery(const GalleryIndex& index) {
  std::vector<RetrievalResult> out;
  for (size_t i = 0; i < index.ids.size(); ++i) {
    const Matrix q = index.embeddings.row(static_cast<Eigen::Index>(i));
    out.push_back(rank_gallery(index.ids[i], q, index, MergeMode::kMax, index.ids[i]));
  }
  return out;
}

void write_results(const std::string& path, std::span<const RetrievalResult> results) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  for (const auto& r : results) {
    nlohmann::json j;
    j["query"] = r.query_id;
    j["ranked"] = r.ranked_ids;
    j["scores"] = r.scores;
    os << j.dump() << '\n';
  }
}

std::vector<RetrievalResult> read_results(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw FormatError("cannot read " + path);
  std::vector<RetrievalResult> out;
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    try {
      const auto j = nlohmann::json::parse(line);
      RetrievalResult r;
      r.query_id = j.at("query").get<int>();
      r.ranked_ids = j.at("ranked").get<std::vector<int>>();
      r.scores = j.at("scores").get<std::vector<double>>();
      if (r.ranked_ids.size() != r.scores.size()) throw FormatError("ranked/scores length mismatch");
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(path + ": " + e.what());
    }
  }
  return out;
}

}  // namespace capture
