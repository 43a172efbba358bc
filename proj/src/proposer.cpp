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

#include "capture/proposer.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <queue>

#include "capture/binary_io.hpp"
#include "json.hpp"

namespace capture {
namespace {

constexpr char kRegionMagic[8] = {'P', '1', 'M', 'R', 'G', 'N', '1', '\0'};

std::array<double, 3> border_median(const Image& img) {
  std::array<double, 3> out{};
  for (int c = 0; c < 3; ++c) {
    std::vector<float> v;
    for (int x = 0; x < img.width; ++x) {
      v.push_back(img.at(0, x, c));
      v.push_back(img.at(img.height - 1, x, c));
    }
    for (int y = 1; y + 1 < img.height; ++y) {
      v.push_back(img.at(y, 0, c));
      v.push_back(img.at(y, img.width - 1, c));
    }
    auto mid = v.begin() + static_cast<std::ptrdiff_t>(v.size() / 2);
    std::nth_element(v.begin(), mid, v.end());
    out[c] = *mid;
  }
  return out;
}

std::vector<Box> heuristic_boxes(const Image& img, const ProposerConfig& config) {
  const auto bg = border_median(img);
  const int h = img.height, w = img.width;
  std::vector<char> fg(static_cast<size_t>(h) * w, 0);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double dev = 0.299 * std::abs(img.at(y, x, 0) - bg[0]) +
                         0.587 * std::abs(img.at(y, x, 1) - bg[1]) +
                         0.114 * std::abs(img.at(y, x, 2) - bg[2]);
      fg[static_cast<size_t>(y) * w + x] = dev > config.threshold;
    }
  }
  struct Component {
    int x0, y0, x1, y1;
  };
  std::vector<Component> comps;
  std::vector<char> seen(fg.size(), 0);
  std::queue<std::pair<int, int>> q;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const size_t p = static_cast<size_t>(y) * w + x;
      if (!fg[p] || seen[p]) continue;
      Component c{x, y, x, y};
      seen[p] = 1;
      q.push({y, x});
      while (!q.empty()) {
        auto [cy, cx] = q.front();
        q.pop();
        c.x0 = std::min(c.x0, cx);
        c.x1 = std::max(c.x1, cx);
        c.y0 = std::min(c.y0, cy);
        c.y1 = std::max(c.y1, cy);
        constexpr int dy[4] = {-1, 1, 0, 0};
        constexpr int dx[4] = {0, 0, -1, 1};
        for (int k = 0; k < 4; ++k) {
          const int ny = cy + dy[k], nx = cx + dx[k];
          if (ny < 0 || ny >= h || nx < 0 || nx >= w) continue;
          const size_t np = static_cast<size_t>(ny) * w + nx;
          if (fg[np] && !seen[np]) {
            seen[np] = 1;
            q.push({ny, nx});
          }
        }
      }
      comps.push_back(c);
    }
  }
  std::vector<Box> boxes;
  for (const auto& c : comps) {
    Box b{static_cast<double>(c.x0) / w, static_cast<double>(c.y0) / h,
          static_cast<double>(c.x1 + 1) / w, static_cast<double>(c.y1 + 1) / h};
    if (b.area() < config.min_area_fraction) continue;
    boxes.push_back(b);
  }
  // Keep the largest r_max components, then restore raster order.
  if (static_cast<int>(boxes.size()) > config.r_max) {
    std::vector<size_t> idx(boxes.size());
    for (size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    std::stable_sort(idx.begin(), idx.end(),
                     [&](size_t a, size_t b) { return boxes[a].area() > boxes[b].area(); });
    idx.resize(static_cast<size_t>(config.r_max));
    std::sort(idx.begin(), idx.end());
    std::vector<Box> kept;
    for (size_t i : idx) kept.push_back(boxes[i]);
    boxes = std::move(kept);
  }
  return boxes;
}

Box random_box(Rng& rng) {
  std::uniform_real_distribution<double> side(0.1, 0.4), unit(0.0, 1.0);
  const double w = side(rng), h = side(rng);
  const double x = unit(rng) * (1.0 - w), y = unit(rng) * (1.0 - h);
  return Box{x, y, x + w, y + h};
}

}  // namespace

const char* proposal_mode_name(ProposalMode m) {
  switch (m) {
    case ProposalMode::kOracle: return "oracle";
    case ProposalMode::kJitter: return "jitter";
    case ProposalMode::kHeuristic: return "heuristic";
    case ProposalMode::kWholeImage: return "whole_image";
  }
  return "?";
}

ProposalMode parse_proposal_mode(const std::string& name) {
  if (name == "oracle") return ProposalMode::kOracle;
  if (name == "jitter") return ProposalMode::kJitter;
  if (name == "heuristic") return ProposalMode::kHeuristic;
  if (name == "whole_image") return ProposalMode::kWholeImage;
  throw ConfigError("unknown proposer mode '" + name + "'");
}

void ProposerConfig::validate() const {
  if (r_max < 1) throw ConfigError("r_max must be >= 1");
  if (grid < 1) throw ConfigError("grid must be >= 1");
  if (d_v < 1) throw ConfigError("d_v must be >= 1");
  if (!(jitter_sigma >= 0.0)) throw ConfigError("jitter_sigma must be >= 0");
  if (!(miss_prob >= 0.0 && miss_prob <= 1.0)) throw ConfigError("miss_prob must lie in [0,1]");
  if (!(spurious_rate >= 0.0)) throw ConfigError("spurious_rate must be >= 0");
}

RegionSet RegionSet::subset(std::span<const int> rows) const {
  RegionSet out;
  out.features.resize(static_cast<Eigen::Index>(rows.size()), features.cols());
  out.spatial.resize(static_cast<Eigen::Index>(rows.size()), spatial.cols());
  for (size_t i = 0; i < rows.size(); ++i) {
    const auto r = static_cast<size_t>(rows[i]);
    out.boxes.push_back(boxes.at(r));
    out.degenerate.push_back(degenerate.at(r));
    out.features.row(static_cast<Eigen::Index>(i)) = features.row(rows[i]);
    out.spatial.row(static_cast<Eigen::Index>(i)) = spatial.row(rows[i]);
  }
  return out;
}

std::array<double, kSpatialDims> spatial_encoding(const Box& b) {
  return {b.x1, b.y1, b.x2, b.y2, (b.x2 - b.x1) * (b.y2 - b.y1)};
}

std::vector<Box> propose_regions(const Image& image, const std::vector<Box>* ground_truth,
                                 const ProposerConfig& config, std::uint64_t stream) {
  config.validate();
  std::vector<Box> boxes;
  switch (config.mode) {
    case ProposalMode::kOracle:
      if (!ground_truth) throw UsageError("oracle proposals need ground-truth boxes");
      boxes = *ground_truth;
      break;
    case ProposalMode::kJitter: {
      if (!ground_truth) throw UsageError("jitter proposals need ground-truth boxes");
      Rng rng(mix_seed(config.seed, 0x717e5ULL, stream));
      std::normal_distribution<double> noise(0.0, 1.0);
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      for (const auto& gt : *ground_truth) {
        Box b = gt;
        if (config.jitter_sigma > 0.0) {
          b.x1 += config.jitter_sigma * noise(rng);
          b.y1 += config.jitter_sigma * noise(rng);
          b.x2 += config.jitter_sigma * noise(rng);
          b.y2 += config.jitter_sigma * noise(rng);
          if (b.x1 > b.x2) std::swap(b.x1, b.x2);
          if (b.y1 > b.y2) std::swap(b.y1, b.y2);
        }
        if (config.miss_prob > 0.0 && unit(rng) < config.miss_prob) continue;
        boxes.push_back(b);
      }
      if (config.spurious_rate > 0.0) {
        const int extra = std::poisson_distribution<int>(config.spurious_rate)(rng);
        for (int i = 0; i < extra; ++i) boxes.push_back(random_box(rng));
      }
      break;
    }
    case ProposalMode::kHeuristic:
      boxes = heuristic_boxes(image, config);
      break;
    case ProposalMode::kWholeImage:
      return {Box::whole()};
  }
  std::vector<Box> out;
  for (const auto& b : boxes) {
    const Box c = b.clipped();
    if (c.valid()) out.push_back(c);
    if (static_cast<int>(out.size()) == config.r_max) break;
  }
  if (out.empty()) out.push_back(Box::whole());
  return out;
}

// ---------------------------------------------------------------------------

RegionEncoder::RegionEncoder(const ProposerConfig& config) : grid_(config.grid) {
  config.validate();
  const int in = 3 * grid_ * grid_;
  const int out = config.d_v;
  Rng rng(mix_seed(config.seed, 0x9e0cULL));
  std::normal_distribution<double> normal(0.0, 1.0);
  // QR of a tall Gaussian gives orthonormal columns; transpose as needed so
  // that rows are orthonormal when d_v <= in and columns otherwise.
  const int tall = std::max(in, out), wide = std::min(in, out);
  Matrix g(tall, wide);
  for (int i = 0; i < tall; ++i)
    for (int j = 0; j < wide; ++j) g(i, j) = normal(rng);
  Eigen::HouseholderQR<Matrix> qr(g);
  Matrix q = qr.householderQ() * Matrix::Identity(tall, wide);
  projection_ = out <= in ? Matrix(q.transpose()) : q;
}

Vector RegionEncoder::crop(const Image& image, const Box& box) const {
  const int g = grid_;
  Vector out(3 * g * g);
  const int h = image.height, w = image.width;
  // Sampling is restricted to pixels that intersect the box.
  const int row_lo = std::clamp(static_cast<int>(std::floor(box.y1 * h)), 0, h - 1);
  const int row_hi = std::clamp(static_cast<int>(std::ceil(box.y2 * h)) - 1, row_lo, h - 1);
  const int col_lo = std::clamp(static_cast<int>(std::floor(box.x1 * w)), 0, w - 1);
  const int col_hi = std::clamp(static_cast<int>(std::ceil(box.x2 * w)) - 1, col_lo, w - 1);
  for (int i = 0; i < g; ++i) {
    const double py = std::clamp((box.y1 + (i + 0.5) / g * box.height()) * h - 0.5,
                                 static_cast<double>(row_lo), static_cast<double>(row_hi));
    const int y0 = static_cast<int>(std::floor(py));
    const int y1 = std::min(y0 + 1, row_hi);
    const double fy = py - y0;
    for (int j = 0; j < g; ++j) {
      const double px = std::clamp((box.x1 + (j + 0.5) / g * box.width()) * w - 0.5,
                                   static_cast<double>(col_lo), static_cast<double>(col_hi));
      const int x0 = static_cast<int>(std::floor(px));
      const int x1 = std::min(x0 + 1, col_hi);
      const double fx = px - x0;
      for (int c = 0; c < 3; ++c) {
        const double top = (1 - fx) * image.at(y0, x0, c) + fx * image.at(y0, x1, c);
        const double bot = (1 - fx) * image.at(y1, x0, c) + fx * image.at(y1, x1, c);
        out((i * g + j) * 3 + c) = (1 - fy) * top + fy * bot;
      }
    }
  }
  return out;
}

RegionFeature RegionEncoder::extract(const Image& image, const Box& box) const {
  RegionFeature f;
  f.box = box.clipped();
  if (!f.box.valid() || f.box.area() <= 0.0) {
    f.box = Box::whole();
    f.degenerate = true;
  }
  f.feature = projection_ * crop(image, f.box);
  f.spatial = spatial_encoding(f.box);
  return f;
}

RegionSet RegionEncoder::encode(const Image& image, std::span<const Box> boxes) const {
  RegionSet rs;
  const auto n = static_cast<Eigen::Index>(boxes.size());
  rs.features.resize(n, d_v());
  rs.spatial.resize(n, kSpatialDims);
  for (Eigen::Index i = 0; i < n; ++i) {
    auto f = extract(image, boxes[static_cast<size_t>(i)]);
    rs.features.row(i) = f.feature.transpose();
    for (int k = 0; k < kSpatialDims; ++k) rs.spatial(i, k) = f.spatial[static_cast<size_t>(k)];
    rs.boxes.push_back(f.box);
    rs.degenerate.push_back(f.degenerate);
  }
  return rs;
}

RegionSet extract_regions(const Image& image, const std::vector<Box>* ground_truth,
                          const ProposerConfig& config, const RegionEncoder& encoder,
                          std::uint64_t stream) {
  const auto boxes = propose_regions(image, ground_truth, config, stream);
  return encoder.encode(image, boxes);
}

// ---------------------------------------------------------------------------

void write_region_cache(const std::string& index_path, const std::string& data_path,
                        std::span<const std::pair<int, RegionSet>> entries) {
  std::ofstream index(index_path);
  std::ofstream data(data_path, std::ios::binary);
  if (!index || !data) throw FormatError("cannot open region cache for writing");
  std::uint32_t rows = 0, dv = 0;
  for (const auto& [id, rs] : entries) {
    rows += static_cast<std::uint32_t>(rs.size());
    dv = static_cast<std::uint32_t>(rs.features.cols());
  }
  data.write(kRegionMagic, sizeof(kRegionMagic));
  write_u32(data, rows);
  write_u32(data, dv);
  write_u32(data, kSpatialDims);
  std::uint64_t row = 0;
  for (const auto& [id, rs] : entries) {
    nlohmann::json rec;
    rec["id"] = id;
    rec["row"] = row;
    rec["count"] = rs.size();
    auto& boxes = rec["boxes"] = nlohmann::json::array();
    for (int i = 0; i < rs.size(); ++i) {
      const auto& b = rs.boxes[static_cast<size_t>(i)];
      boxes.push_back({b.x1, b.y1, b.x2, b.y2});
      for (Eigen::Index k = 0; k < rs.features.cols(); ++k) write_f32(data, rs.features(i, k));
      for (Eigen::Index k = 0; k < rs.spatial.cols(); ++k) write_f32(data, rs.spatial(i, k));
    }
    rec["degenerate"] = rs.degenerate;
    index << rec.dump() << '\n';
    row += static_cast<std::uint64_t>(rs.size());
  }
}

std::vector<std::pair<int, RegionSet>> read_region_cache(const std::string& index_path,
                                                         const std::string& data_path) {
  std::ifstream index(index_path);
  std::ifstream data(data_path, std::ios::binary);
  if (!index || !data) throw FormatError("cannot open region cache");
  char magic[8];
  data.read(magic, sizeof(magic));
  if (!data || std::memcmp(magic, kRegionMagic, sizeof(magic)) != 0)
    throw FormatError("bad region cache magic");
  read_u32(data);
  const auto dv = static_cast<Eigen::Index>(read_u32(data));
  const auto sp = static_cast<Eigen::Index>(read_u32(data));
  std::vector<std::pair<int, RegionSet>> out;
  std::string line;
  while (std::getline(index, line)) {
    if (line.empty()) continue;
    const auto rec = nlohmann::json::parse(line);
    RegionSet rs;
    const auto count = rec.at("count").get<Eigen::Index>();
    rs.features.resize(count, dv);
    rs.spatial.resize(count, sp);
    for (Eigen::Index i = 0; i < count; ++i) {
      const auto& b = rec.at("boxes").at(static_cast<size_t>(i));
      rs.boxes.push_back(Box{b[0], b[1], b[2], b[3]});
      for (Eigen::Index k = 0; k < dv; ++k) rs.features(i, k) = read_f32(data);
      for (Eigen::Index k = 0; k < sp; ++k) rs.spatial(i, k) = read_f32(data);
    }
    rs.degenerate = rec.at("degenerate").get<std::vector<bool>>();
    out.emplace_back(rec.at("id").get<int>(), std::move(rs));
  }
  return out;
}

}  // namespace capture
