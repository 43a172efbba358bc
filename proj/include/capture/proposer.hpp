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

// Region proposals and per-region feature vectors. Four proposal modes
// trade realism for control: ground truth, perturbed ground truth, a
// connected-components detector, and a single whole-image box.

#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "capture/common.hpp"
#include "capture/corpus.hpp"

namespace capture {

enum class ProposalMode { kOracle, kJitter, kHeuristic, kWholeImage };

const char* proposal_mode_name(ProposalMode m);
ProposalMode parse_proposal_mode(const std::string& name);

struct ProposerConfig {
  ProposalMode mode = ProposalMode::kHeuristic;
  double jitter_sigma = 0.05;
  double miss_prob = 0.0;
  double spurious_rate = 0.0;
  int r_max = 12;
  int grid = 7;
  int d_v = 64;
  // Heuristic detector: luminance deviation threshold and minimum area.
  double threshold = 0.08;
  double min_area_fraction = 0.002;
  std::uint64_t seed = 7;

  void validate() const;
};

// Boxes plus fixed-length features; row i of `features` and `spatial`
// belongs to boxes[i].
struct RegionSet {
  std::vector<Box> boxes;
  Matrix features;  // R x d_v
  Matrix spatial;   // R x 5: x1, y1, x2, y2, area
  std::vector<bool> degenerate;

  int size() const { return static_cast<int>(boxes.size()); }
  RegionSet subset(std::span<const int> rows) const;
};

inline constexpr int kSpatialDims = 5;

std::array<double, kSpatialDims> spatial_encoding(const Box& box);

// `ground_truth` may be null for heuristic/whole-image modes. `stream`
// keys the jitter randomness (typically the sample id).
std::vector<Box> propose_regions(const Image& image, const std::vector<Box>* ground_truth,
                                 const ProposerConfig& config, std::uint64_t stream = 0);

struct RegionFeature {
  Vector feature;
  std::array<double, kSpatialDims> spatial{};
  Box box;
  bool degenerate = false;
};

// Bilinear GxG crop followed by a fixed orthogonal projection seeded by
// config.seed. Immutable after construction; safe to share across threads.
class RegionEncoder {
 public:
  explicit RegionEncoder(const ProposerConfig& config);

  // Raw 3*G*G crop, channel-interleaved in row-major grid order.
  Vector crop(const Image& image, const Box& box) const;
  RegionFeature extract(const Image& image, const Box& box) const;
  RegionSet encode(const Image& image, std::span<const Box> boxes) const;

  const Matrix& projection() const { return projection_; }
  int grid() const { return grid_; }
  int d_v() const { return static_cast<int>(projection_.rows()); }

 private:
  int grid_;
  Matrix projection_;  // d_v x 3G^2
};

// Convenience: propose + encode.
RegionSet extract_regions(const Image& image, const std::vector<Box>* ground_truth,
                          const ProposerConfig& config, const RegionEncoder& encoder,
                          std::uint64_t stream = 0);

// Region cache: JSON-lines index plus a float32 sidecar with header
// magic "P1MRGN1\0", uint32 rows, uint32 d_v, uint32 spatial width.
void write_region_cache(const std::string& index_path, const std::string& data_path,
                        std::span<const std::pair<int, RegionSet>> entries);
std::vector<std::pair<int, RegionSet>> read_region_cache(const std::string& index_path,
                                                         const std::string& data_path);

}  // namespace capture
