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

#include "capture/corpus.hpp"
#include "capture/pretrain.hpp"

namespace capture {
namespace {

// Indices selected with probability p among `eligible`; re-drawn until
// non-empty when p > 0.
std::vector<int> select_positions(const std::vector<int>& eligible, double p, Rng& rng) {
  std::vector<int> out;
  if (eligible.empty() || p <= 0.0) return out;
  std::bernoulli_distribution pick(std::min(p, 1.0));
  while (out.empty()) {
    for (int i : eligible)
      if (pick(rng)) out.push_back(i);
  }
  return out;
}

}  // namespace

MaskedBatch mask_batch(std::span<const TrainingExample> batch, double mask_prob,
                       const CorruptionSplit& corruption, int vocab_size, Rng& rng) {
  MaskedBatch out;
  out.examples.reserve(batch.size());
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::uniform_int_distribution<int> random_token(Vocabulary::kNumReserved, vocab_size - 1);
  for (const auto& ex : batch) {
    MaskedExample m;
    m.tokens = ex.tokens;
    m.regions = ex.regions;

    std::vector<int> eligible;
    for (int i = 0; i < ex.tokens.size(); ++i) {
      const int id = ex.tokens.ids[static_cast<size_t>(i)];
      const bool padded = !ex.tokens.padding.empty() && ex.tokens.padding[static_cast<size_t>(i)];
      if (id == Vocabulary::kCls || id == Vocabulary::kPad || padded) continue;
      eligible.push_back(i);
    }
    m.text_positions = select_positions(eligible, mask_prob, rng);
    for (int pos : m.text_positions) {
      auto& id = m.tokens.ids[static_cast<size_t>(pos)];
      m.text_targets.push_back(id);
      const double r = unit(rng);
      if (r < corruption.replace_with_mask) {
        id = Vocabulary::kMask;
      } else if (r < corruption.replace_with_mask + corruption.random_token) {
        id = random_token(rng);
      }
    }

    std::vector<int> regions(static_cast<size_t>(ex.regions.size()));
    for (int i = 0; i < ex.regions.size(); ++i) regions[static_cast<size_t>(i)] = i;
    m.region_positions = select_positions(regions, mask_prob, rng);
    m.region_targets.resize(static_cast<Eigen::Index>(m.region_positions.size()),
                            ex.regions.features.cols());
    for (size_t k = 0; k < m.region_positions.size(); ++k) {
      const int r = m.region_positions[k];
      m.region_targets.row(static_cast<Eigen::Index>(k)) = ex.regions.features.row(r);
      m.regions.features.row(r).setZero();
    }
    out.examples.push_back(std::move(m));
  }
  return out;
}

}  // namespace capture
