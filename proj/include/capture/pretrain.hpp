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

// Self-supervised objectives and the pretraining loop: masked language
// modeling, masked region regression, cross-modal contrastive alignment and
// (as an ablation arm) image-text matching.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "capture/common.hpp"
#include "capture/model.hpp"
#include "capture/proposer.hpp"

namespace capture {

struct CorruptionSplit {
  double replace_with_mask = 0.8;
  double random_token = 0.1;
  double keep = 0.1;
};

struct LossSwitches {
  bool mlm = true;
  bool mrp = true;
  bool ctr = true;
  bool itm = false;

  bool any() const { return mlm || mrp || ctr || itm; }
  friend bool operator==(const LossSwitches&, const LossSwitches&) = default;
};

struct PretrainConfig {
  double mask_prob = 0.15;
  CorruptionSplit corruption;
  double temperature = 0.07;
  int batch_size = 32;
  int epochs = 10;
  double learning_rate = 1e-3;
  bool linear_decay = true;
  LossSwitches losses;
  std::uint64_t seed = 7;

  // Throws ConfigError.
  void validate() const;
};

// A training pair as the model sees it.
struct TrainingExample {
  int sample_id = -1;
  TokenSequence tokens;
  RegionSet regions;
};

struct MaskedExample {
  TokenSequence tokens;           // corrupted
  RegionSet regions;              // masked rows zeroed
  std::vector<int> text_positions;
  std::vector<int> text_targets;  // original ids at text_positions
  std::vector<int> region_positions;  // region row index (0-based, excluding [IMG])
  Matrix region_targets;              // original features at region_positions
};

struct MaskedBatch {
  std::vector<MaskedExample> examples;
};

// Per-token and per-region Bernoulli(mask_prob) selection. [CLS] and [PAD]
// are never selected. When mask_prob > 0, a sample with no selected position
// in a modality is re-drawn until one is selected. mask_prob is not range
// checked here so that 0 and 1 can be used as degenerate cases.
MaskedBatch mask_batch(std::span<const TrainingExample> batch, double mask_prob,
                       const CorruptionSplit& corruption, int vocab_size, Rng& rng);

struct LossValue {
  double value = 0.0;
  Matrix grad;  // d value / d input
};

// Mean cross-entropy over rows of `logits` (masked positions only).
LossValue mlm_loss(const Matrix& logits, std::span<const int> targets);

// Mean squared error over every element.
LossValue mrp_loss(const Matrix& prediction, const Matrix& target);

struct ContrastiveLoss {
  double value = 0.0;
  Matrix grad_img;
  Matrix grad_txt;
};

// Mean over all 2N anchors of
//   -log exp(sim(a, pos)/tau) / sum_{k != a} exp(sim(a, k)/tau)
// with cosine similarity. Rows of `img` and `txt` are paired.
ContrastiveLoss contrastive_loss(const Matrix& img, const Matrix& txt, double temperature);

// Two-way softmax cross-entropy; labels are 1 for matched pairs.
LossValue itm_loss(const Matrix& logits, std::span<const int> labels);

struct LossRecord {
  int step = 0;
  double mlm = 0.0;
  double mrp = 0.0;
  double ctr = 0.0;
  double itm = 0.0;
  double total = 0.0;
  double lr = 0.0;
};

class AdamOptimizer {
 public:
  static constexpr double kBeta1 = 0.9;
  static constexpr double kBeta2 = 0.999;
  static constexpr double kEps = 1e-8;

  explicit AdamOptimizer(const ParamStore& params);
  void step(ParamStore& params, double lr);

 private:
  std::vector<Matrix> m_, v_;
  int t_ = 0;
};

// Losses of one minibatch plus accumulated gradients in model.params().
// Exposed so that tests can check the full objective against finite
// differences.
LossRecord accumulate_batch_gradients(CaptureModel& model,
                                      std::span<const TrainingExample> batch,
                                      const PretrainConfig& config, Rng& rng);

struct TrainResult {
  std::vector<LossRecord> curve;
};

using EpochCallback = std::function<void(int epoch, const CaptureModel& model)>;

// Single-threaded and deterministic given config.seed.
TrainResult train(CaptureModel& model, std::span<const TrainingExample> examples,
                  const PretrainConfig& config, const EpochCallback& on_epoch = {});

void write_loss_curve(const std::string& path, std::span<const LossRecord> curve);

}  // namespace capture
