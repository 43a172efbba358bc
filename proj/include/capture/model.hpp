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

// Hybrid-stream transformer.
//
//   text  : [CLS] t1 .. tn  -> L intra layers -+-> K cross layers -> H co layers
//   visual: [IMG] r1 .. rR  -> L intra layers -+
//
// The contrastive heads read the pooled [CLS]/[IMG] states after the intra
// layers; the joint head reads the product of the final pooled states.

#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "capture/common.hpp"
#include "capture/layers.hpp"
#include "capture/proposer.hpp"

namespace capture {

// Which streams exist. The single-stream variants back the intra-modal
// retrieval baselines.
enum class Modality { kJoint, kTextOnly, kImageOnly };

const char* modality_name(Modality m);
Modality parse_modality(const std::string& name);

struct ModelConfig {
  int L = 2;  // intra-modal layers per stream
  int K = 2;  // cross layers
  int H = 2;  // co layers
  int d_model = 64;
  int n_heads = 4;
  int d_ff = 256;
  int d_head_out = 64;
  int vocab_size = 0;  // filled from the corpus vocabulary when 0
  int max_text_len = 36;
  int d_v = 64;
  double dropout_prob = 0.0;
  Modality modality = Modality::kJoint;
  std::uint64_t seed = 7;

  void validate() const;
};

struct TokenSequence {
  std::vector<int> ids;  // ids[0] == [CLS]
  KeyMask padding;       // empty or one flag per id

  int size() const { return static_cast<int>(ids.size()); }
};

// Keeps the first `length` ids ([CLS] stays in front).
TokenSequence truncated(const TokenSequence& tokens, int length);

struct ModelOutputs {
  Matrix text_states;    // T x d (after the final normalization)
  Matrix visual_states;  // (R+1) x d, row 0 is [IMG]
  Vector h_txt;
  Vector h_img;
  Vector contrast_txt;
  Vector contrast_img;
  Vector joint;
};

// Depth at which forward() stops. kContrast runs the embeddings and the
// intra layers only, which is all the contrastive heads need.
enum class ForwardDepth { kFull, kContrast };

struct ForwardCache;  // defined in model.cpp

class ForwardCacheHandle {
 public:
  ForwardCacheHandle();
  ~ForwardCacheHandle();
  ForwardCacheHandle(ForwardCacheHandle&&) noexcept;
  ForwardCacheHandle& operator=(ForwardCacheHandle&&) noexcept;

  ForwardCache& get() { return *impl_; }
  const ForwardCache& get() const { return *impl_; }

 private:
  std::unique_ptr<ForwardCache> impl_;
};

// Gradients of a scalar objective w.r.t. ModelOutputs fields. Empty members
// contribute nothing.
struct OutputGrads {
  Matrix text_states;
  Matrix visual_states;
  Vector contrast_txt;
  Vector contrast_img;
  Vector joint;
};

class CaptureModel {
 public:
  explicit CaptureModel(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  ParamStore& params() { return params_; }
  const ParamStore& params() const { return params_; }

  // [CLS] + caption, truncated to max_text_len. Throws InputError on ids
  // outside the vocabulary.
  TokenSequence tokenize(std::span<const int> caption) const;
  static TokenSequence pad_to(TokenSequence tokens, int length);

  // Returns (text embeddings T x d, visual embeddings (R+1) x d).
  std::pair<Matrix, Matrix> embed_inputs(const TokenSequence& tokens,
                                         const RegionSet& regions) const;

  ModelOutputs forward(const TokenSequence& tokens, const RegionSet& regions,
                       ForwardCacheHandle* cache = nullptr, Rng* dropout_rng = nullptr,
                       ForwardDepth depth = ForwardDepth::kFull) const;

  // Accumulates parameter gradients for the objective whose output
  // gradients are `grads`.
  void backward(const ForwardCacheHandle& cache, const OutputGrads& grads);

  // Pretraining heads.
  const Linear& mlm_decoder() const { return mlm_decoder_; }
  const Linear& mrp_head() const { return mrp_head_; }
  const Linear& itm_head() const { return itm_head_; }

  // Attention probabilities of the last forward with a cache (tests).
  static const std::vector<Matrix>& intra_text_attention(const ForwardCacheHandle& cache,
                                                         int layer);

 private:
  ModelConfig config_;
  ParamStore params_;

  int token_embedding_ = -1;
  int position_embedding_ = -1;
  LayerNorm text_embed_ln_;
  Linear region_proj_;
  Linear spatial_proj_;
  int img_token_ = -1;
  LayerNorm visual_embed_ln_;

  std::vector<SelfAttentionBlock> text_intra_;
  std::vector<SelfAttentionBlock> visual_intra_;
  std::vector<CrossLayer> cross_;
  std::vector<CoLayer> co_;

  LayerNorm contrast_txt_ln_, contrast_img_ln_;
  Linear contrast_txt_head_, contrast_img_head_;
  LayerNorm final_text_ln_, final_visual_ln_;
  Linear joint_head_;

  Linear mlm_decoder_;
  Linear mrp_head_;
  Linear itm_head_;

  bool has_text() const { return config_.modality != Modality::kImageOnly; }
  bool has_visual() const { return config_.modality != Modality::kTextOnly; }
};

// Closed-form parameter count for a configuration.
std::size_t expected_parameter_count(const ModelConfig& config);

// Retrieval vector: concat(joint, contrast_img (.) contrast_txt) with each
// part unit-normalized, then L2-normalized. `concat == false` keeps the
// joint part only. Throws NumericError on a zero vector.
Vector instance_embedding(const ModelOutputs& outputs, bool concat = true);

// Checkpoint: "P1MCKPT1", uint64 header length, JSON header (config,
// format version, tensor manifest with name/shape/offset), float32 data.
void save_checkpoint(const CaptureModel& model, const std::string& path);
CaptureModel load_checkpoint(const std::string& path);

}  // namespace capture
