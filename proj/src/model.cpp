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

#include "capture/model.hpp"

#include <cmath>

#include "capture/corpus.hpp"

namespace capture {

struct ForwardCache {
  ForwardDepth depth = ForwardDepth::kFull;
  TokenSequence tokens;
  Matrix region_features;
  Matrix region_spatial;
  LayerNorm::Cache text_embed_ln, visual_embed_ln;
  std::vector<SelfAttentionBlock::Cache> text_intra, visual_intra;
  LayerNorm::Cache contrast_txt_ln, contrast_img_ln;
  Matrix contrast_txt_in, contrast_img_in;  // 1 x d, normalized pooled states
  std::vector<CrossLayer::Cache> cross;
  std::vector<CoLayer::Cache> co;
  LayerNorm::Cache final_text_ln, final_visual_ln;
  Matrix joint_in;  // 1 x d
  Vector h_txt, h_img;
  Eigen::Index text_rows = 0, visual_rows = 0;
};

ForwardCacheHandle::ForwardCacheHandle() : impl_(std::make_unique<ForwardCache>()) {}
ForwardCacheHandle::~ForwardCacheHandle() = default;
ForwardCacheHandle::ForwardCacheHandle(ForwardCacheHandle&&) noexcept = default;
ForwardCacheHandle& ForwardCacheHandle::operator=(ForwardCacheHandle&&) noexcept = default;

const char* modality_name(Modality m) {
  switch (m) {
    case Modality::kJoint: return "joint";
    case Modality::kTextOnly: return "text_only";
    case Modality::kImageOnly: return "image_only";
  }
  return "?";
}

Modality parse_modality(const std::string& name) {
  if (name == "joint") return Modality::kJoint;
  if (name == "text_only") return Modality::kTextOnly;
  if (name == "image_only") return Modality::kImageOnly;
  throw ConfigError("unknown modality '" + name + "'");
}

void ModelConfig::validate() const {
  if (L < 0 || K < 0 || H < 0) throw ConfigError("layer counts must be >= 0");
  if (L + K + H < 1) throw ConfigError("at least one of L, K, H must be >= 1");
  if (d_model < 1 || n_heads < 1 || d_model % n_heads != 0)
    throw ConfigError("d_model must be a positive multiple of n_heads");
  if (d_ff < 1 || d_head_out < 1 || d_v < 1) throw ConfigError("widths must be positive");
  if (vocab_size <= Vocabulary::kNumReserved) throw ConfigError("vocab_size too small");
  if (max_text_len < 2) throw ConfigError("max_text_len must be >= 2");
  if (!(dropout_prob >= 0.0 && dropout_prob < 1.0))
    throw ConfigError("dropout_prob must lie in [0,1)");
  if (modality != Modality::kJoint && (K != 0 || H != 0 || L < 1))
    throw ConfigError("single-stream models use intra layers only (K = H = 0, L >= 1)");
}

CaptureModel::CaptureModel(const ModelConfig& config) : config_(config) {
  config_.validate();
  Rng rng(mix_seed(config_.seed, 0x30de1ULL));
  const int d = config_.d_model;
  auto& s = params_;
  using Init = ParamStore::Init;

  token_embedding_ = s.add("embed.token", config_.vocab_size, d, Init::kNormal, rng);
  position_embedding_ = s.add("embed.position", config_.max_text_len, d, Init::kNormal, rng);
  text_embed_ln_ = LayerNorm::create(s, "embed.text_ln", d, rng);
  region_proj_ = Linear::create(s, "embed.region", config_.d_v, d, rng);
  spatial_proj_ = Linear::create(s, "embed.spatial", kSpatialDims, d, rng);
  img_token_ = s.add("embed.img_token", 1, d, Init::kNormal, rng);
  visual_embed_ln_ = LayerNorm::create(s, "embed.visual_ln", d, rng);

  for (int i = 0; i < config_.L; ++i) {
    text_intra_.push_back(SelfAttentionBlock::create(s, "text_intra." + std::to_string(i), d,
                                                     config_.n_heads, config_.d_ff, rng));
    visual_intra_.push_back(SelfAttentionBlock::create(s, "visual_intra." + std::to_string(i), d,
                                                       config_.n_heads, config_.d_ff, rng));
  }
  for (int i = 0; i < config_.K; ++i)
    cross_.push_back(CrossLayer::create(s, "cross." + std::to_string(i), d, config_.n_heads,
                                        config_.d_ff, rng));
  for (int i = 0; i < config_.H; ++i)
    co_.push_back(
        CoLayer::create(s, "co." + std::to_string(i), d, config_.n_heads, config_.d_ff, rng));

  contrast_txt_ln_ = LayerNorm::create(s, "contrast.text_ln", d, rng);
  contrast_img_ln_ = LayerNorm::create(s, "contrast.visual_ln", d, rng);
  contrast_txt_head_ = Linear::create(s, "contrast.text_head", d, config_.d_head_out, rng);
  contrast_img_head_ = Linear::create(s, "contrast.visual_head", d, config_.d_head_out, rng);
  final_text_ln_ = LayerNorm::create(s, "final.text_ln", d, rng);
  final_visual_ln_ = LayerNorm::create(s, "final.visual_ln", d, rng);
  joint_head_ = Linear::create(s, "joint.head", d, config_.d_head_out, rng);

  mlm_decoder_ = Linear::create(s, "pretrain.mlm", d, config_.vocab_size, rng);
  mrp_head_ = Linear::create(s, "pretrain.mrp", d, config_.d_v, rng);
  itm_head_ = Linear::create(s, "pretrain.itm", config_.d_head_out, 2, rng);
}

std::size_t expected_parameter_count(const ModelConfig& c) {
  const std::size_t d = static_cast<std::size_t>(c.d_model);
  const std::size_t ff = static_cast<std::size_t>(c.d_ff);
  const std::size_t ho = static_cast<std::size_t>(c.d_head_out);
  const std::size_t v = static_cast<std::size_t>(c.vocab_size);
  const std::size_t dv = static_cast<std::size_t>(c.d_v);
  const std::size_t ln = 2 * d;
  const std::size_t attn = 4 * (d * d + d);
  const std::size_t ffn = d * ff + ff + ff * d + d;
  const std::size_t self_block = 2 * ln + attn + ffn;
  const std::size_t cross_half = 3 * ln + attn + ffn;
  const std::size_t embed = v * d + static_cast<std::size_t>(c.max_text_len) * d + ln +
                            (dv * d + d) + (kSpatialDims * d + d) + d + ln;
  const std::size_t heads = 2 * ln + 2 * (d * ho + ho) + 2 * ln + (d * ho + ho) +
                            (d * v + v) + (d * dv + dv) + (ho * 2 + 2);
  return embed + 2 * static_cast<std::size_t>(c.L) * self_block +
         static_cast<std::size_t>(c.K) * 2 * cross_half +
         static_cast<std::size_t>(c.H) * self_block + heads;
}

TokenSequence CaptureModel::tokenize(std::span<const int> caption) const {
  TokenSequence t;
  t.ids.push_back(Vocabulary::kCls);
  for (int id : caption) {
    if (static_cast<int>(t.ids.size()) >= config_.max_text_len) break;
    t.ids.push_back(id);
  }
  for (int id : t.ids)
    if (id < 0 || id >= config_.vocab_size)
      throw InputError("token id " + std::to_string(id) + " outside the vocabulary");
  return t;
}

TokenSequence truncated(const TokenSequence& tokens, int length) {
  TokenSequence t = tokens;
  if (t.size() > length) {
    t.ids.resize(static_cast<size_t>(length));
    if (!t.padding.empty()) t.padding.resize(static_cast<size_t>(length));
  }
  return t;
}

TokenSequence CaptureModel::pad_to(TokenSequence tokens, int length) {
  const auto n = static_cast<size_t>(tokens.size());
  tokens.padding.assign(n, 0);
  while (tokens.size() < length) {
    tokens.ids.push_back(Vocabulary::kPad);
    tokens.padding.push_back(1);
  }
  return tokens;
}

// The [IMG] row sees the mean region feature at whole-image geometry, the
// other rows one region each.
std::pair<Matrix, Matrix> visual_inputs(const RegionSet& regions) {
  const Eigen::Index r = regions.features.rows();
  Matrix features(r + 1, regions.features.cols());
  Matrix spatial(r + 1, kSpatialDims);
  features.row(0) = r > 0 ? Matrix(regions.features.colwise().mean())
                          : Matrix::Zero(1, regions.features.cols());
  const auto whole = spatial_encoding(Box::whole());
  for (int k = 0; k < kSpatialDims; ++k) spatial(0, k) = whole[static_cast<size_t>(k)];
  if (r > 0) {
    features.bottomRows(r) = regions.features;
    spatial.bottomRows(r) = regions.spatial;
  }
  return {std::move(features), std::move(spatial)};
}

std::pair<Matrix, Matrix> CaptureModel::embed_inputs(const TokenSequence& tokens,
                                                     const RegionSet& regions) const {
  const int d = config_.d_model;
  Matrix text;
  if (has_text()) {
    if (tokens.size() > config_.max_text_len)
      return embed_inputs(truncated(tokens, config_.max_text_len), regions);
    text.resize(tokens.size(), d);
    const auto& tok = params_.value(token_embedding_);
    const auto& pos = params_.value(position_embedding_);
    for (int i = 0; i < tokens.size(); ++i) {
      const int id = tokens.ids[static_cast<size_t>(i)];
      if (id < 0 || id >= config_.vocab_size) throw InputError("token id outside the vocabulary");
      text.row(i) = tok.row(id) + pos.row(i);
    }
  }
  Matrix visual;
  if (has_visual()) {
    if (regions.features.cols() != config_.d_v)
      throw InputError("region feature width does not match d_v");
    const auto [features, spatial] = visual_inputs(regions);
    visual = region_proj_.forward(params_, features) + spatial_proj_.forward(params_, spatial);
    visual.row(0) += params_.value(img_token_).row(0);
  }
  return {std::move(text), std::move(visual)};
}

ModelOutputs CaptureModel::forward(const TokenSequence& tokens, const RegionSet& regions,
                                   ForwardCacheHandle* handle, Rng* dropout_rng,
                                   ForwardDepth depth) const {
  if (has_text() && tokens.size() > config_.max_text_len)
    return forward(truncated(tokens, config_.max_text_len), regions, handle, dropout_rng, depth);
  ForwardCache* cache = handle ? &handle->get() : nullptr;
  const double p = dropout_rng ? config_.dropout_prob : 0.0;
  auto [text_raw, visual_raw] = embed_inputs(tokens, regions);
  if (has_visual() && regions.features.rows() == 0) throw InputError("empty region set");
  if (cache) {
    *cache = ForwardCache{};
    cache->depth = depth;
    cache->tokens = tokens;
    cache->region_features = regions.features;
    cache->region_spatial = regions.spatial;
    cache->text_intra.resize(text_intra_.size());
    cache->visual_intra.resize(visual_intra_.size());
  }

  Matrix text, visual;
  const KeyMask& text_mask = tokens.padding;
  const KeyMask visual_mask;
  if (has_text())
    text = text_embed_ln_.forward(params_, text_raw, cache ? &cache->text_embed_ln : nullptr);
  if (has_visual())
    visual = visual_embed_ln_.forward(params_, visual_raw,
                                      cache ? &cache->visual_embed_ln : nullptr);

  for (size_t i = 0; i < text_intra_.size(); ++i) {
    if (has_text())
      text = text_intra_[i].forward(params_, text, text_mask,
                                    cache ? &cache->text_intra[i] : nullptr, p, dropout_rng);
    if (has_visual())
      visual = visual_intra_[i].forward(params_, visual, visual_mask,
                                        cache ? &cache->visual_intra[i] : nullptr, p, dropout_rng);
  }

  ModelOutputs out;
  if (config_.modality == Modality::kJoint) {
    Matrix ct_in = contrast_txt_ln_.forward(params_, text.topRows(1),
                                            cache ? &cache->contrast_txt_ln : nullptr);
    Matrix ci_in = contrast_img_ln_.forward(params_, visual.topRows(1),
                                            cache ? &cache->contrast_img_ln : nullptr);
    out.contrast_txt = contrast_txt_head_.forward(params_, ct_in).row(0).transpose();
    out.contrast_img = contrast_img_head_.forward(params_, ci_in).row(0).transpose();
    if (cache) {
      cache->contrast_txt_in = std::move(ct_in);
      cache->contrast_img_in = std::move(ci_in);
    }
  }
  if (depth == ForwardDepth::kContrast) {
    out.text_states = std::move(text);
    out.visual_states = std::move(visual);
    return out;
  }

  if (cache) {
    cache->cross.resize(cross_.size());
    cache->co.resize(co_.size());
  }
  for (size_t i = 0; i < cross_.size(); ++i) {
    std::tie(text, visual) = cross_[i].forward(params_, text, visual, text_mask, visual_mask,
                                               cache ? &cache->cross[i] : nullptr, p, dropout_rng);
  }
  for (size_t i = 0; i < co_.size(); ++i) {
    std::tie(text, visual) = co_[i].forward(params_, text, visual, text_mask, visual_mask,
                                            cache ? &cache->co[i] : nullptr, p, dropout_rng);
  }

  Matrix joint_in;
  if (has_text()) {
    out.text_states =
        final_text_ln_.forward(params_, text, cache ? &cache->final_text_ln : nullptr);
    out.h_txt = out.text_states.row(0).transpose();
  }
  if (has_visual()) {
    out.visual_states =
        final_visual_ln_.forward(params_, visual, cache ? &cache->final_visual_ln : nullptr);
    out.h_img = out.visual_states.row(0).transpose();
  }
  switch (config_.modality) {
    case Modality::kJoint: joint_in = out.h_img.cwiseProduct(out.h_txt).transpose(); break;
    case Modality::kTextOnly: joint_in = out.h_txt.transpose(); break;
    case Modality::kImageOnly: joint_in = out.h_img.transpose(); break;
  }
  out.joint = joint_head_.forward(params_, joint_in).row(0).transpose();
  if (cache) {
    cache->joint_in = std::move(joint_in);
    cache->h_txt = out.h_txt;
    cache->h_img = out.h_img;
    cache->text_rows = out.text_states.rows();
    cache->visual_rows = out.visual_states.rows();
  }
  return out;
}

void CaptureModel::backward(const ForwardCacheHandle& handle, const OutputGrads& g) {
  const ForwardCache& c = handle.get();
  const int d = config_.d_model;
  auto& s = params_;

  const Eigen::Index t_rows = has_text() ? c.tokens.size() : 0;
  const Eigen::Index v_rows = has_visual() ? c.region_features.rows() + 1 : 0;
  Matrix dtext = Matrix::Zero(t_rows, d);
  Matrix dvisual = Matrix::Zero(v_rows, d);

  if (c.depth == ForwardDepth::kFull) {
    Matrix dt_final = g.text_states.size() ? g.text_states : Matrix::Zero(t_rows, d);
    Matrix dv_final = g.visual_states.size() ? g.visual_states : Matrix::Zero(v_rows, d);
    if (g.joint.size()) {
      const Matrix djoint_in = joint_head_.backward(s, c.joint_in, g.joint.transpose());
      switch (config_.modality) {
        case Modality::kJoint:
          dt_final.row(0) += djoint_in.row(0).cwiseProduct(c.h_img.transpose());
          dv_final.row(0) += djoint_in.row(0).cwiseProduct(c.h_txt.transpose());
          break;
        case Modality::kTextOnly: dt_final.row(0) += djoint_in.row(0); break;
        case Modality::kImageOnly: dv_final.row(0) += djoint_in.row(0); break;
      }
    }
    if (has_text()) dtext = final_text_ln_.backward(s, c.final_text_ln, dt_final);
    if (has_visual()) dvisual = final_visual_ln_.backward(s, c.final_visual_ln, dv_final);
    for (size_t i = co_.size(); i-- > 0;)
      std::tie(dtext, dvisual) = co_[i].backward(s, c.co[i], dtext, dvisual);
    for (size_t i = cross_.size(); i-- > 0;)
      std::tie(dtext, dvisual) = cross_[i].backward(s, c.cross[i], dtext, dvisual);
  }

  if (config_.modality == Modality::kJoint) {
    if (g.contrast_txt.size()) {
      const Matrix dln =
          contrast_txt_head_.backward(s, c.contrast_txt_in, g.contrast_txt.transpose());
      dtext.row(0) += contrast_txt_ln_.backward(s, c.contrast_txt_ln, dln).row(0);
    }
    if (g.contrast_img.size()) {
      const Matrix dln =
          contrast_img_head_.backward(s, c.contrast_img_in, g.contrast_img.transpose());
      dvisual.row(0) += contrast_img_ln_.backward(s, c.contrast_img_ln, dln).row(0);
    }
  }

  for (size_t i = text_intra_.size(); i-- > 0;) {
    if (has_text()) dtext = text_intra_[i].backward(s, c.text_intra[i], dtext);
    if (has_visual()) dvisual = visual_intra_[i].backward(s, c.visual_intra[i], dvisual);
  }

  if (has_text()) {
    const Matrix demb = text_embed_ln_.backward(s, c.text_embed_ln, dtext);
    auto& dtok = s.grad(token_embedding_);
    auto& dpos = s.grad(position_embedding_);
    for (int i = 0; i < c.tokens.size(); ++i) {
      dtok.row(c.tokens.ids[static_cast<size_t>(i)]) += demb.row(i);
      dpos.row(i) += demb.row(i);
    }
  }
  if (has_visual()) {
    const Matrix demb = visual_embed_ln_.backward(s, c.visual_embed_ln, dvisual);
    s.grad(img_token_).row(0) += demb.row(0);
    RegionSet regions;
    regions.features = c.region_features;
    regions.spatial = c.region_spatial;
    const auto [features, spatial] = visual_inputs(regions);
    region_proj_.backward(s, features, demb);
    spatial_proj_.backward(s, spatial, demb);
  }
}

const std::vector<Matrix>& CaptureModel::intra_text_attention(const ForwardCacheHandle& cache,
                                                              int layer) {
  return cache.get().text_intra.at(static_cast<size_t>(layer)).attn.probs;
}

Vector instance_embedding(const ModelOutputs& outputs, bool concat) {
  auto unit = [](const Vector& v, const char* what) {
    const double n = v.norm();
    if (!(n > 0.0) || !std::isfinite(n))
      throw NumericError(std::string("cannot normalize zero ") + what + " vector");
    return Vector(v / n);
  };
  const Vector joint = unit(outputs.joint, "joint");
  if (!concat || outputs.contrast_img.size() == 0) return joint;
  const Vector prod =
      unit(unit(outputs.contrast_img, "contrast").cwiseProduct(unit(outputs.contrast_txt, "contrast")),
           "contrast product");
  Vector out(joint.size() + prod.size());
  out << joint, prod;
  return unit(out, "embedding");
}

}  // namespace capture
