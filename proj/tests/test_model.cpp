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

#include <cmath>
#include <numeric>

#include <gtest/gtest.h>

#include "capture/layers.hpp"
#include "capture/model.hpp"

namespace capture {
namespace {

ModelConfig tiny_config(std::uint64_t seed = 1) {
  ModelConfig c;
  c.L = 1;
  c.K = 1;
  c.H = 1;
  c.d_model = 16;
  c.n_heads = 2;
  c.d_ff = 32;
  c.d_head_out = 8;
  c.vocab_size = 40;
  c.max_text_len = 12;
  c.d_v = 6;
  c.seed = seed;
  return c;
}

Matrix random_matrix(int rows, int cols, Rng& rng, double scale = 1.0) {
  std::normal_distribution<double> n(0.0, scale);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = n(rng);
  return m;
}

RegionSet random_regions(int r, int d_v, Rng& rng) {
  RegionSet rs;
  rs.features = random_matrix(r, d_v, rng);
  rs.spatial.resize(r, kSpatialDims);
  std::uniform_real_distribution<double> u(0.0, 0.5);
  for (int i = 0; i < r; ++i) {
    Box b{u(rng), u(rng), 0.0, 0.0};
    b.x2 = b.x1 + 0.1 + u(rng);
    b.y2 = b.y1 + 0.1 + u(rng);
    rs.boxes.push_back(b);
    const auto s = spatial_encoding(b);
    for (int k = 0; k < kSpatialDims; ++k) rs.spatial(i, k) = s[static_cast<size_t>(k)];
    rs.degenerate.push_back(false);
  }
  return rs;
}

TokenSequence random_tokens(const CaptureModel& m, int n, Rng& rng) {
  std::uniform_int_distribution<int> pick(Vocabulary::kNumReserved, m.config().vocab_size - 1);
  std::vector<int> ids(static_cast<size_t>(n));
  for (int& t : ids) t = pick(rng);
  return m.tokenize(ids);
}

TEST(Attention, UniformWeightsWhenQueryKeyMapsVanish) {
  ParamStore s;
  Rng rng(0);
  auto mha = MultiHeadAttention::create(s, "a", 1, 1, rng);
  for (const Linear* l : {&mha.query, &mha.key}) {
    s.value(l->weight).setZero();
    s.value(l->bias).setZero();
  }
  for (const Linear* l : {&mha.value, &mha.output}) {
    s.value(l->weight).setOnes();
    s.value(l->bias).setZero();
  }
  Matrix x(2, 1);
  x << 0.3, -1.7;
  MultiHeadAttention::Cache cache;
  const Matrix y = mha.forward(s, x, x, {}, &cache);
  ASSERT_EQ(cache.probs.size(), 1u);
  EXPECT_NEAR(cache.probs[0](0, 0), 0.5, 1e-12);
  EXPECT_NEAR(cache.probs[0](1, 1), 0.5, 1e-12);
  EXPECT_NEAR(y(0, 0), -0.7, 1e-12);
  EXPECT_NEAR(y(1, 0), -0.7, 1e-12);
}

TEST(Attention, MaskedSoftmaxRows) {
  Rng rng(2);
  const Matrix logits = random_matrix(5, 6, rng, 3.0);
  const KeyMask mask{0, 1, 0, 0, 1, 0};
  const Matrix p = masked_softmax_rows(logits, mask);
  for (int i = 0; i < p.rows(); ++i) {
    EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-12);
    EXPECT_EQ(p(i, 1), 0.0);
    EXPECT_EQ(p(i, 4), 0.0);
  }
}

TEST(Model, IntraAttentionRowsSumToOneAndSkipPadding) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    auto c = tiny_config(seed);
    c.L = 2;
    CaptureModel m(c);
    Rng rng(seed);
    const auto tokens = CaptureModel::pad_to(random_tokens(m, 4, rng), 9);
    ForwardCacheHandle cache;
    m.forward(tokens, random_regions(3, c.d_v, rng), &cache);
    for (int layer = 0; layer < c.L; ++layer) {
      for (const Matrix& p : CaptureModel::intra_text_attention(cache, layer)) {
        ASSERT_EQ(p.cols(), 9);
        for (int i = 0; i < p.rows(); ++i) {
          EXPECT_NEAR(p.row(i).sum(), 1.0, 1e-6);
          for (int k = 5; k < 9; ++k) EXPECT_EQ(p(i, k), 0.0);
        }
      }
    }
  }
}

TEST(Model, PaddingDoesNotChangeOutputs) {
  const auto c = tiny_config(3);
  CaptureModel m(c);
  Rng rng(3);
  const auto tokens = random_tokens(m, 5, rng);
  const auto regions = random_regions(3, c.d_v, rng);
  const auto a = m.forward(tokens, regions);
  const auto b = m.forward(CaptureModel::pad_to(tokens, 11), regions);
  EXPECT_LT((a.h_txt - b.h_txt).norm(), 1e-10);
  EXPECT_LT((a.joint - b.joint).norm(), 1e-10);
  EXPECT_LT((a.visual_states - b.visual_states).norm(), 1e-10);
}

TEST(Model, EmbeddingShapes) {
  const auto c = tiny_config();
  CaptureModel m(c);
  Rng rng(4);
  const auto tokens = random_tokens(m, 6, rng);
  const auto [text, visual] = m.embed_inputs(tokens, random_regions(4, c.d_v, rng));
  EXPECT_EQ(text.rows(), 7);
  EXPECT_EQ(text.cols(), c.d_model);
  EXPECT_EQ(visual.rows(), 5);
  EXPECT_EQ(visual.cols(), c.d_model);
}

TEST(Model, RegionPermutationEquivariance) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto c = tiny_config(seed);
    CaptureModel m(c);
    Rng rng(seed + 50);
    const auto tokens = random_tokens(m, 5, rng);
    const auto regions = random_regions(4, c.d_v, rng);
    std::vector<int> perm{2, 0, 3, 1};
    const auto permuted = regions.subset(perm);

    const auto [t0, v0] = m.embed_inputs(tokens, regions);
    const auto [t1, v1] = m.embed_inputs(tokens, permuted);
    const auto a = m.forward(tokens, regions);
    const auto b = m.forward(tokens, permuted);
    EXPECT_LT((v0.row(0) - v1.row(0)).norm(), 1e-10);
    EXPECT_LT((a.visual_states.row(0) - b.visual_states.row(0)).norm(), 1e-9);
    for (int i = 0; i < 4; ++i) {
      EXPECT_LT((v1.row(i + 1) - v0.row(perm[i] + 1)).norm(), 1e-10);
      EXPECT_LT((b.visual_states.row(i + 1) - a.visual_states.row(perm[i] + 1)).norm(), 1e-9);
    }
    EXPECT_LT((a.text_states - b.text_states).norm(), 1e-9);
    EXPECT_LT((a.h_txt - b.h_txt).norm(), 1e-9);
    EXPECT_LT((a.h_img - b.h_img).norm(), 1e-9);
    EXPECT_LT((a.contrast_txt - b.contrast_txt).norm(), 1e-9);
    EXPECT_LT((a.contrast_img - b.contrast_img).norm(), 1e-9);
    EXPECT_LT((a.joint - b.joint).norm(), 1e-9);
  }
}

TEST(Model, OutputsFiniteForRandomInputs) {
  for (std::uint64_t seed = 0; seed < 100; ++seed) {
    auto c = tiny_config(seed);
    c.L = 1 + static_cast<int>(seed % 2);
    CaptureModel m(c);
    Rng rng(seed);
    const auto o = m.forward(random_tokens(m, 1 + static_cast<int>(seed % 8), rng),
                             random_regions(1 + static_cast<int>(seed % 5), c.d_v, rng));
    EXPECT_TRUE(o.text_states.allFinite());
    EXPECT_TRUE(o.visual_states.allFinite());
    EXPECT_TRUE(o.joint.allFinite());
    EXPECT_TRUE(o.contrast_img.allFinite());
    EXPECT_TRUE(o.contrast_txt.allFinite());
  }
}

// Independent count: per-module tallies, not the library's formula.
std::size_t count_by_hand(const ModelConfig& c) {
  const std::size_t d = c.d_model;
  auto linear = [](std::size_t in, std::size_t out) { return in * out + out; };
  auto norm = [&] { return 2 * d; };
  auto attention = [&] { return 4 * linear(d, d); };
  auto ffn = [&] { return linear(d, c.d_ff) + linear(c.d_ff, d); };
  std::size_t n = 0;
  n += static_cast<std::size_t>(c.vocab_size) * d + static_cast<std::size_t>(c.max_text_len) * d;
  n += norm() + linear(c.d_v, d) + linear(kSpatialDims, d) + d + norm();
  n += 2 * c.L * (2 * norm() + attention() + ffn());
  n += c.K * 2 * (3 * norm() + attention() + ffn());
  n += c.H * (2 * norm() + attention() + ffn());
  n += 2 * norm() + 2 * linear(d, c.d_head_out);
  n += 2 * norm() + linear(d, c.d_head_out);
  n += linear(d, c.vocab_size) + linear(d, c.d_v) + linear(c.d_head_out, 2);
  return n;
}

TEST(Model, ParameterCountClosedForm) {
  for (auto [l, k, h] : {std::array{1, 1, 1}, {2, 0, 3}, {0, 2, 2}, {0, 0, 1}, {3, 2, 1}}) {
    auto c = tiny_config();
    c.L = l;
    c.K = k;
    c.H = h;
    const CaptureModel m(c);
    EXPECT_EQ(m.params().scalar_count(), count_by_hand(c));
    EXPECT_EQ(expected_parameter_count(c), count_by_hand(c));
  }
}

TEST(Model, SingleCoLayerIsOneJointTransformer) {
  auto c = tiny_config(9);
  c.L = 0;
  c.K = 0;
  c.H = 1;
  CaptureModel m(c);
  for (const auto& e : m.params().entries()) {
    EXPECT_EQ(e.name.find("intra"), std::string::npos) << e.name;
    EXPECT_EQ(e.name.find("cross"), std::string::npos) << e.name;
  }
  Rng rng(9);
  const auto tokens = random_tokens(m, 4, rng);
  const auto r1 = random_regions(2, c.d_v, rng);
  const auto r2 = random_regions(2, c.d_v, rng);
  // The text stream sees the regions through the single joint layer.
  EXPECT_GT((m.forward(tokens, r1).text_states - m.forward(tokens, r2).text_states).norm(), 1e-6);
}

TEST(Model, EmptyRegionSetIsInputError) {
  const auto c = tiny_config(2);
  CaptureModel m(c);
  Rng rng(2);
  RegionSet empty;
  empty.features.resize(0, c.d_v);
  empty.spatial.resize(0, kSpatialDims);
  EXPECT_THROW(m.forward(random_tokens(m, 3, rng), empty), InputError);
}

TEST(Model, TokenizeRejectsOutOfVocabulary) {
  const CaptureModel m(tiny_config());
  const std::vector<int> bad{5, 400};
  EXPECT_THROW(m.tokenize(bad), InputError);
  const std::vector<int> longer(30, 7);
  const auto t = m.tokenize(longer);
  EXPECT_EQ(t.size(), 12);
  EXPECT_EQ(t.ids[0], Vocabulary::kCls);
}

TEST(Embedding, UnitNormAndLength) {
  const auto c = tiny_config(5);
  CaptureModel m(c);
  Rng rng(5);
  const auto o = m.forward(random_tokens(m, 4, rng), random_regions(2, c.d_v, rng));
  const Vector full = instance_embedding(o, true);
  const Vector joint = instance_embedding(o, false);
  EXPECT_EQ(full.size(), 2 * c.d_head_out);
  EXPECT_EQ(joint.size(), c.d_head_out);
  EXPECT_NEAR(full.norm(), 1.0, 1e-6);
  EXPECT_NEAR(joint.norm(), 1.0, 1e-6);
}

TEST(Embedding, ZeroVectorIsNumericError) {
  ModelOutputs o;
  o.joint = Vector::Zero(4);
  EXPECT_THROW(instance_embedding(o, false), NumericError);
}

TEST(CrossLayer, ConstantContextGivesSameSummandEverywhere) {
  ParamStore s;
  Rng rng(6);
  const auto half = CrossAttentionHalf::create(s, "x", 8, 2, 16, rng);
  const Matrix x = random_matrix(3, 8, rng);
  Matrix ctx(4, 8);
  ctx.rowwise() = random_matrix(1, 8, rng).row(0);
  CrossAttentionHalf::Cache cache;
  half.forward(s, x, ctx, {}, &cache);
  for (int i = 1; i < 3; ++i)
    EXPECT_LT((cache.attn.context.row(i) - cache.attn.context.row(0)).norm(), 1e-12);
}

TEST(CrossLayer, ZeroValuesReduceToFeedForward) {
  ParamStore s;
  Rng rng(7);
  const auto half = CrossAttentionHalf::create(s, "x", 8, 2, 16, rng);
  for (const Linear* l : {&half.attn.value, &half.attn.output}) {
    s.value(l->weight).setZero();
    s.value(l->bias).setZero();
  }
  const Matrix x = random_matrix(3, 8, rng);
  const Matrix ctx = random_matrix(5, 8, rng);
  const Matrix y = half.forward(s, x, ctx, {}, nullptr);
  const Matrix expect = x + half.ff.forward(s, half.ln_ff.forward(s, x, nullptr), nullptr);
  EXPECT_LT((y - expect).norm(), 1e-12);
}

TEST(CrossLayer, ShapesPreserved) {
  ParamStore s;
  Rng rng(8);
  const auto layer = CrossLayer::create(s, "c", 8, 2, 16, rng);
  const auto [t, v] =
      layer.forward(s, random_matrix(3, 8, rng), random_matrix(5, 8, rng), {}, {}, nullptr);
  EXPECT_EQ(t.rows(), 3);
  EXPECT_EQ(v.rows(), 5);
  EXPECT_EQ(t.cols(), 8);
}

TEST(CoLayer, EqualsSelfAttentionOverConcatenation) {
  ParamStore s;
  Rng rng(10);
  const auto co = CoLayer::create(s, "co", 8, 2, 16, rng);
  const Matrix text = random_matrix(4, 8, rng);
  const Matrix visual = random_matrix(3, 8, rng);
  const KeyMask tmask{0, 0, 0, 1};
  CoLayer::Cache cache;
  const auto [t, v] = co.forward(s, text, visual, tmask, {}, &cache);
  const Matrix joint = co.block.forward(s, vstack(text, visual), concat_masks(tmask, 4, {}, 3),
                                        nullptr);
  EXPECT_LT((t - joint.topRows(4)).norm(), 1e-12);
  EXPECT_LT((v - joint.bottomRows(3)).norm(), 1e-12);
  // Text queries put weight on visual keys and the reverse.
  const Matrix& p = cache.block.attn.probs[0];
  EXPECT_GT(p.topRightCorner(4, 3).sum(), 1e-3);
  EXPECT_GT(p.bottomLeftCorner(3, 3).sum(), 1e-3);
  EXPECT_EQ(p.col(3).cwiseAbs().sum(), 0.0);
}

TEST(ModelConfig, Validation) {
  auto c = tiny_config();
  c.L = c.K = c.H = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.n_heads = 3;
  EXPECT_THROW(c.validate(), ConfigError);
  c = tiny_config();
  c.modality = Modality::kTextOnly;
  EXPECT_THROW(c.validate(), ConfigError);
  c.K = c.H = 0;
  EXPECT_NO_THROW(c.validate());
}

TEST(ModelConfig, DeskScaleDefaults) {
  const ModelConfig c;
  EXPECT_EQ(c.max_text_len, 36);
  EXPECT_EQ(c.d_ff, 4 * c.d_model);
}

}  // namespace
}  // namespace capture
