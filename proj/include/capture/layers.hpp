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

// Transformer building blocks with hand-written backward passes.
//
// Sequences are row-major (tokens x features). Every layer refers to its
// weights by index into a ParamStore, so layers are plain values and a model
// can be copied without re-wiring pointers. forward() fills an optional cache;
// backward() consumes it, accumulates parameter gradients into the store and
// returns input gradients.

#pragma once

#include <string>
#include <utility>
#include <vector>

#include "capture/common.hpp"

namespace capture {

class ParamStore {
 public:
  struct Entry {
    std::string name;
    Matrix value;
    Matrix grad;
  };

  enum class Init { kNormal, kZeros, kOnes };

  int add(std::string name, int rows, int cols, Init init, Rng& rng, double stddev = 0.02);

  const Matrix& value(int id) const { return entries_[static_cast<size_t>(id)].value; }
  Matrix& value(int id) { return entries_[static_cast<size_t>(id)].value; }
  Matrix& grad(int id) { return entries_[static_cast<size_t>(id)].grad; }
  const Matrix& grad(int id) const { return entries_[static_cast<size_t>(id)].grad; }

  const std::vector<Entry>& entries() const { return entries_; }
  std::vector<Entry>& entries() { return entries_; }
  int find(const std::string& name) const;

  std::size_t scalar_count() const;
  void zero_grad();
  double grad_norm() const;

 private:
  std::vector<Entry> entries_;
};

// Key mask: masked[k] != 0 excludes key k from attention. Empty = no mask.
using KeyMask = std::vector<char>;

struct Linear {
  int weight = -1;  // out x in
  int bias = -1;    // 1 x out, -1 when absent
  int in = 0;
  int out = 0;

  static Linear create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                       bool with_bias = true);
  Matrix forward(const ParamStore& store, const Matrix& x) const;
  // Accumulates dW, db; returns dx.
  Matrix backward(ParamStore& store, const Matrix& x, const Matrix& dy) const;
};

struct LayerNorm {
  int gamma = -1;
  int beta = -1;
  int dim = 0;
  static constexpr double kEps = 1e-5;

  struct Cache {
    Matrix xhat;
    Vector inv_std;
  };

  static LayerNorm create(ParamStore& store, const std::string& name, int dim, Rng& rng);
  Matrix forward(const ParamStore& store, const Matrix& x, Cache* cache) const;
  Matrix backward(ParamStore& store, const Cache& cache, const Matrix& dy) const;
};

struct MultiHeadAttention {
  Linear query, key, value, output;
  int heads = 1;

  struct Cache {
    Matrix xq, xkv;
    Matrix q, k, v;
    Matrix context;
    std::vector<Matrix> probs;  // one Tq x Tk matrix per head
  };

  static MultiHeadAttention create(ParamStore& store, const std::string& name, int dim,
                                   int heads, Rng& rng);
  // Queries from `xq`, keys and values from `xkv`. Masked keys get weight 0.
  Matrix forward(const ParamStore& store, const Matrix& xq, const Matrix& xkv,
                 const KeyMask& key_mask, Cache* cache) const;
  // Returns (dxq, dxkv).
  std::pair<Matrix, Matrix> backward(ParamStore& store, const Cache& cache,
                                     const Matrix& dout) const;
};

// Softmax over unmasked entries of each row scaled logits; masked entries
// are exactly 0.
Matrix masked_softmax_rows(const Matrix& logits, const KeyMask& key_mask);

Matrix gelu(const Matrix& x);
Matrix gelu_grad(const Matrix& x);

struct FeedForward {
  Linear fc1, fc2;

  struct Cache {
    Matrix x, pre, act;
  };

  static FeedForward create(ParamStore& store, const std::string& name, int dim, int hidden,
                            Rng& rng);
  Matrix forward(const ParamStore& store, const Matrix& x, Cache* cache) const;
  Matrix backward(ParamStore& store, const Cache& cache, const Matrix& dy) const;
};

// Inverted dropout. With rng == nullptr or p == 0 it is the identity and the
// mask stays empty.
struct DropoutMask {
  Matrix scale;
  Matrix apply(const Matrix& x) const { return scale.size() ? Matrix(x.cwiseProduct(scale)) : x; }
  static DropoutMask draw(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng);
};

// Pre-norm self-attention block: x + Attn(LN(x)), then + FFN(LN(.)).
// Used for both the intra-modal layers and the joint (co) layers.
struct SelfAttentionBlock {
  LayerNorm ln_attn, ln_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  struct Cache {
    LayerNorm::Cache ln_attn, ln_ff;
    MultiHeadAttention::Cache attn;
    FeedForward::Cache ff;
    DropoutMask drop_attn, drop_ff;
  };

  static SelfAttentionBlock create(ParamStore& store, const std::string& name, int dim, int heads,
                                   int hidden, Rng& rng);
  Matrix forward(const ParamStore& store, const Matrix& x, const KeyMask& mask, Cache* cache,
                 double dropout = 0.0, Rng* rng = nullptr) const;
  Matrix backward(ParamStore& store, const Cache& cache, const Matrix& dy) const;
};

// One direction of a cross layer: the stream's queries attend over the other
// stream's (normalized) states, then a feed-forward sublayer.
struct CrossAttentionHalf {
  LayerNorm ln_query, ln_context, ln_ff;
  MultiHeadAttention attn;
  FeedForward ff;

  struct Cache {
    LayerNorm::Cache ln_query, ln_context, ln_ff;
    MultiHeadAttention::Cache attn;
    FeedForward::Cache ff;
    DropoutMask drop_attn, drop_ff;
  };

  static CrossAttentionHalf create(ParamStore& store, const std::string& name, int dim, int heads,
                                   int hidden, Rng& rng);
  Matrix forward(const ParamStore& store, const Matrix& x, const Matrix& context,
                 const KeyMask& context_mask, Cache* cache, double dropout = 0.0,
                 Rng* rng = nullptr) const;
  // Returns (dx, dcontext).
  std::pair<Matrix, Matrix> backward(ParamStore& store, const Cache& cache,
                                     const Matrix& dy) const;
};

// Key-value exchange between the two streams; both halves read the same
// input snapshot.
struct CrossLayer {
  CrossAttentionHalf text, visual;

  struct Cache {
    CrossAttentionHalf::Cache text, visual;
  };

  static CrossLayer create(ParamStore& store, const std::string& name, int dim, int heads,
                           int hidden, Rng& rng);
  std::pair<Matrix, Matrix> forward(const ParamStore& store, const Matrix& text,
                                    const Matrix& visual, const KeyMask& text_mask,
                                    const KeyMask& visual_mask, Cache* cache,
                                    double dropout = 0.0, Rng* rng = nullptr) const;
  std::pair<Matrix, Matrix> backward(ParamStore& store, const Cache& cache, const Matrix& dtext,
                                     const Matrix& dvisual) const;
};

// Self-attention over the concatenated [text; visual] sequence, split back.
struct CoLayer {
  SelfAttentionBlock block;

  struct Cache {
    SelfAttentionBlock::Cache block;
    Eigen::Index text_rows = 0;
  };

  static CoLayer create(ParamStore& store, const std::string& name, int dim, int heads,
                        int hidden, Rng& rng);
  std::pair<Matrix, Matrix> forward(const ParamStore& store, const Matrix& text,
                                    const Matrix& visual, const KeyMask& text_mask,
                                    const KeyMask& visual_mask, Cache* cache,
                                    double dropout = 0.0, Rng* rng = nullptr) const;
  std::pair<Matrix, Matrix> backward(ParamStore& store, const Cache& cache, const Matrix& dtext,
                                     const Matrix& dvisual) const;
};

Matrix vstack(const Matrix& top, const Matrix& bottom);
KeyMask concat_masks(const KeyMask& a, Eigen::Index a_rows, const KeyMask& b, Eigen::Index b_rows);

}  // namespace capture
