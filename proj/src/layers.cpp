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

#include "capture/layers.hpp"

#include <cmath>
#include <limits>

namespace capture {

int ParamStore::add(std::string name, int rows, int cols, Init init, Rng& rng, double stddev) {
  Entry e;
  e.name = std::move(name);
  switch (init) {
    case Init::kZeros: e.value = Matrix::Zero(rows, cols); break;
    case Init::kOnes: e.value = Matrix::Ones(rows, cols); break;
    case Init::kNormal: {
      std::normal_distribution<double> normal(0.0, stddev);
      e.value.resize(rows, cols);
      for (Eigen::Index i = 0; i < e.value.size(); ++i) e.value.data()[i] = normal(rng);
      break;
    }
  }
  e.grad = Matrix::Zero(rows, cols);
  entries_.push_back(std::move(e));
  return static_cast<int>(entries_.size()) - 1;
}

int ParamStore::find(const std::string& name) const {
  for (size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

std::size_t ParamStore::scalar_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += static_cast<std::size_t>(e.value.size());
  return n;
}

void ParamStore::zero_grad() {
  for (auto& e : entries_) e.grad.setZero();
}

double ParamStore::grad_norm() const {
  double s = 0.0;
  for (const auto& e : entries_) s += e.grad.squaredNorm();
  return std::sqrt(s);
}

// ---------------------------------------------------------------------------

Linear Linear::create(ParamStore& store, const std::string& name, int in, int out, Rng& rng,
                      bool with_bias) {
  Linear l;
  l.in = in;
  l.out = out;
  l.weight = store.add(name + ".weight", out, in, ParamStore::Init::kNormal, rng);
  if (with_bias) l.bias = store.add(name + ".bias", 1, out, ParamStore::Init::kZeros, rng);
  return l;
}

Matrix Linear::forward(const ParamStore& store, const Matrix& x) const {
  Matrix y = x * store.value(weight).transpose();
  if (bias >= 0) y.rowwise() += store.value(bias).row(0);
  return y;
}

Matrix Linear::backward(ParamStore& store, const Matrix& x, const Matrix& dy) const {
  store.grad(weight).noalias() += dy.transpose() * x;
  if (bias >= 0) store.grad(bias).row(0) += dy.colwise().sum();
  return dy * store.value(weight);
}

// ---------------------------------------------------------------------------

LayerNorm LayerNorm::create(ParamStore& store, const std::string& name, int dim, Rng& rng) {
  LayerNorm ln;
  ln.dim = dim;
  ln.gamma = store.add(name + ".gamma", 1, dim, ParamStore::Init::kOnes, rng);
  ln.beta = store.add(name + ".beta", 1, dim, ParamStore::Init::kZeros, rng);
  return ln;
}

Matrix LayerNorm::forward(const ParamStore& store, const Matrix& x, Cache* cache) const {
  const Eigen::Index n = x.rows();
  Matrix xhat(n, x.cols());
  Vector inv_std(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mean = x.row(i).mean();
    const double var = (x.row(i).array() - mean).square().mean();
    inv_std(i) = 1.0 / std::sqrt(var + kEps);
    xhat.row(i) = (x.row(i).array() - mean) * inv_std(i);
  }
  Matrix y = xhat.array().rowwise() * store.value(gamma).row(0).array();
  y.rowwise() += store.value(beta).row(0);
  if (cache) {
    cache->xhat = std::move(xhat);
    cache->inv_std = std::move(inv_std);
  }
  return y;
}

Matrix LayerNorm::backward(ParamStore& store, const Cache& cache, const Matrix& dy) const {
  store.grad(gamma).row(0) += (dy.array() * cache.xhat.array()).colwise().sum().matrix();
  store.grad(beta).row(0) += dy.colwise().sum();
  Matrix dxhat = dy.array().rowwise() * store.value(gamma).row(0).array();
  Matrix dx(dy.rows(), dy.cols());
  for (Eigen::Index i = 0; i < dy.rows(); ++i) {
    const double m1 = dxhat.row(i).mean();
    const double m2 = dxhat.row(i).dot(cache.xhat.row(i)) / static_cast<double>(dy.cols());
    dx.row(i) = cache.inv_std(i) *
                (dxhat.row(i).array() - m1 - cache.xhat.row(i).array() * m2).matrix();
  }
  return dx;
}

// ---------------------------------------------------------------------------

Matrix masked_softmax_rows(const Matrix& logits, const KeyMask& key_mask) {
  Matrix p(logits.rows(), logits.cols());
  for (Eigen::Index i = 0; i < logits.rows(); ++i) {
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < logits.cols(); ++j)
      if (key_mask.empty() || !key_mask[static_cast<size_t>(j)]) mx = std::max(mx, logits(i, j));
    double sum = 0.0;
    for (Eigen::Index j = 0; j < logits.cols(); ++j) {
      const bool masked = !key_mask.empty() && key_mask[static_cast<size_t>(j)];
      p(i, j) = masked ? 0.0 : std::exp(logits(i, j) - mx);
      sum += p(i, j);
    }
    if (sum > 0.0) p.row(i) /= sum;
  }
  return p;
}

MultiHeadAttention MultiHeadAttention::create(ParamStore& store, const std::string& name, int dim,
                                              int heads, Rng& rng) {
  MultiHeadAttention a;
  a.heads = heads;
  a.query = Linear::create(store, name + ".query", dim, dim, rng);
  a.key = Linear::create(store, name + ".key", dim, dim, rng);
  a.value = Linear::create(store, name + ".value", dim, dim, rng);
  a.output = Linear::create(store, name + ".output", dim, dim, rng);
  return a;
}

Matrix MultiHeadAttention::forward(const ParamStore& store, const Matrix& xq, const Matrix& xkv,
                                   const KeyMask& key_mask, Cache* cache) const {
  Matrix q = query.forward(store, xq);
  Matrix k = key.forward(store, xkv);
  Matrix v = value.forward(store, xkv);
  const int dim = query.out;
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix context(xq.rows(), dim);
  std::vector<Matrix> probs;
  if (cache) probs.reserve(static_cast<size_t>(heads));
  for (int h = 0; h < heads; ++h) {
    const auto qh = q.middleCols(h * dh, dh);
    const auto kh = k.middleCols(h * dh, dh);
    Matrix p = masked_softmax_rows((qh * kh.transpose()) * scale, key_mask);
    context.middleCols(h * dh, dh).noalias() = p * v.middleCols(h * dh, dh);
    if (cache) probs.push_back(std::move(p));
  }
  Matrix out = output.forward(store, context);
  if (cache) {
    cache->xq = xq;
    cache->xkv = xkv;
    cache->q = std::move(q);
    cache->k = std::move(k);
    cache->v = std::move(v);
    cache->context = std::move(context);
    cache->probs = std::move(probs);
  }
  return out;
}

std::pair<Matrix, Matrix> MultiHeadAttention::backward(ParamStore& store, const Cache& c,
                                                       const Matrix& dout) const {
  const Matrix dcontext = output.backward(store, c.context, dout);
  const int dim = query.out;
  const int dh = dim / heads;
  const double scale = 1.0 / std::sqrt(static_cast<double>(dh));
  Matrix dq(c.q.rows(), dim), dk(c.k.rows(), dim), dv(c.v.rows(), dim);
  for (int h = 0; h < heads; ++h) {
    const Matrix& p = c.probs[static_cast<size_t>(h)];
    const auto dctx = dcontext.middleCols(h * dh, dh);
    const Matrix dp = dctx * c.v.middleCols(h * dh, dh).transpose();
    dv.middleCols(h * dh, dh).noalias() = p.transpose() * dctx;
    const Vector row_dot = (dp.array() * p.array()).rowwise().sum();
    Matrix ds = p.array() * (dp.array().colwise() - row_dot.array());
    ds *= scale;
    dq.middleCols(h * dh, dh).noalias() = ds * c.k.middleCols(h * dh, dh);
    dk.middleCols(h * dh, dh).noalias() = ds.transpose() * c.q.middleCols(h * dh, dh);
  }
  Matrix dxq = query.backward(store, c.xq, dq);
  Matrix dxkv = key.backward(store, c.xkv, dk);
  dxkv += value.backward(store, c.xkv, dv);
  return {std::move(dxq), std::move(dxkv)};
}

// ---------------------------------------------------------------------------

namespace {
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;
}  // namespace

Matrix gelu(const Matrix& x) {
  return x.unaryExpr([](double v) {
    return 0.5 * v * (1.0 + std::tanh(kGeluC * (v + kGeluA * v * v * v)));
  });
}

Matrix gelu_grad(const Matrix& x) {
  return x.unaryExpr([](double v) {
    const double t = std::tanh(kGeluC * (v + kGeluA * v * v * v));
    return 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * kGeluC * (1.0 + 3.0 * kGeluA * v * v);
  });
}

FeedForward FeedForward::create(ParamStore& store, const std::string& name, int dim, int hidden,
                                Rng& rng) {
  FeedForward f;
  f.fc1 = Linear::create(store, name + ".fc1", dim, hidden, rng);
  f.fc2 = Linear::create(store, name + ".fc2", hidden, dim, rng);
  return f;
}

Matrix FeedForward::forward(const ParamStore& store, const Matrix& x, Cache* cache) const {
  Matrix pre = fc1.forward(store, x);
  Matrix act = gelu(pre);
  Matrix y = fc2.forward(store, act);
  if (cache) {
    cache->x = x;
    cache->pre = std::move(pre);
    cache->act = std::move(act);
  }
  return y;
}

Matrix FeedForward::backward(ParamStore& store, const Cache& c, const Matrix& dy) const {
  const Matrix dact = fc2.backward(store, c.act, dy);
  const Matrix dpre = dact.cwiseProduct(gelu_grad(c.pre));
  return fc1.backward(store, c.x, dpre);
}

DropoutMask DropoutMask::draw(Eigen::Index rows, Eigen::Index cols, double p, Rng* rng) {
  DropoutMask m;
  if (!rng || p <= 0.0) return m;
  std::bernoulli_distribution keep(1.0 - p);
  m.scale.resize(rows, cols);
  for (Eigen::Index i = 0; i < m.scale.size(); ++i)
    m.scale.data()[i] = keep(*rng) ? 1.0 / (1.0 - p) : 0.0;
  return m;
}

// ---------------------------------------------------------------------------

SelfAttentionBlock SelfAttentionBlock::create(ParamStore& store, const std::string& name, int dim,
                                              int heads, int hidden, Rng& rng) {
  SelfAttentionBlock b;
  b.ln_attn = LayerNorm::create(store, name + ".ln_attn", dim, rng);
  b.attn = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
  b.ln_ff = LayerNorm::create(store, name + ".ln_ff", dim, rng);
  b.ff = FeedForward::create(store, name + ".ff", dim, hidden, rng);
  return b;
}

Matrix SelfAttentionBlock::forward(const ParamStore& store, const Matrix& x, const KeyMask& mask,
                                   Cache* cache, double dropout, Rng* rng) const {
  const Matrix a = ln_attn.forward(store, x, cache ? &cache->ln_attn : nullptr);
  auto drop_attn = DropoutMask::draw(x.rows(), x.cols(), dropout, rng);
  Matrix h = x + drop_attn.apply(attn.forward(store, a, a, mask, cache ? &cache->attn : nullptr));
  const Matrix b = ln_ff.forward(store, h, cache ? &cache->ln_ff : nullptr);
  auto drop_ff = DropoutMask::draw(x.rows(), x.cols(), dropout, rng);
  h += drop_ff.apply(ff.forward(store, b, cache ? &cache->ff : nullptr));
  if (cache) {
    cache->drop_attn = std::move(drop_attn);
    cache->drop_ff = std::move(drop_ff);
  }
  return h;
}

Matrix SelfAttentionBlock::backward(ParamStore& store, const Cache& c, const Matrix& dy) const {
  Matrix dh = dy;
  dh += ln_ff.backward(store, c.ln_ff, ff.backward(store, c.ff, c.drop_ff.apply(dy)));
  auto [dq, dkv] = attn.backward(store, c.attn, c.drop_attn.apply(dh));
  Matrix dx = dh;
  dx += ln_attn.backward(store, c.ln_attn, dq + dkv);
  return dx;
}

CrossAttentionHalf CrossAttentionHalf::create(ParamStore& store, const std::string& name, int dim,
                                              int heads, int hidden, Rng& rng) {
  CrossAttentionHalf c;
  c.ln_query = LayerNorm::create(store, name + ".ln_query", dim, rng);
  c.ln_context = LayerNorm::create(store, name + ".ln_context", dim, rng);
  c.attn = MultiHeadAttention::create(store, name + ".attn", dim, heads, rng);
  c.ln_ff = LayerNorm::create(store, name + ".ln_ff", dim, rng);
  c.ff = FeedForward::create(store, name + ".ff", dim, hidden, rng);
  return c;
}

Matrix CrossAttentionHalf::forward(const ParamStore& store, const Matrix& x, const Matrix& context,
                                   const KeyMask& context_mask, Cache* cache, double dropout,
                                   Rng* rng) const {
  const Matrix q = ln_query.forward(store, x, cache ? &cache->ln_query : nullptr);
  const Matrix kv = ln_context.forward(store, context, cache ? &cache->ln_context : nullptr);
  auto drop_attn = DropoutMask::draw(x.rows(), x.cols(), dropout, rng);
  Matrix h = x + drop_attn.apply(
                     attn.forward(store, q, kv, context_mask, cache ? &cache->attn : nullptr));
  const Matrix b = ln_ff.forward(store, h, cache ? &cache->ln_ff : nullptr);
  auto drop_ff = DropoutMask::draw(x.rows(), x.cols(), dropout, rng);
  h += drop_ff.apply(ff.forward(store, b, cache ? &cache->ff : nullptr));
  if (cache) {
    cache->drop_attn = std::move(drop_attn);
    cache->drop_ff = std::move(drop_ff);
  }
  return h;
}

std::pair<Matrix, Matrix> CrossAttentionHalf::backward(ParamStore& store, const Cache& c,
                                                       const Matrix& dy) const {
  Matrix dh = dy;
  dh += ln_ff.backward(store, c.ln_ff, ff.backward(store, c.ff, c.drop_ff.apply(dy)));
  auto [dq, dkv] = attn.backward(store, c.attn, c.drop_attn.apply(dh));
  Matrix dx = dh;
  dx += ln_query.backward(store, c.ln_query, dq);
  Matrix dcontext = ln_context.backward(store, c.ln_context, dkv);
  return {std::move(dx), std::move(dcontext)};
}

CrossLayer CrossLayer::create(ParamStore& store, const std::string& name, int dim, int heads,
                              int hidden, Rng& rng) {
  CrossLayer l;
  l.text = CrossAttentionHalf::create(store, name + ".text", dim, heads, hidden, rng);
  l.visual = CrossAttentionHalf::create(store, name + ".visual", dim, heads, hidden, rng);
  return l;
}

std::pair<Matrix, Matrix> CrossLayer::forward(const ParamStore& store, const Matrix& text_in,
                                              const Matrix& visual_in, const KeyMask& text_mask,
                                              const KeyMask& visual_mask, Cache* cache,
                                              double dropout, Rng* rng) const {
  Matrix t = text.forward(store, text_in, visual_in, visual_mask, cache ? &cache->text : nullptr,
                          dropout, rng);
  Matrix v = visual.forward(store, visual_in, text_in, text_mask,
                            cache ? &cache->visual : nullptr, dropout, rng);
  return {std::move(t), std::move(v)};
}

std::pair<Matrix, Matrix> CrossLayer::backward(ParamStore& store, const Cache& c,
                                               const Matrix& dtext, const Matrix& dvisual) const {
  auto [dt_self, dv_from_text] = text.backward(store, c.text, dtext);
  auto [dv_self, dt_from_visual] = visual.backward(store, c.visual, dvisual);
  return {dt_self + dt_from_visual, dv_self + dv_from_text};
}

CoLayer CoLayer::create(ParamStore& store, const std::string& name, int dim, int heads, int hidden,
                        Rng& rng) {
  CoLayer l;
  l.block = SelfAttentionBlock::create(store, name, dim, heads, hidden, rng);
  return l;
}

Matrix vstack(const Matrix& top, const Matrix& bottom) {
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out.topRows(top.rows()) = top;
  out.bottomRows(bottom.rows()) = bottom;
  return out;
}

KeyMask concat_masks(const KeyMask& a, Eigen::Index a_rows, const KeyMask& b,
                     Eigen::Index b_rows) {
  if (a.empty() && b.empty()) return {};
  KeyMask out(static_cast<size_t>(a_rows + b_rows), 0);
  for (size_t i = 0; i < a.size(); ++i) out[i] = a[i];
  for (size_t i = 0; i < b.size(); ++i) out[static_cast<size_t>(a_rows) + i] = b[i];
  return out;
}

std::pair<Matrix, Matrix> CoLayer::forward(const ParamStore& store, const Matrix& text,
                                           const Matrix& visual, const KeyMask& text_mask,
                                           const KeyMask& visual_mask, Cache* cache,
                                           double dropout, Rng* rng) const {
  const Matrix joint = vstack(text, visual);
  const KeyMask mask = concat_masks(text_mask, text.rows(), visual_mask, visual.rows());
  const Matrix out = block.forward(store, joint, mask, cache ? &cache->block : nullptr, dropout, rng);
  if (cache) cache->text_rows = text.rows();
  return {out.topRows(text.rows()), out.bottomRows(visual.rows())};
}

std::pair<Matrix, Matrix> CoLayer::backward(ParamStore& store, const Cache& c, const Matrix& dtext,
                                            const Matrix& dvisual) const {
  const Matrix d = block.backward(store, c.block, vstack(dtext, dvisual));
  return {d.topRows(c.text_rows), d.bottomRows(d.rows() - c.text_rows)};
}

}  // namespace capture
