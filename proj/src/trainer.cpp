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
#include <cmath>
#include <fstream>
#include <numeric>

#include "capture/pretrain.hpp"

namespace capture {

void PretrainConfig::validate() const {
  if (!(mask_prob > 0.0 && mask_prob < 1.0)) throw ConfigError("mask_prob must lie in (0,1)");
  if (!(temperature > 0.0)) throw ConfigError("temperature must be positive");
  const auto& c = corruption;
  if (c.replace_with_mask < 0 || c.random_token < 0 || c.keep < 0 ||
      std::abs(c.replace_with_mask + c.random_token + c.keep - 1.0) > 1e-9)
    throw ConfigError("corruption probabilities must be non-negative and sum to 1");
  if (!losses.any()) throw ConfigError("at least one pretraining loss must be enabled");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (epochs < 1) throw ConfigError("epochs must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
}

AdamOptimizer::AdamOptimizer(const ParamStore& params) {
  for (const auto& e : params.entries()) {
    m_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
    v_.push_back(Matrix::Zero(e.value.rows(), e.value.cols()));
  }
}

void AdamOptimizer::step(ParamStore& params, double lr) {
  ++t_;
  const double bc1 = 1.0 - std::pow(kBeta1, t_);
  const double bc2 = 1.0 - std::pow(kBeta2, t_);
  auto& entries = params.entries();
  for (size_t i = 0; i < entries.size(); ++i) {
    auto& e = entries[i];
    m_[i] = kBeta1 * m_[i] + (1.0 - kBeta1) * e.grad;
    v_[i] = kBeta2 * v_[i] + (1.0 - kBeta2) * e.grad.cwiseProduct(e.grad);
    e.value.array() -=
        lr * (m_[i].array() / bc1) / ((v_[i].array() / bc2).sqrt() + kEps);
  }
}

namespace {

struct PairPlan {
  const TokenSequence* tokens;
  const RegionSet* regions;
  int label;  // 1 = matched
};

// Split `grad` rows back to samples by `counts`.
std::vector<Matrix> split_rows(const Matrix& grad, const std::vector<Eigen::Index>& counts) {
  std::vector<Matrix> out;
  Eigen::Index offset = 0;
  for (auto c : counts) {
    out.push_back(grad.middleRows(offset, c));
    offset += c;
  }
  return out;
}

}  // namespace

LossRecord accumulate_batch_gradients(CaptureModel& model, std::span<const TrainingExample> batch,
                                      const PretrainConfig& config, Rng& rng) {
  const auto& mc = model.config();
  const auto& sw = config.losses;
  const size_t n = batch.size();
  LossRecord rec;
  if (n == 0) return rec;
  const bool joint = mc.modality == Modality::kJoint;

  const bool need_full = sw.mlm || sw.mrp || (sw.itm && joint);
  if (need_full) {
    MaskedBatch masked = mask_batch(batch, config.mask_prob, config.corruption, mc.vocab_size, rng);

    // ITM: half the pairs get the image or the caption of another sample.
    std::vector<PairPlan> plans;
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (size_t i = 0; i < n; ++i) {
      PairPlan p{&masked.examples[i].tokens, &masked.examples[i].regions, 1};
      if (sw.itm && joint && n > 1 && unit(rng) < 0.5) {
        size_t j = std::uniform_int_distribution<size_t>(0, n - 2)(rng);
        if (j >= i) ++j;
        if (unit(rng) < 0.5)
          p.regions = &masked.examples[j].regions;
        else
          p.tokens = &masked.examples[j].tokens;
        p.label = 0;
      }
      plans.push_back(p);
    }

    std::vector<ForwardCacheHandle> caches(n);
    std::vector<ModelOutputs> outs(n);
    for (size_t i = 0; i < n; ++i)
      outs[i] = model.forward(*plans[i].tokens, *plans[i].regions, &caches[i], &rng);

    std::vector<OutputGrads> grads(n);
    for (size_t i = 0; i < n; ++i) {
      if (outs[i].text_states.size()) grads[i].text_states = Matrix::Zero(outs[i].text_states.rows(), outs[i].text_states.cols());
      if (outs[i].visual_states.size()) grads[i].visual_states = Matrix::Zero(outs[i].visual_states.rows(), outs[i].visual_states.cols());
    }

    // MLM targets follow the caption actually fed to the model.
    if (sw.mlm && mc.modality != Modality::kImageOnly) {
      std::vector<Eigen::Index> counts;
      std::vector<int> targets;
      std::vector<const MaskedExample*> srcs;
      Eigen::Index total = 0;
      for (size_t i = 0; i < n; ++i) {
        const MaskedExample* src = nullptr;
        for (const auto& m : masked.examples)
          if (&m.tokens == plans[i].tokens) src = &m;
        srcs.push_back(src);
        counts.push_back(static_cast<Eigen::Index>(src->text_positions.size()));
        total += counts.back();
      }
      Matrix rows(total, mc.d_model);
      Eigen::Index r = 0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < srcs[i]->text_positions.size(); ++k) {
          rows.row(r++) = outs[i].text_states.row(srcs[i]->text_positions[k]);
          targets.push_back(srcs[i]->text_targets[k]);
        }
      }
      const Matrix logits = model.mlm_decoder().forward(model.params(), rows);
      const LossValue loss = mlm_loss(logits, targets);
      rec.mlm = loss.value;
      if (total > 0) {
        const Matrix drows = model.mlm_decoder().backward(model.params(), rows, loss.grad);
        const auto parts = split_rows(drows, counts);
        for (size_t i = 0; i < n; ++i)
          for (size_t k = 0; k < srcs[i]->text_positions.size(); ++k)
            grads[i].text_states.row(srcs[i]->text_positions[k]) += parts[i].row(static_cast<Eigen::Index>(k));
      }
    }

    if (sw.mrp && mc.modality != Modality::kTextOnly) {
      std::vector<Eigen::Index> counts;
      std::vector<const MaskedExample*> srcs;
      Eigen::Index total = 0;
      for (size_t i = 0; i < n; ++i) {
        const MaskedExample* src = nullptr;
        for (const auto& m : masked.examples)
          if (&m.regions == plans[i].regions) src = &m;
        srcs.push_back(src);
        counts.push_back(static_cast<Eigen::Index>(src->region_positions.size()));
        total += counts.back();
      }
      Matrix rows(total, mc.d_model);
      Matrix targets(total, mc.d_v);
      Eigen::Index r = 0;
      for (size_t i = 0; i < n; ++i) {
        for (size_t k = 0; k < srcs[i]->region_positions.size(); ++k) {
          // +1 skips the [IMG] row.
          rows.row(r) = outs[i].visual_states.row(srcs[i]->region_positions[k] + 1);
          targets.row(r) = srcs[i]->region_targets.row(static_cast<Eigen::Index>(k));
          ++r;
        }
      }
      const Matrix pred = model.mrp_head().forward(model.params(), rows);
      const LossValue loss = mrp_loss(pred, targets);
      rec.mrp = loss.value;
      if (total > 0) {
        const Matrix drows = model.mrp_head().backward(model.params(), rows, loss.grad);
        const auto parts = split_rows(drows, counts);
        for (size_t i = 0; i < n; ++i)
          for (size_t k = 0; k < srcs[i]->region_positions.size(); ++k)
            grads[i].visual_states.row(srcs[i]->region_positions[k] + 1) +=
                parts[i].row(static_cast<Eigen::Index>(k));
      }
    }

    if (sw.itm && joint) {
      Matrix joints(static_cast<Eigen::Index>(n), mc.d_head_out);
      std::vector<int> labels;
      for (size_t i = 0; i < n; ++i) {
        joints.row(static_cast<Eigen::Index>(i)) = outs[i].joint.transpose();
        labels.push_back(plans[i].label);
      }
      const Matrix logits = model.itm_head().forward(model.params(), joints);
      const LossValue loss = itm_loss(logits, labels);
      rec.itm = loss.value;
      const Matrix djoint = model.itm_head().backward(model.params(), joints, loss.grad);
      for (size_t i = 0; i < n; ++i)
        grads[i].joint = djoint.row(static_cast<Eigen::Index>(i)).transpose();
    }

    for (size_t i = 0; i < n; ++i) model.backward(caches[i], grads[i]);
  }

  // Contrastive alignment runs on the clean pair and only needs the intra
  // layers.
  if (sw.ctr && joint) {
    std::vector<ForwardCacheHandle> caches(n);
    Matrix img(static_cast<Eigen::Index>(n), mc.d_head_out);
    Matrix txt(static_cast<Eigen::Index>(n), mc.d_head_out);
    for (size_t i = 0; i < n; ++i) {
      const auto out = model.forward(batch[i].tokens, batch[i].regions, &caches[i], &rng,
                                     ForwardDepth::kContrast);
      img.row(static_cast<Eigen::Index>(i)) = out.contrast_img.transpose();
      txt.row(static_cast<Eigen::Index>(i)) = out.contrast_txt.transpose();
    }
    const auto loss = contrastive_loss(img, txt, config.temperature);
    rec.ctr = loss.value;
    for (size_t i = 0; i < n; ++i) {
      OutputGrads g;
      g.contrast_img = loss.grad_img.row(static_cast<Eigen::Index>(i)).transpose();
      g.contrast_txt = loss.grad_txt.row(static_cast<Eigen::Index>(i)).transpose();
      model.backward(caches[i], g);
    }
  }

  rec.total = rec.mlm + rec.mrp + rec.ctr + rec.itm;
  return rec;
}

TrainResult train(CaptureModel& model, std::span<const TrainingExample> examples,
                  const PretrainConfig& config, const EpochCallback& on_epoch) {
  config.validate();
  if (examples.empty()) throw ConfigError("training split is empty");
  const auto& sw = config.losses;
  const auto modality = model.config().modality;
  if (modality != Modality::kJoint && (sw.ctr || sw.itm))
    throw ConfigError("contrastive and matching losses need both streams");
  if ((modality == Modality::kTextOnly && !sw.mlm) || (modality == Modality::kImageOnly && !sw.mrp))
    throw ConfigError("single-stream model has no enabled loss");

  Rng rng(mix_seed(config.seed, 0x7a1aULL));
  AdamOptimizer adam(model.params());
  const size_t n = examples.size();
  const size_t bs = static_cast<size_t>(config.batch_size);
  const size_t steps_per_epoch = (n + bs - 1) / bs;
  const double total_steps = static_cast<double>(steps_per_epoch * static_cast<size_t>(config.epochs));

  TrainResult result;
  std::vector<size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::vector<TrainingExample> batch;
  int step = 0;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (size_t start = 0; start < n; start += bs) {
      batch.clear();
      for (size_t k = start; k < std::min(n, start + bs); ++k) batch.push_back(examples[order[k]]);
      const double lr = config.linear_decay
                            ? config.learning_rate * (1.0 - static_cast<double>(step) / total_steps)
                            : config.learning_rate;
      model.params().zero_grad();
      LossRecord rec = accumulate_batch_gradients(model, batch, config, rng);
      if (!std::isfinite(rec.total)) throw NumericError("training diverged: non-finite loss");
      adam.step(model.params(), lr);
      rec.step = ++step;
      rec.lr = lr;
      result.curve.push_back(rec);
    }
    if (on_epoch) on_epoch(epoch, model);
  }
  return result;
}

void write_loss_curve(const std::string& path, std::span<const LossRecord> curve) {
  std::ofstream os(path);
  if (!os) throw FormatError("cannot write " + path);
  os << "step,mlm,mrp,ctr,itm,total,lr\n";
  os.precision(8);
  for (const auto& r : curve)
    os << r.step << ',' << r.mlm << ',' << r.mrp << ',' << r.ctr << ',' << r.itm << ','
       << r.total << ',' << r.lr << '\n';
}

}  // namespace capture
