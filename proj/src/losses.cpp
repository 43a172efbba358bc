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
#include <iostream>
#include <limits>

#include "capture/pretrain.hpp"

namespace capture {
namespace {

LossValue softmax_cross_entropy(const Matrix& logits, std::span<const int> targets,
                                const char* what) {
  LossValue out;
  const Eigen::Index n = logits.rows();
  if (n == 0) {
    std::clog << "warning: " << what << " loss has no positions; contributing 0\n";
    out.grad = Matrix::Zero(0, logits.cols());
    return out;
  }
  if (static_cast<Eigen::Index>(targets.size()) != n)
    throw InputError(std::string(what) + ": target count does not match logits");
  out.grad.resize(n, logits.cols());
  double total = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const int t = targets[static_cast<size_t>(i)];
    if (t < 0 || t >= logits.cols()) throw InputError(std::string(what) + ": target out of range");
    const double mx = logits.row(i).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(i).array() - mx).exp().matrix();
    const double z = e.sum();
    total += -(logits(i, t) - mx - std::log(z));
    out.grad.row(i) = e / z;
    out.grad(i, t) -= 1.0;
  }
  out.value = total / static_cast<double>(n);
  out.grad /= static_cast<double>(n);
  return out;
}

}  // namespace

LossValue mlm_loss(const Matrix& logits, std::span<const int> targets) {
  return softmax_cross_entropy(logits, targets, "mlm");
}

LossValue mrp_loss(const Matrix& prediction, const Matrix& target) {
  LossValue out;
  if (prediction.rows() != target.rows() || prediction.cols() != target.cols())
    throw InputError("mrp: prediction and target shapes differ");
  if (prediction.size() == 0) {
    std::clog << "warning: mrp loss has no positions; contributing 0\n";
    out.grad = Matrix::Zero(prediction.rows(), prediction.cols());
    return out;
  }
  const Matrix diff = prediction - target;
  const double count = static_cast<double>(diff.size());
  out.value = diff.squaredNorm() / count;
  out.grad = diff * (2.0 / count);
  return out;
}

ContrastiveLoss contrastive_loss(const Matrix& img, const Matrix& txt, double temperature) {
  if (img.rows() != txt.rows() || img.cols() != txt.cols())
    throw InputError("contrastive: image and text batches differ in shape");
  if (img.rows() < 1) throw InputError("contrastive: empty batch");
  if (!(temperature > 0.0)) throw InputError("contrastive: temperature must be positive");
  const Eigen::Index n = img.rows();
  const Eigen::Index m = 2 * n;
  const Matrix z = vstack(img, txt);
  Vector norms(m);
  Matrix u(m, z.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    norms(i) = z.row(i).norm();
    if (!(norms(i) > 0.0)) throw NumericError("contrastive: zero embedding");
    u.row(i) = z.row(i) / norms(i);
  }
  const Matrix logits = (u * u.transpose()) / temperature;

  // dL/dlogits: softmax over k != a minus the positive indicator, / 2N.
  Matrix dlogits = Matrix::Zero(m, m);
  double total = 0.0;
  for (Eigen::Index a = 0; a < m; ++a) {
    const Eigen::Index pos = a < n ? a + n : a - n;
    double mx = -std::numeric_limits<double>::infinity();
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != a) mx = std::max(mx, logits(a, k));
    double z_sum = 0.0;
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != a) z_sum += std::exp(logits(a, k) - mx);
    total += -(logits(a, pos) - mx - std::log(z_sum));
    for (Eigen::Index k = 0; k < m; ++k)
      if (k != a) dlogits(a, k) = std::exp(logits(a, k) - mx) / z_sum;
    dlogits(a, pos) -= 1.0;
  }
  dlogits /= static_cast<double>(m);

  const Matrix du = ((dlogits + dlogits.transpose()) * u) / temperature;
  Matrix dz(m, z.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double proj = u.row(i).dot(du.row(i));
    dz.row(i) = (du.row(i) - proj * u.row(i)) / norms(i);
  }
  ContrastiveLoss out;
  out.value = total / static_cast<double>(m);
  out.grad_img = dz.topRows(n);
  out.grad_txt = dz.bottomRows(n);
  return out;
}

LossValue itm_loss(const Matrix& logits, std::span<const int> labels) {
  if (logits.cols() != 2) throw InputError("itm: expected two logits per pair");
  return softmax_cross_entropy(logits, labels, "itm");
}

}  // namespace capture
