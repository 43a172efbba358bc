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

#include "oracles.hpp"

#include <algorithm>
#include <cmath>

namespace capture::testing {

CutoffMetrics brute_force_metrics(const std::vector<int>& ranked, const std::set<int>& relevant,
                                  int N) {
  const int R = static_cast<int>(relevant.size());
  const int depth = static_cast<int>(ranked.size());
  auto hits_in_top = [&](int k) {
    int h = 0;
    for (int i = 0; i < k && i < depth; ++i) h += relevant.count(ranked[static_cast<size_t>(i)]) ? 1 : 0;
    return h;
  };
  double ap = 0.0;
  for (int k = 1; k <= N && k <= depth; ++k) {
    if (!relevant.count(ranked[static_cast<size_t>(k - 1)])) continue;
    ap += static_cast<double>(hits_in_top(k)) / k;
  }
  CutoffMetrics m;
  m.ap = ap / std::min(R, N);
  m.ar = static_cast<double>(hits_in_top(N)) / R;
  m.prec = static_cast<double>(hits_in_top(N)) / N;
  return m;
}

double contrastive_by_hand(const Matrix& img, const Matrix& txt, double tau) {
  const auto n = img.rows();
  std::vector<Vector> pts;
  for (Eigen::Index i = 0; i < n; ++i) pts.push_back(img.row(i).transpose().normalized());
  for (Eigen::Index i = 0; i < n; ++i) pts.push_back(txt.row(i).transpose().normalized());
  double sum = 0.0;
  for (Eigen::Index a = 0; a < 2 * n; ++a) {
    const Eigen::Index pos = (a + n) % (2 * n);
    double denom = 0.0;
    for (Eigen::Index k = 0; k < 2 * n; ++k)
      if (k != a) denom += std::exp(pts[a].dot(pts[k]) / tau);
    sum += -std::log(std::exp(pts[a].dot(pts[pos]) / tau) / denom);
  }
  return sum / static_cast<double>(2 * n);
}

}  // namespace capture::testing
