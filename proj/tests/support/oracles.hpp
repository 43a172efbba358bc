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

// Reference implementations written straight from the definitions, for
// checking the library's versions.

#pragma once

#include <set>
#include <vector>

#include "capture/common.hpp"
#include "capture/retrieval.hpp"

namespace capture::testing {

// Recounts hits for every prefix instead of keeping running sums.
CutoffMetrics brute_force_metrics(const std::vector<int>& ranked, const std::set<int>& relevant,
                                  int N);

// Per-anchor contrastive term averaged over all 2N anchors, with explicit
// normalization and no log-sum-exp tricks.
double contrastive_by_hand(const Matrix& img, const Matrix& txt, double tau);

}  // namespace capture::testing
