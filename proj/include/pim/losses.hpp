// Copyright 2026 The PIM Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Training objective. All per-point quantities are softmax probabilities;
// region summaries are means over points, so every log argument stays in
// (0, 1). Batch terms are averages over samples.

#pragma once

#include <cstddef>
#include <vector>

#include "pim/selector.hpp"

namespace pim {

inline constexpr double kLogEpsilon = 1e-6;

struct LossWeights {
  double block = 1.0;     // lambda_b
  double selected = 0.0;  // lambda_s
  double flatten = 5.0;   // lambda_n
  double combiner = 1.0;  // lambda_c
  void validate() const;
};

struct LossTerm {
  Tensor loss;                  // [1]
  std::vector<Tensor> summary;  // per block, [B, C']
};

// z_l = mean over all points of the block's probabilities;
// L_b = sum_l mean_b -log z_l[label].
LossTerm block_average_loss(const std::vector<PointLogits>& pls, const std::vector<std::size_t>& labels);

// h_l = mean probabilities over selected points; L_s = sum_l mean_b -log h_l[label].
LossTerm selected_loss(const std::vector<PointLogits>& pls,
                       const std::vector<std::vector<SelectionResult>>& selections,
                       const std::vector<std::size_t>& labels);

// n_l = mean probabilities over dropped points;
// L_n = sum_l mean_b sum_i -log(1 - clamp(n_l[i], eps, 1 - eps)).
// A sample with no dropped points contributes 0 (and a warning on stderr).
LossTerm flatten_loss(const std::vector<PointLogits>& pls,
                      const std::vector<std::vector<SelectionResult>>& selections);

// Mean cross-entropy of logits [B, C'] against labels.
Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels);

struct LossBundle {
  LossWeights weights;
  Tensor block, selected, flatten, combiner;
  Tensor total;
  std::vector<Tensor> z, h, n;  // per-block diagnostics

  static double weighted_sum(const LossWeights& w, double block, double selected, double flatten,
                             double combiner);
};

// total = lambda_b L_b + lambda_s L_s + lambda_n L_n + lambda_c L_c, summed
// left to right. Undefined parts count as zero.
LossBundle total_loss(LossTerm block, LossTerm selected, LossTerm flatten, Tensor combiner,
                      const LossWeights& w);

}  // namespace pim
