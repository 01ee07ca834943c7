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

#pragma once

#include <cstddef>
#include <vector>

#include "pim/tensor.hpp"

namespace pim {

struct OptimizerConfig {
  double learning_rate = 0.0005;
  double weight_decay = 0.0005;
  double momentum = 0.9;
};

// SGD with momentum, decoupled weight decay and cosine learning-rate decay
// over `total_steps`.
struct OptimizerState {
  OptimizerConfig config;
  std::size_t step_index = 0;
  std::size_t total_steps = 1;
  std::vector<std::vector<double>> velocity;  // one buffer per parameter

  OptimizerState() = default;
  OptimizerState(OptimizerConfig cfg, std::size_t total) : config(cfg), total_steps(total) {}

  // lr_base * 0.5 * (1 + cos(pi * t / total_steps)), t clamped to total_steps.
  double learning_rate_at(std::size_t step) const;
  double current_learning_rate() const { return learning_rate_at(step_index); }
};

// v <- momentum * v + g;  w <- w - lr_t * v - lr_t * weight_decay * w.
// Consumes and clears the gradients. Parameters no gradient reached are
// treated as having a zero gradient; throws std::logic_error when none of
// the parameters has a gradient (no backward since the last step).
void sgd_step(OptimizerState& state, std::vector<Tensor>& params);

}  // namespace pim
