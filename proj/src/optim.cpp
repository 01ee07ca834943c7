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

#include "pim/optim.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

namespace pim {

double OptimizerState::learning_rate_at(std::size_t step) const {
  const double t = static_cast<double>(std::min(step, total_steps));
  const double total = static_cast<double>(std::max<std::size_t>(total_steps, 1));
  return config.learning_rate * 0.5 * (1.0 + std::cos(std::numbers::pi * t / total));
}

void sgd_step(OptimizerState& state, std::vector<Tensor>& params) {
  if (std::ranges::none_of(params, [](const Tensor& p) { return p.has_grad(); })) {
    throw std::logic_error("sgd_step: no parameter has a gradient; call backward() first");
  }
  if (state.velocity.size() != params.size()) {
    if (!state.velocity.empty()) throw std::logic_error("sgd_step: parameter list changed between steps");
    for (const auto& p : params) state.velocity.emplace_back(p.numel(), 0.0);
  }
  const double lr = state.current_learning_rate();
  const double mu = state.config.momentum;
  const double decay = state.config.weight_decay;
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = params[i];
    auto& v = state.velocity[i];
    dispatch(p.dtype(), [&]<class T>() {
      auto w = p.data<T>();
      if (p.has_grad()) {
        auto g = p.grad<T>();
        for (std::size_t j = 0; j < w.size(); ++j) v[j] = mu * v[j] + static_cast<double>(g[j]);
      } else {
        for (auto& vj : v) vj *= mu;
      }
      for (std::size_t j = 0; j < w.size(); ++j) {
        const double wj = static_cast<double>(w[j]);
        w[j] = static_cast<T>(wj - lr * v[j] - lr * decay * wj);
      }
    });
    p.clear_grad();
  }
  ++state.step_index;
}

}  // namespace pim
