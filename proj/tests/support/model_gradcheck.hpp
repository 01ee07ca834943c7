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

// Finite-difference check of the full training loss against backward().
// Top-k selection is piecewise constant in the parameters: a probe whose
// +-h perturbation flips the selection straddles a kink where no derivative
// exists, so it is skipped and counted instead of compared.

#pragma once

#include <algorithm>
#include <cstddef>
#include <vector>

#include "pim/autograd.hpp"
#include "pim/model.hpp"
#include "support/gradcheck.hpp"

namespace pim::testing {

struct ModelGradcheck {
  double worst = 0.0;
  std::size_t checked = 0, skipped = 0;
};

inline std::vector<std::vector<std::size_t>> selection_signature(const ForwardResult& fr) {
  std::vector<std::vector<std::size_t>> sig;
  for (const auto& block : fr.selections)
    for (const auto& sr : block) sig.push_back(sr.selected_indices);
  return sig;
}

// Probes `probes` (parameter, element) pairs drawn uniformly from rng.
inline ModelGradcheck model_gradcheck(const PimModel& model, const Tensor& images,
                                      const std::vector<std::size_t>& labels, const LossWeights& w,
                                      std::size_t probes, Rng& rng, double h = 1e-5) {
  auto params = model.parameters().tensors();
  for (auto& p : params) p.clear_grad();
  const ForwardResult base = model.forward(images);
  const auto signature = selection_signature(base);
  backward(model.losses(base, labels, w).total);
  std::vector<std::vector<double>> analytic;
  for (auto& p : params) analytic.push_back(p.grad_values());
  for (auto& p : params) p.clear_grad();

  ModelGradcheck out;
  for (std::size_t n = 0; n < probes; ++n) {
    const std::size_t k = rng.below(params.size());
    const std::size_t i = rng.below(params[k].numel());
    bool stable = true;
    auto eval = [&] {
      NoGradGuard guard;
      const ForwardResult fr = model.forward(images);
      stable = stable && selection_signature(fr) == signature;
      return model.losses(fr, labels, w).total.item();
    };
    const double numeric = numeric_partial(params[k], i, eval, h);
    if (!stable) {
      ++out.skipped;
      continue;
    }
    ++out.checked;
    out.worst = std::max(out.worst, relative_error(analytic[k][i], numeric));
  }
  return out;
}

}  // namespace pim::testing
