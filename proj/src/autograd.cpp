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

#include "pim/autograd.hpp"

#include <ranges>
#include <unordered_set>
#include <utility>

namespace pim {

std::vector<Tensor> topological_order(const Tensor& root) {
  std::vector<Tensor> order;
  std::unordered_set<const detail::TensorImpl*> visited;
  // Iterative post-order DFS; the bool marks "children already pushed".
  std::vector<std::pair<Tensor, bool>> stack{{root, false}};
  while (!stack.empty()) {
    auto [node, expanded] = stack.back();
    stack.pop_back();
    if (expanded) {
      order.push_back(node);
      continue;
    }
    if (!visited.insert(&node.impl()).second) continue;
    stack.emplace_back(node, true);
    if (const auto& fn = node.impl().grad_fn) {
      for (const auto& input : fn->inputs | std::views::reverse)
        if (input.requires_grad() && !visited.contains(&input.impl())) stack.emplace_back(input, false);
    }
  }
  return order;
}

void backward(const Tensor& loss) {
  if (loss.numel() != 1) {
    throw std::invalid_argument("backward: loss must be a scalar, got shape " +
                                shape_str(loss.shape()));
  }
  if (!loss.requires_grad()) return;
  const std::vector<Tensor> order = topological_order(loss);
  for (auto node : order) {
    if (!node.is_leaf()) node.clear_grad();
    dispatch(node.dtype(), [&]<class T>() { grad_buffer<T>(node.impl()); });
  }
  Tensor seed = loss;
  dispatch(seed.dtype(), [&]<class T>() { seed.grad<T>()[0] += T(1); });
  for (const auto& node : order | std::views::reverse) {
    const auto& fn = node.impl().grad_fn;
    if (fn && fn->backward) fn->backward(node.impl());
  }
}

}  // namespace pim
