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

#include <vector>

#include "pim/tensor.hpp"

namespace pim {

// Reverse-mode pass from a scalar loss. Orders the recorded graph
// topologically, seeds d(loss)/d(loss) = 1 and runs every GradFn once in
// reverse order. Leaf gradients accumulate across calls; interior gradients
// are rebuilt each call. Throws std::invalid_argument for a non-scalar loss.
void backward(const Tensor& loss);

// Nodes reachable from `root`, inputs before consumers.
std::vector<Tensor> topological_order(const Tensor& root);

}  // namespace pim
