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

#include "pim/layers.hpp"

#include <cmath>

#include "pim/ops.hpp"

namespace pim {

std::vector<Tensor> ParameterList::tensors() const {
  std::vector<Tensor> out;
  out.reserve(items_.size());
  for (const auto& p : items_) out.push_back(p.tensor);
  return out;
}

std::size_t ParameterList::total_size() const {
  std::size_t n = 0;
  for (const auto& p : items_) n += p.tensor.numel();
  return n;
}

Tensor init_uniform(Shape shape, std::size_t fan_in, double gain, Rng& rng, DType dtype) {
  const double bound = gain / std::sqrt(static_cast<double>(fan_in));
  std::vector<double> values(numel_of(shape));
  for (auto& v : values) v = rng.uniform(-bound, bound);
  return Tensor::from(values, std::move(shape), dtype, true);
}

// He-style gain for layers feeding a ReLU; the same fan-in scaling bounds
// the bias.
constexpr double kReluGain = 2.449489742783178;  // sqrt(6)

Linear::Linear(std::size_t in, std::size_t out, Rng& rng, DType dtype)
    : weight(init_uniform({out, in}, in, 1.0, rng, dtype)),
      bias(init_uniform({out}, in, 1.0, rng, dtype)) {}

Tensor Linear::operator()(const Tensor& x) const { return ops::linear(x, weight, bias); }

void Linear::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

Conv2d::Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride_,
               std::size_t padding_, Rng& rng, DType dtype)
    : weight(init_uniform({out, in, kernel, kernel}, in * kernel * kernel, kReluGain, rng, dtype)),
      bias(Tensor::zeros({out}, dtype, true)),
      stride(stride_),
      padding(padding_) {}

Tensor Conv2d::operator()(const Tensor& x) const {
  return ops::conv2d(x, weight, bias, stride, padding);
}

void Conv2d::collect(ParameterList& out, const std::string& prefix) const {
  out.add(prefix + ".weight", weight);
  out.add(prefix + ".bias", bias);
}

}  // namespace pim
