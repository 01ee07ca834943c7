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
#include <string>
#include <vector>

#include "pim/rng.hpp"
#include "pim/tensor.hpp"

namespace pim {

struct NamedParameter {
  std::string name;
  Tensor tensor;
};

// Parameters in declaration order; the order is part of the checkpoint
// format.
class ParameterList {
 public:
  void add(std::string name, Tensor t) { items_.push_back({std::move(name), std::move(t)}); }
  void append(const ParameterList& other) {
    items_.insert(items_.end(), other.items_.begin(), other.items_.end());
  }
  const std::vector<NamedParameter>& items() const { return items_; }
  std::vector<Tensor> tensors() const;
  std::size_t total_size() const;

 private:
  std::vector<NamedParameter> items_;
};

// Uniform(-bound, bound) with bound = gain / sqrt(fan_in).
Tensor init_uniform(Shape shape, std::size_t fan_in, double gain, Rng& rng, DType dtype);

// y = x W^T + b with W [out, in].
struct Linear {
  Tensor weight, bias;

  Linear() = default;
  Linear(std::size_t in, std::size_t out, Rng& rng, DType dtype);
  Tensor operator()(const Tensor& x) const;
  std::size_t in_features() const { return weight.size(1); }
  std::size_t out_features() const { return weight.size(0); }
  void collect(ParameterList& out, const std::string& prefix) const;
};

struct Conv2d {
  Tensor weight, bias;
  std::size_t stride = 1, padding = 0;

  Conv2d() = default;
  Conv2d(std::size_t in, std::size_t out, std::size_t kernel, std::size_t stride,
         std::size_t padding, Rng& rng, DType dtype);
  Tensor operator()(const Tensor& x) const;
  void collect(ParameterList& out, const std::string& prefix) const;
};

}  // namespace pim
