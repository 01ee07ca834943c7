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

#include "pim/tensor.hpp"

#include <algorithm>
#include <sstream>

namespace pim {

namespace {
thread_local bool g_grad_enabled = true;

detail::Buffer make_buffer(DType dtype, std::size_t n, double value) {
  if (dtype == DType::f32) return std::vector<float>(n, static_cast<float>(value));
  return std::vector<double>(n, value);
}
}  // namespace

std::string to_string(DType dtype) { return dtype == DType::f32 ? "f32" : "f64"; }

DType parse_dtype(const std::string& name) {
  if (name == "f32") return DType::f32;
  if (name == "f64") return DType::f64;
  throw std::invalid_argument("unknown precision '" + name + "' (expected f32 or f64)");
}

std::size_t numel_of(const Shape& shape) {
  std::size_t n = 1;
  for (auto e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ']';
  return os.str();
}

Tensor Tensor::zeros(Shape shape, DType dtype, bool requires_grad) {
  return full(std::move(shape), 0.0, dtype, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, DType dtype, bool requires_grad) {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->data = make_buffer(dtype, numel_of(shape), value);
  impl->grad = make_buffer(dtype, 0, 0.0);
  impl->shape = std::move(shape);
  impl->requires_grad = requires_grad;
  return Tensor(std::move(impl));
}

Tensor Tensor::from(const std::vector<double>& values, Shape shape, DType dtype,
                    bool requires_grad) {
  if (numel_of(shape) != values.size()) {
    throw std::invalid_argument("Tensor::from: " + std::to_string(values.size()) +
                                " values do not fill shape " + shape_str(shape));
  }
  Tensor t = zeros(std::move(shape), dtype, requires_grad);
  dispatch(dtype, [&]<class T>() {
    std::ranges::transform(values, t.data<T>().begin(),
                           [](double v) { return static_cast<T>(v); });
  });
  return t;
}

Tensor Tensor::scalar(double value, DType dtype) { return full({1}, value, dtype); }

Tensor Tensor::eye(std::size_t n, DType dtype) {
  Tensor t = zeros({n, n}, dtype);
  for (std::size_t i = 0; i < n; ++i) t.set(i * n + i, 1.0);
  return t;
}

const Shape& Tensor::shape() const { return impl_->shape; }

std::size_t Tensor::size(std::size_t axis) const {
  if (axis >= impl_->shape.size()) {
    throw std::out_of_range("Tensor::size: axis " + std::to_string(axis) +
                            " out of range for shape " + shape_str(impl_->shape));
  }
  return impl_->shape[axis];
}

std::size_t Tensor::numel() const { return numel_of(impl_->shape); }

DType Tensor::dtype() const {
  return std::holds_alternative<std::vector<float>>(impl_->data) ? DType::f32 : DType::f64;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw std::invalid_argument("Tensor::item: tensor of shape " + shape_str(shape()) +
                                " is not a scalar");
  }
  return at(0);
}

double Tensor::at(std::size_t i) const {
  return std::visit([i](const auto& v) { return static_cast<double>(v.at(i)); }, impl_->data);
}

void Tensor::set(std::size_t i, double value) {
  std::visit([&](auto& v) { v.at(i) = static_cast<typename std::decay_t<decltype(v)>::value_type>(value); },
             impl_->data);
}

std::vector<double> Tensor::values() const {
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    impl_->data);
}

bool Tensor::requires_grad() const { return impl_->requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw std::logic_error("set_requires_grad: only leaf tensors");
  impl_->requires_grad = flag;
}

bool Tensor::is_leaf() const { return impl_->grad_fn == nullptr; }

bool Tensor::has_grad() const {
  return std::visit([](const auto& v) { return !v.empty(); }, impl_->grad);
}

std::vector<double> Tensor::grad_values() const {
  if (!has_grad()) return std::vector<double>(numel(), 0.0);
  return std::visit([](const auto& v) { return std::vector<double>(v.begin(), v.end()); },
                    impl_->grad);
}

void Tensor::zero_grad() {
  dispatch(dtype(), [&]<class T>() { std::ranges::fill(grad<T>(), T(0)); });
}

void Tensor::clear_grad() {
  std::visit([](auto& v) { v.clear(); }, impl_->grad);
}

Tensor Tensor::detach() const {
  auto impl = std::make_shared<detail::TensorImpl>();
  impl->shape = impl_->shape;
  impl->data = impl_->data;
  impl->grad = make_buffer(dtype(), 0, 0.0);
  return Tensor(std::move(impl));
}

Tensor Tensor::to(DType target) const {
  if (target == dtype()) return detach();
  Tensor out = zeros(shape(), target);
  dispatch(target, [&]<class T>() {
    auto dst = out.data<T>();
    std::visit([&](const auto& src) {
      for (std::size_t i = 0; i < src.size(); ++i) dst[i] = static_cast<T>(src[i]);
    }, impl_->data);
  });
  return out;
}

std::string Tensor::op_name() const { return impl_->grad_fn ? impl_->grad_fn->op : "leaf"; }

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

Tensor make_result(Shape shape, DType dtype, const char* op, std::vector<Tensor> inputs) {
  Tensor out = Tensor::zeros(std::move(shape), dtype);
  if (!g_grad_enabled) return out;
  const bool needs = std::ranges::any_of(inputs, [](const Tensor& t) { return t.requires_grad(); });
  if (!needs) return out;
  out.impl_->requires_grad = true;
  out.impl_->grad_fn = std::make_shared<detail::GradFn>();
  out.impl_->grad_fn->op = op;
  out.impl_->grad_fn->inputs = std::move(inputs);
  return out;
}

}  // namespace pim
