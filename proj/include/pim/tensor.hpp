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
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

namespace pim {

// Storage precision. f64 is the test mode used by every finite-difference
// check; f32 is the training mode.
enum class DType { f32, f64 };

std::string to_string(DType dtype);
DType parse_dtype(const std::string& name);

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_str(const Shape& shape);

// Calls f.template operator()<T>() with T = float or double.
template <class F>
decltype(auto) dispatch(DType dtype, F&& f) {
  if (dtype == DType::f32) return f.template operator()<float>();
  return f.template operator()<double>();
}

class Tensor;

namespace detail {

using Buffer = std::variant<std::vector<float>, std::vector<double>>;

struct TensorImpl;

// Backward closure of the op that produced a tensor. It reads the output's
// gradient and accumulates into the inputs' gradients. It must not capture
// the output tensor itself (that would form a reference cycle); the output
// is passed in instead.
struct GradFn {
  std::string op;
  std::vector<Tensor> inputs;
  std::function<void(const TensorImpl& out)> backward;
};

struct TensorImpl {
  Shape shape;
  Buffer data;
  Buffer grad;  // empty vector until a gradient has been written
  bool requires_grad = false;
  std::shared_ptr<GradFn> grad_fn;
};

}  // namespace detail

// Handle to an n-dimensional real array that participates in reverse-mode
// differentiation. Copies share storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, DType dtype, bool requires_grad = false);
  static Tensor full(Shape shape, double value, DType dtype,
                     bool requires_grad = false);
  static Tensor from(const std::vector<double>& values, Shape shape,
                     DType dtype = DType::f64, bool requires_grad = false);
  static Tensor scalar(double value, DType dtype = DType::f64);
  static Tensor eye(std::size_t n, DType dtype);

  bool defined() const { return impl_ != nullptr; }
  const Shape& shape() const;
  std::size_t dim() const { return shape().size(); }
  std::size_t size(std::size_t axis) const;
  std::size_t numel() const;
  DType dtype() const;

  template <class T>
  std::span<T> data();
  template <class T>
  std::span<const T> data() const;

  double item() const;
  double at(std::size_t flat_index) const;
  void set(std::size_t flat_index, double value);
  std::vector<double> values() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool is_leaf() const;

  // Gradient after backward(); zeros when nothing reached this tensor.
  bool has_grad() const;
  std::vector<double> grad_values() const;
  template <class T>
  std::span<T> grad();
  void zero_grad();
  void clear_grad();

  // Copy of the values with no tape history.
  Tensor detach() const;
  Tensor to(DType dtype) const;
  std::string op_name() const;

  detail::TensorImpl& impl() { return *impl_; }
  const detail::TensorImpl& impl() const { return *impl_; }
  const std::shared_ptr<detail::TensorImpl>& handle() const { return impl_; }

 private:
  explicit Tensor(std::shared_ptr<detail::TensorImpl> impl)
      : impl_(std::move(impl)) {}
  friend Tensor make_result(Shape, DType, const char*, std::vector<Tensor>);

  std::shared_ptr<detail::TensorImpl> impl_;
};

// True while operations are being recorded on the tape.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

// Allocates the output of an op. When recording is on and any input needs a
// gradient, the result carries a GradFn for `op` over `inputs`; the caller
// fills in GradFn::backward.
Tensor make_result(Shape shape, DType dtype, const char* op,
                   std::vector<Tensor> inputs);

// Allocates (zeroed) and returns the gradient buffer of an impl.
template <class T>
std::span<T> grad_buffer(detail::TensorImpl& impl);

// ---- template definitions ------------------------------------------------

template <class T>
std::span<T> Tensor::data() {
  auto* v = std::get_if<std::vector<T>>(&impl_->data);
  if (v == nullptr) throw std::logic_error("Tensor::data: dtype mismatch");
  return {v->data(), v->size()};
}

template <class T>
std::span<const T> Tensor::data() const {
  const auto* v = std::get_if<std::vector<T>>(&impl_->data);
  if (v == nullptr) throw std::logic_error("Tensor::data: dtype mismatch");
  return {v->data(), v->size()};
}

template <class T>
std::span<T> grad_buffer(detail::TensorImpl& impl) {
  auto* v = std::get_if<std::vector<T>>(&impl.grad);
  if (v == nullptr) {
    impl.grad = std::vector<T>();
    v = std::get_if<std::vector<T>>(&impl.grad);
  }
  if (v->size() != numel_of(impl.shape)) v->assign(numel_of(impl.shape), T(0));
  return {v->data(), v->size()};
}

template <class T>
std::span<T> Tensor::grad() {
  return grad_buffer<T>(*impl_);
}

}  // namespace pim
