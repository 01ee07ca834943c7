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

#include "pim/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "pim/kernels.hpp"

namespace pim::ops {

namespace {

[[noreturn]] void fail(const std::string& op, const std::string& what) {
  throw std::invalid_argument(op + ": " + what);
}

void require_rank(const char* op, const Tensor& t, std::size_t rank, const char* name) {
  if (t.dim() != rank) {
    fail(op, std::string(name) + " must have rank " + std::to_string(rank) + ", got shape " +
                 shape_str(t.shape()));
  }
}

void require_same_dtype(const char* op, const Tensor& a, const Tensor& b) {
  if (a.dtype() != b.dtype()) {
    fail(op, "dtype mismatch " + to_string(a.dtype()) + " vs " + to_string(b.dtype()));
  }
}

void require_same_shape(const char* op, const Tensor& a, const Tensor& b) {
  require_same_dtype(op, a, b);
  if (a.shape() != b.shape()) {
    fail(op, "shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
}

template <class T>
std::span<const T> out_grad(const detail::TensorImpl& out) {
  const auto& v = std::get<std::vector<T>>(out.grad);
  return {v.data(), v.size()};
}

// Gradient buffer of an input, or an empty span when it needs none.
template <class T>
std::span<T> in_grad(const Tensor& t) {
  if (!t.requires_grad()) return {};
  return grad_buffer<T>(const_cast<detail::TensorImpl&>(t.impl()));
}

template <class F>
void on_backward(Tensor& out, F&& f) {
  if (out.impl().grad_fn) out.impl().grad_fn->backward = std::forward<F>(f);
}

// Splits a shape around `axis` into (outer, axis extent, inner).
struct AxisSplit {
  std::size_t outer = 1, extent = 1, inner = 1;
};

AxisSplit split_axis(const char* op, const Shape& shape, std::size_t axis) {
  if (axis >= shape.size()) {
    fail(op, "axis " + std::to_string(axis) + " out of range for shape " + shape_str(shape));
  }
  AxisSplit s;
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  s.extent = shape[axis];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

Shape reduced_shape(const Shape& shape, std::size_t axis) {
  Shape out = shape;
  out.erase(out.begin() + static_cast<long>(axis));
  if (out.empty()) out.push_back(1);
  return out;
}

template <class Fwd, class Bwd>
Tensor unary(const char* op, const Tensor& x, Fwd fwd, Bwd bwd) {
  Tensor out = make_result(x.shape(), x.dtype(), op, {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < xs.size(); ++i) ys[i] = static_cast<T>(fwd(xs[i]));
  });
  on_backward(out, [x, bwd](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      auto xs = x.data<T>();
      const auto& ys = std::get<std::vector<T>>(o.data);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += static_cast<T>(bwd(xs[i], ys[i]) * go[i]);
    });
  });
  return out;
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_rank("matmul", a, 2, "lhs");
  require_rank("matmul", b, 2, "rhs");
  require_same_dtype("matmul", a, b);
  const std::size_t m = a.size(0), k = a.size(1), n = b.size(1);
  if (b.size(0) != k) {
    fail("matmul", "inner extents differ: " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  Tensor out = make_result({m, n}, a.dtype(), "matmul", {a, b});
  dispatch(a.dtype(), [&]<class T>() {
    kernels::omp::matmul<T>(a.data<T>(), b.data<T>(), out.data<T>(), m, k, n);
  });
  on_backward(out, [a, b, m, k, n](const detail::TensorImpl& o) {
    dispatch(a.dtype(), [&]<class T>() {
      auto go = out_grad<T>(o);
      if (auto ga = in_grad<T>(a); !ga.empty())
        kernels::omp::gemm_nt(go.data(), b.data<T>().data(), ga.data(), m, n, k, true);
      if (auto gb = in_grad<T>(b); !gb.empty())
        kernels::omp::gemm_tn(a.data<T>().data(), go.data(), gb.data(), k, m, n, true);
    });
  });
  return out;
}

Tensor transpose(const Tensor& a) {
  require_rank("transpose", a, 2, "input");
  const std::size_t m = a.size(0), n = a.size(1);
  Tensor out = make_result({n, m}, a.dtype(), "transpose", {a});
  dispatch(a.dtype(), [&]<class T>() {
    kernels::omp::transpose(a.data<T>().data(), out.data<T>().data(), m, n);
  });
  on_backward(out, [a, m, n](const detail::TensorImpl& o) {
    dispatch(a.dtype(), [&]<class T>() {
      auto ga = in_grad<T>(a);
      auto go = out_grad<T>(o);
      for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) ga[i * n + j] += go[j * m + i];
    });
  });
  return out;
}

Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias) {
  require_rank("linear", x, 2, "input");
  require_rank("linear", weight, 2, "weight");
  require_rank("linear", bias, 1, "bias");
  require_same_dtype("linear", x, weight);
  require_same_dtype("linear", x, bias);
  const std::size_t m = x.size(0), k = x.size(1), n = weight.size(0);
  if (weight.size(1) != k || bias.size(0) != n) {
    fail("linear", "input " + shape_str(x.shape()) + " does not match weight " +
                       shape_str(weight.shape()) + " and bias " + shape_str(bias.shape()));
  }
  Tensor out = make_result({m, n}, x.dtype(), "linear", {x, weight, bias});
  dispatch(x.dtype(), [&]<class T>() {
    auto ys = out.data<T>();
    kernels::omp::gemm_nt(x.data<T>().data(), weight.data<T>().data(), ys.data(), m, k, n, false);
    auto bs = bias.data<T>();
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) ys[i * n + j] += bs[j];
  });
  on_backward(out, [x, weight, bias, m, k, n](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto go = out_grad<T>(o);
      if (auto gx = in_grad<T>(x); !gx.empty())
        kernels::omp::gemm_nn(go.data(), weight.data<T>().data(), gx.data(), m, n, k, true);
      if (auto gw = in_grad<T>(weight); !gw.empty())
        kernels::omp::gemm_tn(go.data(), x.data<T>().data(), gw.data(), n, m, k, true);
      if (auto gb = in_grad<T>(bias); !gb.empty())
        for (std::size_t i = 0; i < m; ++i)
          for (std::size_t j = 0; j < n; ++j) gb[j] += go[i * n + j];
    });
  });
  return out;
}

Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding) {
  require_rank("conv2d", x, 4, "input");
  require_rank("conv2d", weight, 4, "weight");
  require_same_dtype("conv2d", x, weight);
  if (stride == 0) fail("conv2d", "stride must be positive");
  kernels::Conv2dGeometry g{x.size(0), x.size(1), x.size(2), x.size(3),
                            weight.size(0), weight.size(2), weight.size(3), stride, padding};
  if (weight.size(1) != g.in_channels) {
    fail("conv2d", "input " + shape_str(x.shape()) + " has " + std::to_string(g.in_channels) +
                       " channels but weight " + shape_str(weight.shape()) + " expects " +
                       std::to_string(weight.size(1)));
  }
  if (g.height + 2 * padding < g.kernel_h || g.width + 2 * padding < g.kernel_w) {
    fail("conv2d", "kernel " + shape_str(weight.shape()) + " larger than padded input " +
                       shape_str(x.shape()));
  }
  std::vector<Tensor> inputs{x, weight};
  if (bias.defined()) {
    require_rank("conv2d", bias, 1, "bias");
    require_same_dtype("conv2d", x, bias);
    if (bias.size(0) != g.out_channels) {
      fail("conv2d", "bias " + shape_str(bias.shape()) + " does not match weight " +
                         shape_str(weight.shape()));
    }
    inputs.push_back(bias);
  }
  Tensor out = make_result({g.batch, g.out_channels, g.out_height(), g.out_width()}, x.dtype(),
                           "conv2d", std::move(inputs));
  dispatch(x.dtype(), [&]<class T>() {
    std::span<const T> bs;
    if (bias.defined()) bs = bias.data<T>();
    kernels::omp::conv2d_forward<T>(g, x.data<T>(), weight.data<T>(), bs, out.data<T>());
  });
  on_backward(out, [x, weight, bias, g](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      std::span<T> gb;
      if (bias.defined()) gb = in_grad<T>(bias);
      kernels::omp::conv2d_backward<T>(g, x.data<T>(), weight.data<T>(), out_grad<T>(o),
                                       in_grad<T>(x), in_grad<T>(weight), gb);
    });
  });
  return out;
}

Tensor relu(const Tensor& x) {
  return unary("relu", x, [](auto v) { return v > 0 ? v : decltype(v)(0); },
               [](auto v, auto) { return v > 0 ? decltype(v)(1) : decltype(v)(0); });
}

Tensor log(const Tensor& x) {
  return unary("log", x, [](auto v) { return std::log(v); },
               [](auto v, auto) { return decltype(v)(1) / v; });
}

Tensor clamp(const Tensor& x, double lo, double hi) {
  if (!(lo <= hi)) fail("clamp", "lo > hi");
  return unary("clamp", x,
               [lo, hi](auto v) {
                 using T = decltype(v);
                 return std::clamp(v, static_cast<T>(lo), static_cast<T>(hi));
               },
               [lo, hi](auto v, auto) {
                 using T = decltype(v);
                 return (v >= static_cast<T>(lo) && v <= static_cast<T>(hi)) ? T(1) : T(0);
               });
}

Tensor scale(const Tensor& x, double factor) {
  return unary("scale", x, [factor](auto v) { return v * static_cast<decltype(v)>(factor); },
               [factor](auto v, auto) { return static_cast<decltype(v)>(factor); });
}

Tensor add_scalar(const Tensor& x, double value) {
  return unary("add_scalar", x, [value](auto v) { return v + static_cast<decltype(v)>(value); },
               [](auto v, auto) { return decltype(v)(1); });
}

namespace {

template <class Fwd, class Da, class Db>
Tensor binary(const char* op, const Tensor& a, const Tensor& b, Fwd fwd, Da da, Db db) {
  require_same_shape(op, a, b);
  Tensor out = make_result(a.shape(), a.dtype(), op, {a, b});
  dispatch(a.dtype(), [&]<class T>() {
    auto as = a.data<T>();
    auto bs = b.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < ys.size(); ++i) ys[i] = fwd(as[i], bs[i]);
  });
  on_backward(out, [a, b, da, db](const detail::TensorImpl& o) {
    dispatch(a.dtype(), [&]<class T>() {
      auto go = out_grad<T>(o);
      auto as = a.data<T>();
      auto bs = b.data<T>();
      if (auto ga = in_grad<T>(a); !ga.empty())
        for (std::size_t i = 0; i < ga.size(); ++i) ga[i] += da(as[i], bs[i]) * go[i];
      if (auto gb = in_grad<T>(b); !gb.empty())
        for (std::size_t i = 0; i < gb.size(); ++i) gb[i] += db(as[i], bs[i]) * go[i];
    });
  });
  return out;
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary("add", a, b, [](auto x, auto y) { return x + y; },
                [](auto x, auto) { return decltype(x)(1); },
                [](auto x, auto) { return decltype(x)(1); });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary("sub", a, b, [](auto x, auto y) { return x - y; },
                [](auto x, auto) { return decltype(x)(1); },
                [](auto x, auto) { return decltype(x)(-1); });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary("mul", a, b, [](auto x, auto y) { return x * y; },
                [](auto, auto y) { return y; }, [](auto x, auto) { return x; });
}

Tensor softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("softmax", x.shape(), axis);
  if (s.extent == 0) fail("softmax", "axis " + std::to_string(axis) + " has extent 0 in shape " + shape_str(x.shape()));
  Tensor out = make_result(x.shape(), x.dtype(), "softmax", {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xs[base + j * s.inner]);
        T total = 0;
        for (std::size_t j = 0; j < s.extent; ++j) {
          const T e = std::exp(xs[base + j * s.inner] - mx);
          ys[base + j * s.inner] = e;
          total += e;
        }
        for (std::size_t j = 0; j < s.extent; ++j) ys[base + j * s.inner] /= total;
      }
  });
  on_backward(out, [x, s](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      const auto& ys = std::get<std::vector<T>>(o.data);
      for (std::size_t a = 0; a < s.outer; ++a)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = a * s.extent * s.inner + in;
          T dot = 0;
          for (std::size_t j = 0; j < s.extent; ++j) dot += go[base + j * s.inner] * ys[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t i = base + j * s.inner;
            gx[i] += ys[i] * (go[i] - dot);
          }
        }
    });
  });
  return out;
}

Tensor log_softmax(const Tensor& x, std::size_t axis) {
  const AxisSplit s = split_axis("log_softmax", x.shape(), axis);
  if (s.extent == 0) fail("log_softmax", "axis " + std::to_string(axis) + " has extent 0 in shape " + shape_str(x.shape()));
  Tensor out = make_result(x.shape(), x.dtype(), "log_softmax", {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        const std::size_t base = o * s.extent * s.inner + in;
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < s.extent; ++j) mx = std::max(mx, xs[base + j * s.inner]);
        T total = 0;
        for (std::size_t j = 0; j < s.extent; ++j) total += std::exp(xs[base + j * s.inner] - mx);
        const T lse = mx + std::log(total);
        for (std::size_t j = 0; j < s.extent; ++j) ys[base + j * s.inner] = xs[base + j * s.inner] - lse;
      }
  });
  on_backward(out, [x, s](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      const auto& ys = std::get<std::vector<T>>(o.data);
      for (std::size_t a = 0; a < s.outer; ++a)
        for (std::size_t in = 0; in < s.inner; ++in) {
          const std::size_t base = a * s.extent * s.inner + in;
          T total = 0;
          for (std::size_t j = 0; j < s.extent; ++j) total += go[base + j * s.inner];
          for (std::size_t j = 0; j < s.extent; ++j) {
            const std::size_t i = base + j * s.inner;
            gx[i] += go[i] - std::exp(ys[i]) * total;
          }
        }
    });
  });
  return out;
}

namespace {

Tensor reduce_axis(const char* op, const Tensor& x, std::size_t axis, bool average) {
  const AxisSplit s = split_axis(op, x.shape(), axis);
  if (average && s.extent == 0) fail(op, "cannot average over axis of extent 0 in " + shape_str(x.shape()));
  Tensor out = make_result(reduced_shape(x.shape(), axis), x.dtype(), op, {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t o = 0; o < s.outer; ++o)
      for (std::size_t in = 0; in < s.inner; ++in) {
        T acc = 0;
        for (std::size_t j = 0; j < s.extent; ++j) acc += xs[(o * s.extent + j) * s.inner + in];
        ys[o * s.inner + in] = average ? acc / static_cast<T>(s.extent) : acc;
      }
  });
  on_backward(out, [x, s, average](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      const T factor = average ? T(1) / static_cast<T>(s.extent) : T(1);
      for (std::size_t a = 0; a < s.outer; ++a)
        for (std::size_t j = 0; j < s.extent; ++j)
          for (std::size_t in = 0; in < s.inner; ++in)
            gx[(a * s.extent + j) * s.inner + in] += go[a * s.inner + in] * factor;
    });
  });
  return out;
}

}  // namespace

Tensor sum(const Tensor& x, std::size_t axis) { return reduce_axis("sum", x, axis, false); }
Tensor mean(const Tensor& x, std::size_t axis) { return reduce_axis("mean", x, axis, true); }

Tensor sum_all(const Tensor& x) { return reduce_axis("sum_all", reshape(x, {x.numel()}), 0, false); }
Tensor mean_all(const Tensor& x) { return reduce_axis("mean_all", reshape(x, {x.numel()}), 0, true); }

Tensor upsample2x_nearest(const Tensor& x) {
  require_rank("upsample2x_nearest", x, 4, "input");
  const std::size_t b = x.size(0), c = x.size(1), h = x.size(2), w = x.size(3);
  Tensor out = make_result({b, c, 2 * h, 2 * w}, x.dtype(), "upsample2x_nearest", {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t p = 0; p < b * c; ++p)
      for (std::size_t yy = 0; yy < 2 * h; ++yy)
        for (std::size_t xx = 0; xx < 2 * w; ++xx)
          ys[(p * 2 * h + yy) * 2 * w + xx] = xs[(p * h + yy / 2) * w + xx / 2];
  });
  on_backward(out, [x, b, c, h, w](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      for (std::size_t p = 0; p < b * c; ++p)
        for (std::size_t yy = 0; yy < 2 * h; ++yy)
          for (std::size_t xx = 0; xx < 2 * w; ++xx)
            gx[(p * h + yy / 2) * w + xx / 2] += go[(p * 2 * h + yy) * 2 * w + xx];
    });
  });
  return out;
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) fail("concat", "no inputs");
  const Shape& first = parts.front().shape();
  if (axis >= first.size()) fail("concat", "axis " + std::to_string(axis) + " out of range for shape " + shape_str(first));
  Shape shape = first;
  shape[axis] = 0;
  for (const auto& p : parts) {
    require_same_dtype("concat", parts.front(), p);
    bool ok = p.dim() == first.size();
    for (std::size_t i = 0; ok && i < first.size(); ++i) ok = i == axis || p.shape()[i] == first[i];
    if (!ok) fail("concat", "shape mismatch " + shape_str(first) + " vs " + shape_str(p.shape()));
    shape[axis] += p.shape()[axis];
  }
  const AxisSplit s = split_axis("concat", shape, axis);
  Tensor out = make_result(shape, parts.front().dtype(), "concat", parts);
  dispatch(out.dtype(), [&]<class T>() {
    auto ys = out.data<T>();
    std::size_t offset = 0;
    for (const auto& p : parts) {
      auto xs = p.data<T>();
      const std::size_t len = p.shape()[axis] * s.inner;
      for (std::size_t o = 0; o < s.outer; ++o)
        std::copy_n(xs.begin() + o * len, len, ys.begin() + o * s.extent * s.inner + offset);
      offset += len;
    }
  });
  on_backward(out, [parts, axis, s](const detail::TensorImpl& o) {
    dispatch(parts.front().dtype(), [&]<class T>() {
      auto go = out_grad<T>(o);
      std::size_t offset = 0;
      for (const auto& p : parts) {
        const std::size_t len = p.shape()[axis] * s.inner;
        if (auto gp = in_grad<T>(p); !gp.empty())
          for (std::size_t a = 0; a < s.outer; ++a)
            for (std::size_t i = 0; i < len; ++i) gp[a * len + i] += go[a * s.extent * s.inner + offset + i];
        offset += len;
      }
    });
  });
  return out;
}

Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices) {
  require_rank("gather_rows", x, 2, "input");
  const std::size_t m = x.size(0), n = x.size(1);
  for (auto i : indices)
    if (i >= m) fail("gather_rows", "row index " + std::to_string(i) + " out of range for shape " + shape_str(x.shape()));
  Tensor out = make_result({indices.size(), n}, x.dtype(), "gather_rows", {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t r = 0; r < indices.size(); ++r)
      std::copy_n(xs.begin() + indices[r] * n, n, ys.begin() + r * n);
  });
  on_backward(out, [x, indices, n](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      for (std::size_t r = 0; r < indices.size(); ++r)
        for (std::size_t j = 0; j < n; ++j) gx[indices[r] * n + j] += go[r * n + j];
    });
  });
  return out;
}

Tensor pick(const Tensor& x, const std::vector<std::size_t>& cols) {
  require_rank("pick", x, 2, "input");
  const std::size_t m = x.size(0), n = x.size(1);
  if (cols.size() != m) fail("pick", std::to_string(cols.size()) + " columns for shape " + shape_str(x.shape()));
  for (auto c : cols)
    if (c >= n) fail("pick", "column " + std::to_string(c) + " out of range for shape " + shape_str(x.shape()));
  Tensor out = make_result({m}, x.dtype(), "pick", {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < m; ++i) ys[i] = xs[i * n + cols[i]];
  });
  on_backward(out, [x, cols, n](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      for (std::size_t i = 0; i < cols.size(); ++i) gx[i * n + cols[i]] += go[i];
    });
  });
  return out;
}

Tensor reshape(const Tensor& x, Shape shape) {
  if (numel_of(shape) != x.numel()) {
    fail("reshape", "cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
  }
  Tensor out = make_result(std::move(shape), x.dtype(), "reshape", {x});
  out.impl().data = x.impl().data;
  on_backward(out, [x](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      for (std::size_t i = 0; i < gx.size(); ++i) gx[i] += go[i];
    });
  });
  return out;
}

Tensor to_points(const Tensor& x) {
  require_rank("to_points", x, 4, "input");
  const std::size_t b = x.size(0), c = x.size(1), hw = x.size(2) * x.size(3);
  Tensor out = make_result({b * hw, c}, x.dtype(), "to_points", {x});
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t n = 0; n < b; ++n)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) ys[(n * hw + p) * c + ch] = xs[(n * c + ch) * hw + p];
  });
  on_backward(out, [x, b, c, hw](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      for (std::size_t n = 0; n < b; ++n)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < hw; ++p) gx[(n * c + ch) * hw + p] += go[(n * hw + p) * c + ch];
    });
  });
  return out;
}

Tensor from_points(const Tensor& rows, std::size_t batch, std::size_t height, std::size_t width) {
  require_rank("from_points", rows, 2, "input");
  const std::size_t hw = height * width, c = rows.size(1);
  if (rows.size(0) != batch * hw) {
    fail("from_points", "rows " + shape_str(rows.shape()) + " do not match batch " +
                            std::to_string(batch) + " of " + std::to_string(height) + "x" + std::to_string(width));
  }
  Tensor out = make_result({batch, c, height, width}, rows.dtype(), "from_points", {rows});
  dispatch(rows.dtype(), [&]<class T>() {
    auto xs = rows.data<T>();
    auto ys = out.data<T>();
    for (std::size_t n = 0; n < batch; ++n)
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t p = 0; p < hw; ++p) ys[(n * c + ch) * hw + p] = xs[(n * hw + p) * c + ch];
  });
  on_backward(out, [rows, batch, c, hw](const detail::TensorImpl& o) {
    dispatch(rows.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(rows);
      auto go = out_grad<T>(o);
      for (std::size_t n = 0; n < batch; ++n)
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t p = 0; p < hw; ++p) gx[(n * hw + p) * c + ch] += go[(n * c + ch) * hw + p];
    });
  });
  return out;
}

Tensor l2_normalize_rows(const Tensor& x, double eps) {
  require_rank("l2_normalize_rows", x, 2, "input");
  const std::size_t m = x.size(0), n = x.size(1);
  Tensor out = make_result(x.shape(), x.dtype(), "l2_normalize_rows", {x});
  auto norms = std::make_shared<std::vector<double>>(m);
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < m; ++i) {
      T sq = 0;
      for (std::size_t j = 0; j < n; ++j) sq += xs[i * n + j] * xs[i * n + j];
      const T denom = std::max(std::sqrt(sq), static_cast<T>(eps));
      (*norms)[i] = static_cast<double>(denom);
      for (std::size_t j = 0; j < n; ++j) ys[i * n + j] = xs[i * n + j] / denom;
    }
  });
  on_backward(out, [x, norms, m, n, eps](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      const auto& ys = std::get<std::vector<T>>(o.data);
      for (std::size_t i = 0; i < m; ++i) {
        const T denom = static_cast<T>((*norms)[i]);
        const bool clipped = denom <= static_cast<T>(eps);
        T dot = 0;
        if (!clipped)
          for (std::size_t j = 0; j < n; ++j) dot += ys[i * n + j] * go[i * n + j];
        for (std::size_t j = 0; j < n; ++j)
          gx[i * n + j] += (go[i * n + j] - ys[i * n + j] * dot) / denom;
      }
    });
  });
  return out;
}

Tensor normalize_rows_sum(const Tensor& x) {
  require_rank("normalize_rows_sum", x, 2, "input");
  const std::size_t m = x.size(0), n = x.size(1);
  Tensor out = make_result(x.shape(), x.dtype(), "normalize_rows_sum", {x});
  auto sums = std::make_shared<std::vector<double>>(m);
  dispatch(x.dtype(), [&]<class T>() {
    auto xs = x.data<T>();
    auto ys = out.data<T>();
    for (std::size_t i = 0; i < m; ++i) {
      T total = 0;
      for (std::size_t j = 0; j < n; ++j) total += xs[i * n + j];
      // NaN passes through so a diverged model reaches the loss check.
      if (total < 0) fail("normalize_rows_sum", "row " + std::to_string(i) + " has negative sum");
      (*sums)[i] = static_cast<double>(total);
      for (std::size_t j = 0; j < n; ++j) ys[i * n + j] = total == 0 ? T(0) : xs[i * n + j] / total;
    }
  });
  on_backward(out, [x, sums, m, n](const detail::TensorImpl& o) {
    dispatch(x.dtype(), [&]<class T>() {
      auto gx = in_grad<T>(x);
      auto go = out_grad<T>(o);
      const auto& ys = std::get<std::vector<T>>(o.data);
      for (std::size_t i = 0; i < m; ++i) {
        const T total = static_cast<T>((*sums)[i]);
        if (total == 0) continue;
        T dot = 0;
        for (std::size_t j = 0; j < n; ++j) dot += ys[i * n + j] * go[i * n + j];
        for (std::size_t j = 0; j < n; ++j) gx[i * n + j] += (go[i * n + j] - dot) / total;
      }
    });
  });
  return out;
}

}  // namespace pim::ops
