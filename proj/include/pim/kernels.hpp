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

// Dense numeric kernels behind the differentiable ops.
//
// Two implementations of every heavy kernel live here:
//   serial::  direct nested loops, the reference the tests compare against;
//   omp::     im2col + row-parallel GEMM, used by the ops.
// omp:: kernels parallelize only over independent output rows and keep a
// fixed summation order inside each row, so results are identical for any
// thread count.

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstring>
#include <span>
#include <type_traits>
#include <utility>
#include <vector>

namespace pim::kernels {

struct Conv2dGeometry {
  std::size_t batch, in_channels, height, width;
  std::size_t out_channels, kernel_h, kernel_w;
  std::size_t stride, padding;

  std::size_t out_height() const { return (height + 2 * padding - kernel_h) / stride + 1; }
  std::size_t out_width() const { return (width + 2 * padding - kernel_w) / stride + 1; }
  std::size_t patch_size() const { return in_channels * kernel_h * kernel_w; }
};

namespace serial {

// c[m,n] = a[m,k] * b[k,n]
template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      T acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
}

template <class T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          T acc = bias.empty() ? T(0) : bias[co];
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long iy = long(oy * g.stride + ky) - long(g.padding);
                const long ix = long(ox * g.stride + kx) - long(g.padding);
                if (iy < 0 || ix < 0 || iy >= long(g.height) || ix >= long(g.width)) continue;
                acc += w[((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx] *
                       x[((n * g.in_channels + ci) * g.height + iy) * g.width + ix];
              }
          y[((n * g.out_channels + co) * ho + oy) * wo + ox] = acc;
        }
}

// Accumulates input, weight and bias gradients; any output span may be empty.
template <class T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                     std::span<T> dbias) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t n = 0; n < g.batch; ++n)
    for (std::size_t co = 0; co < g.out_channels; ++co)
      for (std::size_t oy = 0; oy < ho; ++oy)
        for (std::size_t ox = 0; ox < wo; ++ox) {
          const T gy = dy[((n * g.out_channels + co) * ho + oy) * wo + ox];
          if (!dbias.empty()) dbias[co] += gy;
          for (std::size_t ci = 0; ci < g.in_channels; ++ci)
            for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
              for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
                const long iy = long(oy * g.stride + ky) - long(g.padding);
                const long ix = long(ox * g.stride + kx) - long(g.padding);
                if (iy < 0 || ix < 0 || iy >= long(g.height) || ix >= long(g.width)) continue;
                const std::size_t xi = ((n * g.in_channels + ci) * g.height + iy) * g.width + ix;
                const std::size_t wi = ((co * g.in_channels + ci) * g.kernel_h + ky) * g.kernel_w + kx;
                if (!dw.empty()) dw[wi] += gy * x[xi];
                if (!dx.empty()) dx[xi] += gy * w[wi];
              }
        }
}

}  // namespace serial

namespace omp {

namespace detail {

inline constexpr std::size_t kRowTile = 4;

// One 64-byte SIMD vector of T (split by the compiler on narrower targets).
typedef float VecF [[gnu::vector_size(64)]];
typedef double VecD [[gnu::vector_size(64)]];
template <class T>
struct VecOf {
  typedef VecD type;
};
template <>
struct VecOf<float> {
  typedef VecF type;
};
template <class T>
using Vec = typename VecOf<T>::type;
template <class T>
inline constexpr std::size_t kLanes = 64 / sizeof(T);

template <class T>
inline Vec<T> load(const T* p) {
  Vec<T> v;
  std::memcpy(&v, p, sizeof v);
  return v;
}
template <class T>
inline void store(T* p, const Vec<T>& v) {
  std::memcpy(p, &v, sizeof v);
}

// Register tile of kRowTile rows by V vectors: rows i0.. of C (row stride
// ldc, starting at column pointer c) from B columns at b (row stride ldb),
// summed over all k.
template <int V, class T, class AAt>
[[gnu::always_inline]] inline void micro_tile(AAt& a_at, const T* b, std::size_t ldb, T* c, std::size_t ldc,
                       std::size_t i0, std::size_t k, bool accumulate) {
  constexpr std::size_t w = kLanes<T>;
  Vec<T> acc[kRowTile][V];
  for (std::size_t r = 0; r < kRowTile; ++r)
    for (int v = 0; v < V; ++v) acc[r][v] = accumulate ? load<T>(c + r * ldc + v * w) : Vec<T>{};
  for (std::size_t p = 0; p < k; ++p) {
    const T* brow = b + p * ldb;
    Vec<T> bv[V];
    for (int v = 0; v < V; ++v) bv[v] = load<T>(brow + v * w);
    for (std::size_t r = 0; r < kRowTile; ++r) {
      const T av = a_at(i0 + r, p);
      for (int v = 0; v < V; ++v) acc[r][v] += av * bv[v];
    }
  }
  for (std::size_t r = 0; r < kRowTile; ++r)
    for (int v = 0; v < V; ++v) store<T>(c + r * ldc + v * w, acc[r][v]);
}

// Shared body of gemm_nn / gemm_tn. a_at(i, p) reads A[i,p] of the logical
// [m,k] left operand. Every c[i,j] is (c[i,j] or 0) plus the products for
// p = 0..k-1 in ascending order, whatever path computes it. Columns past
// the last full vector go through a zero-padded copy of B.
template <class T, class AAt>
void gemm_blocked(AAt a_at, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
                  bool accumulate) {
  constexpr std::size_t w = kLanes<T>;
  const std::size_t body = n - n % w, tail = n - body;
  std::vector<T> btail(tail ? k * w : 0, T(0));
  for (std::size_t p = 0; tail && p < k; ++p)
    std::copy(b + p * n + body, b + p * n + n, btail.data() + p * w);
  const long tiles = long((m + kRowTile - 1) / kRowTile);
#pragma omp parallel for schedule(static)
  for (long tile = 0; tile < tiles; ++tile) {
    const std::size_t i0 = std::size_t(tile) * kRowTile;
    const std::size_t rows = std::min(kRowTile, m - i0);
    if (rows < kRowTile) {
      for (std::size_t r = 0; r < rows; ++r) {
        T* crow = c + (i0 + r) * n;
        if (!accumulate) std::fill(crow, crow + n, T(0));
        for (std::size_t p = 0; p < k; ++p) {
          const T av = a_at(i0 + r, p);
          const T* brow = b + p * n;
          for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
      }
      continue;
    }
    T* ctile = c + i0 * n;
    std::size_t j0 = 0;
    for (; j0 + 2 * w <= n; j0 += 2 * w) micro_tile<2>(a_at, b + j0, n, ctile + j0, n, i0, k, accumulate);
    if (j0 < body) micro_tile<1>(a_at, b + j0, n, ctile + j0, n, i0, k, accumulate), j0 += w;
    if (!tail) continue;
    T local[kRowTile * w] = {};
    for (std::size_t r = 0; r < kRowTile && accumulate; ++r)
      std::copy(ctile + r * n + body, ctile + r * n + n, local + r * w);
    micro_tile<1>(a_at, btail.data(), w, local, w, i0, k, accumulate);
    for (std::size_t r = 0; r < kRowTile; ++r)
      std::copy(local + r * w, local + r * w + tail, ctile + r * n + body);
  }
}

}  // namespace detail

// c[m,n] (+)= a[m,k] * b[k,n]
template <class T>
void gemm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  detail::gemm_blocked<T>([a, k](std::size_t i, std::size_t p) { return a[i * k + p]; }, b, c, m, k,
                          n, accumulate);
}

// c[m,n] (+)= a[k,m]^T * b[k,n]
template <class T>
void gemm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  detail::gemm_blocked<T>([a, m](std::size_t i, std::size_t p) { return a[p * m + i]; }, b, c, m, k,
                          n, accumulate);
}

template <class T>
void transpose(const T* a, T* out, std::size_t rows, std::size_t cols) {
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
}

// c[m,n] (+)= a[m,k] * b[n,k]^T
template <class T>
void gemm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n,
             bool accumulate) {
  std::vector<T> bt(k * n);
  transpose(b, bt.data(), n, k);
  gemm_nn(a, bt.data(), c, m, k, n, accumulate);
}

template <class T>
void matmul(std::span<const T> a, std::span<const T> b, std::span<T> c, std::size_t m,
            std::size_t k, std::size_t n) {
  gemm_nn(a.data(), b.data(), c.data(), m, k, n, false);
}

// Output columns [lo, hi) whose input column ox*stride + kx - padding lies
// inside [0, width).
inline std::pair<std::size_t, std::size_t> valid_columns(const Conv2dGeometry& g, std::size_t kx) {
  const long s = long(g.stride), off = long(kx) - long(g.padding);
  const long lo = off >= 0 ? 0 : (-off + s - 1) / s;
  const long last = long(g.width) - 1 - off;
  const long hi = last < 0 ? 0 : std::min(long(g.out_width()), last / s + 1);
  return {std::size_t(lo), std::size_t(std::max(lo, hi))};
}

// cols[patch, ho*wo] for one sample.
template <class T>
void im2col(const Conv2dGeometry& g, const T* x, T* cols) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
  for (std::size_t ci = 0; ci < g.in_channels; ++ci)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        T* row = cols + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * ho * wo;
        const T* plane = x + ci * g.height * g.width;
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = long(oy * g.stride + ky) - long(g.padding);
          T* out = row + oy * wo;
          if (iy < 0 || iy >= long(g.height)) {
            std::fill(out, out + wo, T(0));
            continue;
          }
          std::fill(out, out + lo, T(0));
          std::fill(out + hi, out + wo, T(0));
          const T* in = plane + iy * g.width + (lo * g.stride + kx - g.padding);
          for (std::size_t ox = lo; ox < hi; ++ox) out[ox] = in[(ox - lo) * g.stride];
        }
      }
}

// Scatter-add of cols back into one sample's input gradient. Parallel over
// input channels: every channel owns a disjoint slice of dx.
template <class T>
void col2im(const Conv2dGeometry& g, const T* cols, T* dx) {
  const std::size_t ho = g.out_height(), wo = g.out_width();
#pragma omp parallel for schedule(static)
  for (long ci = 0; ci < long(g.in_channels); ++ci)
    for (std::size_t ky = 0; ky < g.kernel_h; ++ky)
      for (std::size_t kx = 0; kx < g.kernel_w; ++kx) {
        const T* row = cols + ((ci * g.kernel_h + ky) * g.kernel_w + kx) * ho * wo;
        T* plane = dx + ci * g.height * g.width;
        const auto [lo, hi] = valid_columns(g, kx);
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const long iy = long(oy * g.stride + ky) - long(g.padding);
          if (iy < 0 || iy >= long(g.height)) continue;
          T* out = plane + iy * g.width + (lo * g.stride + kx - g.padding);
          const T* in = row + oy * wo;
          for (std::size_t ox = lo; ox < hi; ++ox) out[(ox - lo) * g.stride] += in[ox];
        }
      }
}

template <class T>
void conv2d_forward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                    std::span<const T> bias, std::span<T> y) {
  const std::size_t plane = g.out_height() * g.out_width();
  std::vector<T> cols(g.patch_size() * plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    im2col(g, x.data() + n * g.in_channels * g.height * g.width, cols.data());
    T* yn = y.data() + n * g.out_channels * plane;
    gemm_nn(w.data(), cols.data(), yn, g.out_channels, g.patch_size(), plane, false);
    if (!bias.empty())
      for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t p = 0; p < plane; ++p) yn[co * plane + p] += bias[co];
  }
}

template <class T>
void conv2d_backward(const Conv2dGeometry& g, std::span<const T> x, std::span<const T> w,
                     std::span<const T> dy, std::span<T> dx, std::span<T> dw,
                     std::span<T> dbias) {
  const std::size_t plane = g.out_height() * g.out_width();
  const std::size_t patch = g.patch_size();
  std::vector<T> cols(patch * plane), cols_t(dw.empty() ? 0 : patch * plane);
  for (std::size_t n = 0; n < g.batch; ++n) {
    const T* dyn = dy.data() + n * g.out_channels * plane;
    if (!dbias.empty())
      for (std::size_t co = 0; co < g.out_channels; ++co)
        for (std::size_t p = 0; p < plane; ++p) dbias[co] += dyn[co * plane + p];
    if (!dw.empty()) {
      im2col(g, x.data() + n * g.in_channels * g.height * g.width, cols.data());
      transpose(cols.data(), cols_t.data(), patch, plane);
      gemm_nn(dyn, cols_t.data(), dw.data(), g.out_channels, plane, patch, true);
    }
    if (!dx.empty()) {
      gemm_tn(w.data(), dyn, cols.data(), patch, g.out_channels, plane, false);
      col2im(g, cols.data(), dx.data() + n * g.in_channels * g.height * g.width);
    }
  }
}

}  // namespace omp

}  // namespace pim::kernels
