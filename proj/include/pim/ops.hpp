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

// Differentiable operations. There is no implicit broadcasting: every op
// states its shape rule and throws std::invalid_argument naming the op and
// the offending shapes when operands do not conform. Operands of one op
// must share a dtype.

#pragma once

#include <cstddef>
#include <vector>

#include "pim/tensor.hpp"

namespace pim::ops {

// a[m,k] x b[k,n] -> [m,n]
Tensor matmul(const Tensor& a, const Tensor& b);

// a[m,n] -> [n,m]
Tensor transpose(const Tensor& a);

// x[m,k], weight[n,k], bias[n] -> x * weight^T + bias, [m,n]
Tensor linear(const Tensor& x, const Tensor& weight, const Tensor& bias);

// x[B,Ci,H,W], weight[Co,Ci,kh,kw], bias[Co] -> [B,Co,Ho,Wo] with
// Ho = (H + 2*padding - kh) / stride + 1. Pass an undefined bias for none.
Tensor conv2d(const Tensor& x, const Tensor& weight, const Tensor& bias, std::size_t stride,
              std::size_t padding);

// Elementwise, any shape.
Tensor relu(const Tensor& x);
Tensor log(const Tensor& x);
Tensor clamp(const Tensor& x, double lo, double hi);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);

// Elementwise over two tensors of identical shape.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);

// Softmax along `axis`; the output has the input's shape. An axis of extent
// 0 is an error.
Tensor softmax(const Tensor& x, std::size_t axis);
Tensor log_softmax(const Tensor& x, std::size_t axis);

// Reductions that remove `axis`; a rank-1 input reduces to shape [1].
Tensor sum(const Tensor& x, std::size_t axis);
Tensor mean(const Tensor& x, std::size_t axis);
// Whole-tensor reductions to shape [1].
Tensor sum_all(const Tensor& x);
Tensor mean_all(const Tensor& x);

// x[B,C,H,W] -> [B,C,2H,2W], each value copied into a 2x2 block.
Tensor upsample2x_nearest(const Tensor& x);

// Tensors agreeing on every extent except `axis` -> extents summed on `axis`.
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// x[m,n], indices into [0,m) -> [indices.size(), n]. Indices are constants:
// no gradient flows to them.
Tensor gather_rows(const Tensor& x, const std::vector<std::size_t>& indices);

// x[m,n], one column per row -> [m], out[i] = x[i, cols[i]].
Tensor pick(const Tensor& x, const std::vector<std::size_t>& cols);

// Same data under a shape with equal element count.
Tensor reshape(const Tensor& x, Shape shape);

// x[B,C,H,W] -> [B*H*W, C]: one row per spatial point, sample-major then
// row-major over (y, x).
Tensor to_points(const Tensor& x);

// Inverse layout of to_points: rows[B*H*W, C] -> [B,C,H,W].
Tensor from_points(const Tensor& rows, std::size_t batch, std::size_t height, std::size_t width);

// x[m,n] -> rows scaled to unit L2 norm; rows with norm below eps are
// divided by eps instead.
Tensor l2_normalize_rows(const Tensor& x, double eps = 1e-12);

// x[m,n] with non-negative row sums -> each row divided by its sum. An
// all-zero row (a pooling cluster that underflowed to no mass) stays zero.
Tensor normalize_rows_sum(const Tensor& x);

}  // namespace pim::ops
