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

#include <cmath>
#include <limits>
#include <numbers>

#include "doctest.h"
#include "pim/autograd.hpp"
#include "pim/kernels.hpp"
#include "pim/losses.hpp"
#include "pim/ops.hpp"
#include "pim/optim.hpp"
#include "support/gradcheck.hpp"

using namespace pim;
using pim::testing::max_gradcheck_error;
using pim::testing::random_tensor;

namespace {
constexpr double kGradTol = 1e-4;

std::string error_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const std::exception& e) {
    return e.what();
  }
  return "";
}
}  // namespace

TEST_CASE("tensor invariants") {
  Tensor t = Tensor::zeros({2, 3, 4}, DType::f64);
  CHECK(t.numel() == 24);
  CHECK(t.values().size() == 24);
  CHECK_THROWS_AS(Tensor::from({1, 2, 3}, {2, 2}), std::invalid_argument);
  Tensor f = Tensor::from({1.5, -2}, {2}, DType::f32);
  CHECK(f.dtype() == DType::f32);
  CHECK(f.to(DType::f64).values() == std::vector<double>{1.5, -2});
}

TEST_CASE("forward examples") {
  SUBCASE("softmax of zeros is uniform") {
    Tensor y = ops::softmax(Tensor::from({0, 0}, {2}), 0);
    CHECK(y.at(0) == doctest::Approx(0.5));
    CHECK(y.at(1) == doctest::Approx(0.5));
  }
  SUBCASE("softmax rows sum to one") {
    Tensor y = ops::softmax(random_tensor({7, 5}, 3, false), 1);
    for (std::size_t r = 0; r < 7; ++r) {
      double s = 0;
      for (std::size_t c = 0; c < 5; ++c) s += y.at(r * 5 + c);
      CHECK(std::abs(s - 1.0) < 1e-6);
    }
  }
  SUBCASE("relu") {
    CHECK(ops::relu(Tensor::from({-1, 2}, {2})).values() == std::vector<double>{0, 2});
  }
  SUBCASE("conv2d of ones matches direct summation") {
    Tensor x = Tensor::full({1, 1, 5, 5}, 1.0, DType::f64);
    Tensor w = Tensor::full({1, 1, 3, 3}, 1.0, DType::f64);
    Tensor y = ops::conv2d(x, w, Tensor(), 1, 0);
    CHECK(y.shape() == Shape{1, 1, 3, 3});
    std::vector<double> oracle(9);
    kernels::Conv2dGeometry g{1, 1, 5, 5, 1, 3, 3, 1, 0};
    kernels::serial::conv2d_forward<double>(g, x.data<double>(), w.data<double>(), {}, oracle);
    CHECK(y.values() == oracle);
    for (double v : y.values()) CHECK(v == 9.0);
  }
  SUBCASE("matmul and transpose") {
    Tensor a = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
    Tensor b = Tensor::from({1, 0, 0, 1, 1, 1}, {3, 2});
    CHECK(ops::matmul(a, b).values() == std::vector<double>{4, 5, 10, 11});
    CHECK(ops::transpose(a).values() == std::vector<double>{1, 4, 2, 5, 3, 6});
  }
  SUBCASE("reductions, concat, gather, upsample") {
    Tensor a = Tensor::from({1, 2, 3, 4, 5, 6}, {2, 3});
    CHECK(ops::sum(a, 0).values() == std::vector<double>{5, 7, 9});
    CHECK(ops::mean(a, 1).values() == std::vector<double>{2, 5});
    CHECK(ops::concat({a, a}, 0).shape() == Shape{4, 3});
    CHECK(ops::concat({a, a}, 1).values() == std::vector<double>{1, 2, 3, 1, 2, 3, 4, 5, 6, 4, 5, 6});
    CHECK(ops::gather_rows(a, {1, 1, 0}).values() == std::vector<double>{4, 5, 6, 4, 5, 6, 1, 2, 3});
    Tensor u = ops::upsample2x_nearest(Tensor::from({1, 2, 3, 4}, {1, 1, 2, 2}));
    CHECK(u.values() == std::vector<double>{1, 1, 2, 2, 1, 1, 2, 2, 3, 3, 4, 4, 3, 3, 4, 4});
  }
}

TEST_CASE("shape errors name the op and both shapes") {
  Tensor a = Tensor::zeros({2, 3}, DType::f64);
  Tensor b = Tensor::zeros({2, 3}, DType::f64);
  const std::string msg = error_of([&] { ops::matmul(a, b); });
  CHECK(msg.find("matmul") != std::string::npos);
  CHECK(msg.find("[2,3]") != std::string::npos);
  CHECK_THROWS_AS(ops::add(a, Tensor::zeros({3, 2}, DType::f64)), std::invalid_argument);
  CHECK(error_of([&] { ops::add(a, Tensor::zeros({3, 2}, DType::f64)); }).find("[3,2]") != std::string::npos);
  CHECK_THROWS_AS(ops::softmax(Tensor::zeros({2, 0}, DType::f64), 1), std::invalid_argument);
  CHECK_THROWS_AS(ops::conv2d(Tensor::zeros({1, 2, 5, 5}, DType::f64), Tensor::zeros({1, 3, 3, 3}, DType::f64),
                              Tensor(), 1, 0),
                  std::invalid_argument);
  CHECK_THROWS_AS(ops::gather_rows(a, {2}), std::invalid_argument);
  CHECK_THROWS_AS(ops::add(a, Tensor::zeros({2, 3}, DType::f32)), std::invalid_argument);
}

TEST_CASE("backward examples") {
  SUBCASE("sum is linear") {
    Tensor x = Tensor::from({1, 2, 3}, {3}, DType::f64, true);
    backward(ops::sum_all(x));
    CHECK(x.grad_values() == std::vector<double>{1, 1, 1});
  }
  SUBCASE("softmax cross-entropy closed form") {
    Tensor logits = Tensor::from({0, 0}, {1, 2}, DType::f64, true);
    backward(cross_entropy(logits, {0}));
    auto g = logits.grad_values();
    CHECK(g[0] == doctest::Approx(-0.5).epsilon(1e-12));
    CHECK(g[1] == doctest::Approx(0.5).epsilon(1e-12));
  }
  SUBCASE("unreachable tensors have zero gradient") {
    Tensor x = Tensor::from({1, 2}, {2}, DType::f64, true);
    Tensor unused = Tensor::from({5}, {1}, DType::f64, true);
    backward(ops::sum_all(ops::mul(x, x)));
    CHECK(x.grad_values() == std::vector<double>{2, 4});
    CHECK(unused.grad_values() == std::vector<double>{0});
  }
  SUBCASE("shared subexpressions accumulate") {
    Tensor x = Tensor::from({3}, {1}, DType::f64, true);
    Tensor y = ops::mul(x, x);
    backward(ops::add(y, ops::scale(y, 2.0)));  // 3 x^2
    CHECK(x.grad_values()[0] == doctest::Approx(18.0));
  }
  SUBCASE("non-scalar loss is rejected") {
    Tensor x = Tensor::from({1, 2}, {2}, DType::f64, true);
    CHECK_THROWS_AS(backward(ops::scale(x, 2.0)), std::invalid_argument);
  }
  SUBCASE("no tape under NoGradGuard") {
    Tensor x = Tensor::from({1, 2}, {2}, DType::f64, true);
    NoGradGuard guard;
    CHECK_FALSE(ops::scale(x, 2.0).requires_grad());
  }
}

TEST_CASE("every op matches central finite differences") {
  using pim::testing::pseudo_random;
  auto weights_for = [](const Tensor& y, unsigned seed) {
    return Tensor::from(pseudo_random(y.numel(), seed), y.shape(), DType::f64, false);
  };
  // Contract each output with fixed random weights so every output element
  // contributes a distinct amount.
  auto contract = [&](const Tensor& y) { return ops::sum_all(ops::mul(y, weights_for(y, 99))); };

  Tensor a = random_tensor({3, 4}, 1), b = random_tensor({4, 2}, 2);
  CHECK(max_gradcheck_error({a, b}, [&] { return contract(ops::matmul(a, b)); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::transpose(a)); }) < kGradTol);

  Tensor w = random_tensor({5, 4}, 3), bias = random_tensor({5}, 4);
  CHECK(max_gradcheck_error({a, w, bias}, [&] { return contract(ops::linear(a, w, bias)); }) < kGradTol);

  Tensor img = random_tensor({2, 2, 5, 5}, 5), kern = random_tensor({3, 2, 3, 3}, 6), kb = random_tensor({3}, 7);
  CHECK(max_gradcheck_error({img, kern, kb}, [&] { return contract(ops::conv2d(img, kern, kb, 2, 1)); }) < kGradTol);
  CHECK(max_gradcheck_error({img, kern}, [&] { return contract(ops::conv2d(img, kern, Tensor(), 1, 0)); }) < kGradTol);

  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::relu(a)); }) < kGradTol);
  Tensor pos = Tensor::from({0.3, 0.7, 1.5, 2.0}, {4}, DType::f64, true);
  CHECK(max_gradcheck_error({pos}, [&] { return contract(ops::log(pos)); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::clamp(a, -0.5, 0.5)); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::scale(ops::add_scalar(a, 0.3), -2.0)); }) < kGradTol);

  Tensor c = random_tensor({3, 4}, 8);
  CHECK(max_gradcheck_error({a, c}, [&] { return contract(ops::add(a, c)); }) < kGradTol);
  CHECK(max_gradcheck_error({a, c}, [&] { return contract(ops::sub(a, c)); }) < kGradTol);
  CHECK(max_gradcheck_error({a, c}, [&] { return contract(ops::mul(a, c)); }) < kGradTol);

  Tensor t3 = random_tensor({2, 3, 4}, 9);
  for (std::size_t axis = 0; axis < 3; ++axis) {
    CHECK(max_gradcheck_error({t3}, [&] { return contract(ops::softmax(t3, axis)); }) < kGradTol);
    CHECK(max_gradcheck_error({t3}, [&] { return contract(ops::log_softmax(t3, axis)); }) < kGradTol);
    CHECK(max_gradcheck_error({t3}, [&] { return contract(ops::sum(t3, axis)); }) < kGradTol);
    CHECK(max_gradcheck_error({t3}, [&] { return contract(ops::mean(t3, axis)); }) < kGradTol);
  }
  CHECK(max_gradcheck_error({t3}, [&] { return ops::mean_all(ops::mul(t3, t3)); }) < kGradTol);

  CHECK(max_gradcheck_error({img}, [&] { return contract(ops::upsample2x_nearest(img)); }) < kGradTol);
  CHECK(max_gradcheck_error({a, c}, [&] { return contract(ops::concat({a, c, a}, 1)); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::gather_rows(a, {2, 0, 2})); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::pick(a, {3, 0, 1})); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::reshape(a, {2, 6})); }) < kGradTol);
  CHECK(max_gradcheck_error({img}, [&] { return contract(ops::to_points(img)); }) < kGradTol);
  Tensor rows = random_tensor({8, 3}, 10);
  CHECK(max_gradcheck_error({rows}, [&] { return contract(ops::from_points(rows, 2, 2, 2)); }) < kGradTol);
  CHECK(max_gradcheck_error({a}, [&] { return contract(ops::l2_normalize_rows(a)); }) < kGradTol);
  Tensor positive = Tensor::from({0.2, 0.5, 1.0, 0.1, 0.9, 0.4}, {2, 3}, DType::f64, true);
  CHECK(max_gradcheck_error({positive}, [&] { return contract(ops::normalize_rows_sum(positive)); }) < kGradTol);
}

TEST_CASE("row-sum normalisation edge rows") {
  Tensor x = Tensor::from({0.0, 0.0, 1.0, 3.0}, {2, 2}, DType::f64, true);
  Tensor y = ops::normalize_rows_sum(x);
  CHECK(y.values() == std::vector<double>{0.0, 0.0, 0.25, 0.75});
  backward(ops::sum_all(ops::mul(y, Tensor::from({1.0, 2.0, 3.0, 4.0}, {2, 2}))));
  CHECK(x.grad_values()[0] == 0.0);
  CHECK(x.grad_values()[1] == 0.0);
  CHECK_THROWS_AS(ops::normalize_rows_sum(Tensor::from({1.0, -2.0}, {1, 2})), std::invalid_argument);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  CHECK(std::isnan(ops::normalize_rows_sum(Tensor::from({nan, 1.0}, {1, 2})).at(1)));
}

TEST_CASE("omp kernels agree with the serial reference") {
  using pim::testing::pseudo_random;
  for (auto [stride, pad] : {std::pair<std::size_t, std::size_t>{1, 1}, {2, 1}, {1, 0}, {2, 0}}) {
    kernels::Conv2dGeometry g{3, 4, 9, 7, 5, 3, 3, stride, pad};
    const auto x = pseudo_random(g.batch * g.in_channels * g.height * g.width, 1);
    const auto w = pseudo_random(g.out_channels * g.patch_size(), 2);
    const auto bias = pseudo_random(g.out_channels, 3);
    const std::size_t ny = g.batch * g.out_channels * g.out_height() * g.out_width();
    std::vector<double> y_ref(ny), y_omp(ny);
    kernels::serial::conv2d_forward<double>(g, x, w, bias, y_ref);
    kernels::omp::conv2d_forward<double>(g, x, w, bias, y_omp);
    for (std::size_t i = 0; i < ny; ++i) CHECK(y_omp[i] == doctest::Approx(y_ref[i]).epsilon(1e-12));

    const auto dy = pseudo_random(ny, 4);
    std::vector<double> dx_ref(x.size()), dw_ref(w.size()), db_ref(bias.size());
    std::vector<double> dx_omp(x.size()), dw_omp(w.size()), db_omp(bias.size());
    kernels::serial::conv2d_backward<double>(g, x, w, dy, dx_ref, dw_ref, db_ref);
    kernels::omp::conv2d_backward<double>(g, x, w, dy, dx_omp, dw_omp, db_omp);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(dx_omp[i] == doctest::Approx(dx_ref[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < w.size(); ++i) CHECK(dw_omp[i] == doctest::Approx(dw_ref[i]).epsilon(1e-12));
    for (std::size_t i = 0; i < bias.size(); ++i) CHECK(db_omp[i] == doctest::Approx(db_ref[i]).epsilon(1e-12));
  }
  // Shapes hitting the two-vector, one-vector, padded-tail and short-row paths.
  const std::size_t shapes[][3] = {{6, 5, 4}, {8, 13, 37}, {9, 7, 16}, {4, 3, 33}, {13, 11, 70}, {3, 2, 1}};
  for (const auto& [m, k, n] : shapes) {
    const auto a = pseudo_random(m * k, 7), b = pseudo_random(k * n, 8);
    std::vector<double> c_ref(m * n), c_omp(m * n);
    kernels::serial::matmul<double>(a, b, c_ref, m, k, n);
    kernels::omp::matmul<double>(a, b, c_omp, m, k, n);
    for (std::size_t i = 0; i < m * n; ++i) CHECK(c_omp[i] == doctest::Approx(c_ref[i]).epsilon(1e-12));

    std::vector<float> af(a.begin(), a.end()), bf(b.begin(), b.end()), cf_ref(m * n), cf_omp(m * n);
    kernels::serial::matmul<float>(af, bf, cf_ref, m, k, n);
    kernels::omp::matmul<float>(af, bf, cf_omp, m, k, n);
    for (std::size_t i = 0; i < m * n; ++i) CHECK(cf_omp[i] == doctest::Approx(cf_ref[i]).epsilon(1e-5));
  }
}

TEST_CASE("sgd with cosine decay") {
  OptimizerState s({0.0005, 0.0005, 0.9}, 100);
  CHECK(s.learning_rate_at(0) == doctest::Approx(0.0005));
  CHECK(s.learning_rate_at(100) == doctest::Approx(0.0).epsilon(1e-15));
  CHECK(s.learning_rate_at(50) == doctest::Approx(0.00025));
  for (std::size_t t = 1; t <= 100; ++t) CHECK(s.learning_rate_at(t) <= s.learning_rate_at(t - 1));

  SUBCASE("plain step") {
    OptimizerState plain({0.1, 0.0, 0.0}, 1000000);
    std::vector<Tensor> params{Tensor::from({1.0}, {1}, DType::f64, true)};
    backward(ops::sum_all(params[0]));
    sgd_step(plain, params);
    // t = 0: the cosine factor is exactly 1.
    CHECK(params[0].item() == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(plain.step_index == 1);
  }
  SUBCASE("momentum and decoupled decay") {
    OptimizerState st({0.1, 0.01, 0.5}, 1000000000);
    std::vector<Tensor> params{Tensor::from({2.0}, {1}, DType::f64, true)};
    double w = 2.0, v = 0.0;
    for (int i = 0; i < 3; ++i) {
      const double lr = st.current_learning_rate();
      backward(ops::sum_all(ops::mul(params[0], params[0])));
      v = 0.5 * v + 2.0 * w;
      w = w - lr * v - lr * 0.01 * w;
      sgd_step(st, params);
      CHECK(params[0].item() == doctest::Approx(w).epsilon(1e-12));
    }
  }
  SUBCASE("step before backward is an error") {
    OptimizerState st;
    std::vector<Tensor> params{Tensor::from({1.0}, {1}, DType::f64, true)};
    CHECK_THROWS_AS(sgd_step(st, params), std::logic_error);
  }
}
