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
#include <numbers>

#include "doctest.h"
#include "pim/autograd.hpp"
#include "pim/losses.hpp"
#include "pim/ops.hpp"
#include "support/gradcheck.hpp"
#include "support/point_logits.hpp"

using namespace pim;
using pim::testing::max_gradcheck_error;
using pim::testing::point_logits_from;
using pim::testing::point_probs_from;
using pim::testing::pseudo_random;

namespace {

SelectionResult split(std::size_t h, std::size_t w, const std::vector<std::size_t>& selected) {
  SelectionResult sr;
  sr.height = h;
  sr.width = w;
  sr.mask.assign(h * w, 0);
  sr.selected_indices = selected;
  for (auto s : selected) sr.mask[s] = 1;
  for (std::size_t s = 0; s < h * w; ++s)
    if (!sr.mask[s]) sr.dropped_indices.push_back(s);
  return sr;
}

std::vector<double> uniform(std::size_t points, std::size_t classes) {
  return std::vector<double>(points * classes, 1.0 / double(classes));
}

}  // namespace

TEST_CASE("block average loss closed forms") {
  SUBCASE("one-hot at the label") {
    auto pl = point_probs_from({0, 1, 0}, 1, 1, 1, 3);
    CHECK(block_average_loss({pl}, {1}).loss.item() == 0.0);
  }
  SUBCASE("uniform over 200 classes") {
    auto pl = point_probs_from(uniform(4, 200), 1, 2, 2, 200);
    CHECK(block_average_loss({pl}, {17}).loss.item() == doctest::Approx(5.2983173665).epsilon(1e-9));
    auto two_blocks = block_average_loss({pl, pl}, {17});
    CHECK(two_blocks.loss.item() == doctest::Approx(2.0 * std::log(200.0)).epsilon(1e-12));
    CHECK(two_blocks.summary.size() == 2);
  }
  SUBCASE("two points average before the log") {
    const double p[] = {0.7, 0.2, 0.1}, q[] = {0.1, 0.3, 0.6};
    auto pl = point_probs_from({p[0], p[1], p[2], q[0], q[1], q[2]}, 1, 1, 2, 3);
    auto term = block_average_loss({pl}, {2});
    const auto z = term.summary[0].values();
    for (int j = 0; j < 3; ++j) CHECK(z[j] == doctest::Approx((p[j] + q[j]) / 2).epsilon(1e-15));
    CHECK(term.loss.item() == doctest::Approx(-std::log(0.35)).epsilon(1e-14));
  }
  SUBCASE("batch mean") {
    auto pl = point_probs_from({1, 0, 0.5, 0.5}, 2, 1, 1, 2);
    CHECK(block_average_loss({pl}, {0, 1}).loss.item() == doctest::Approx(std::log(2.0) / 2).epsilon(1e-14));
  }
  auto pl = point_probs_from(uniform(1, 3), 1, 1, 1, 3);
  CHECK_THROWS_AS(block_average_loss({pl}, {3}), std::invalid_argument);
  CHECK_THROWS_AS(block_average_loss({pl}, {0, 1}), std::invalid_argument);
}

TEST_CASE("selected loss") {
  SUBCASE("selected one-hot at the label") {
    auto pl = point_probs_from({0, 1, 0, 1, 0.5, 0.5}, 1, 1, 3, 2);
    auto term = selected_loss({pl}, {{split(1, 3, {0, 1})}}, {1});
    CHECK(term.loss.item() == 0.0);
  }
  SUBCASE("single selected point") {
    auto pl = point_probs_from({0.6, 0.4, 0.1, 0.9}, 1, 1, 2, 2);
    auto term = selected_loss({pl}, {{split(1, 2, {1})}}, {0});
    CHECK(term.summary[0].values() == std::vector<double>{0.1, 0.9});
    CHECK(term.loss.item() == doctest::Approx(-std::log(0.1)).epsilon(1e-14));
  }
  auto pl = point_probs_from(uniform(2, 2), 1, 1, 2, 2);
  CHECK_THROWS_AS(selected_loss({pl}, {{split(1, 2, {})}}, {0}), std::invalid_argument);
}

TEST_CASE("flattening loss closed forms") {
  SUBCASE("uniform, 200 classes") {
    auto pl = point_probs_from(uniform(4, 200), 1, 2, 2, 200);
    auto term = flatten_loss({pl}, {{split(2, 2, {0})}});
    CHECK(term.loss.item() == doctest::Approx(1.0025083647).epsilon(1e-9));
    CHECK(term.loss.item() == doctest::Approx(-200.0 * std::log(1.0 - 1.0 / 200.0)).epsilon(1e-13));
  }
  SUBCASE("uniform, 10 classes") {
    auto pl = point_probs_from(uniform(3, 10), 1, 1, 3, 10);
    auto term = flatten_loss({pl}, {{split(1, 3, {2})}});
    CHECK(term.loss.item() == doctest::Approx(1.0536051566).epsilon(1e-9));
  }
  SUBCASE("confident background is maximally penalized") {
    auto pl = point_probs_from({0.5, 0.5, 1, 0}, 1, 1, 2, 2);
    auto term = flatten_loss({pl}, {{split(1, 2, {0})}});
    const double expected = -std::log(kLogEpsilon) - std::log(1.0 - kLogEpsilon);
    CHECK(term.loss.item() == doctest::Approx(expected).epsilon(1e-9));
    CHECK(term.loss.item() > 13.8);
  }
  SUBCASE("n sums to one and averages the dropped points") {
    auto pl = point_probs_from({0.2, 0.8, 0.6, 0.4, 0.9, 0.1}, 1, 1, 3, 2);
    auto term = flatten_loss({pl}, {{split(1, 3, {1})}});
    const auto n = term.summary[0].values();
    CHECK(n[0] == doctest::Approx(0.55));
    CHECK(n[0] + n[1] == doctest::Approx(1.0).epsilon(1e-15));
  }
  SUBCASE("no dropped points contributes zero") {
    auto pl = point_probs_from({1, 0, 0, 1}, 1, 1, 2, 2);
    CHECK(flatten_loss({pl}, {{split(1, 2, {0, 1})}}).loss.item() == 0.0);
  }
}

TEST_CASE("uniform dropped logits are a stationary point of the flattening loss") {
  auto pl = point_logits_from({0.3, 0.3, 0.3, 0.3, 2.0, -1.0, 0.5, 0.1, -0.4, -0.4, -0.4, -0.4}, 1, 3, 4, true);
  auto term = flatten_loss({pl}, {{split(1, 3, {1})}});
  backward(term.loss);
  const auto g = pl.logits.grad_values();
  for (std::size_t i = 0; i < 12; ++i) CHECK(std::abs(g[i]) < 1e-15);
}

TEST_CASE("weighted sum") {
  SUBCASE("worked arithmetic") {
    auto bundle = total_loss({Tensor::scalar(2), {}}, {Tensor::scalar(9), {}}, {Tensor::scalar(0.5), {}}, Tensor::scalar(3),
                             LossWeights{});
    CHECK(bundle.total.item() == 7.5);
    CHECK(bundle.selected.item() == 9.0);
  }
  SUBCASE("reported parts re-add bitwise") {
    const auto v = pseudo_random(8, 3);
    const LossWeights w{std::abs(v[4]) * 3, std::abs(v[5]), std::abs(v[6]) * 7, std::abs(v[7])};
    auto bundle = total_loss({Tensor::scalar(v[0]), {}}, {Tensor::scalar(v[1]), {}}, {Tensor::scalar(v[2]), {}},
                             Tensor::scalar(v[3]), w);
    CHECK(bundle.total.item() == LossBundle::weighted_sum(w, bundle.block.item(), bundle.selected.item(),
                                                          bundle.flatten.item(), bundle.combiner.item()));
  }
  SUBCASE("zero weights give zero total and zero gradients") {
    auto pl = point_logits_from(pseudo_random(4 * 3, 9), 2, 2, 3, true);
    std::vector<std::vector<SelectionResult>> sel{{split(2, 2, {1, 2})}};
    auto bundle = total_loss(block_average_loss({pl}, {0}), selected_loss({pl}, sel, {0}), flatten_loss({pl}, sel),
                             Tensor(), LossWeights{0, 0, 0, 0});
    CHECK(bundle.total.item() == 0.0);
    backward(bundle.total);
    for (double g : pl.logits.grad_values()) CHECK(g == 0.0);
  }
  CHECK_THROWS_AS(LossWeights({1, -1, 0, 0}).validate(), std::invalid_argument);
}

TEST_CASE("with lambda_s = 0 the selected term changes no gradient") {
  const auto values = pseudo_random(9 * 4, 21);
  std::vector<std::vector<SelectionResult>> sel{{split(3, 3, {4, 0, 8})}};
  auto grads = [&](bool with_selected) {
    auto pl = point_logits_from(values, 3, 3, 4, true);
    auto bundle = total_loss(block_average_loss({pl}, {2}),
                             with_selected ? selected_loss({pl}, sel, {2}) : LossTerm{},
                             flatten_loss({pl}, sel), Tensor(), LossWeights{});
    backward(bundle.total);
    return pl.logits.grad_values();
  };
  CHECK(grads(true) == grads(false));
}

TEST_CASE("loss terms pass the finite-difference check") {
  auto pl = point_logits_from(pseudo_random(2 * 3 * 5, 4), 2, 3, 5, true);
  std::vector<std::vector<SelectionResult>> sel{{split(2, 3, {5, 1})}};
  auto build = [&] {
    PointLogits p = pl;
    p.probs = ops::softmax(p.logits, 1);
    return total_loss(block_average_loss({p}, {3}), selected_loss({p}, sel, {3}), flatten_loss({p}, sel),
                      cross_entropy(ops::reshape(ops::mean(p.logits, 0), {1, 5}), {3}), LossWeights{1, 0.5, 5, 1})
        .total;
  };
  CHECK(max_gradcheck_error({pl.logits}, build) < 1e-4);
}

TEST_CASE("cross entropy") {
  CHECK(cross_entropy(Tensor::from({0, 0}, {1, 2}), {0}).item() == doctest::Approx(std::numbers::ln2));
  CHECK_THROWS_AS(cross_entropy(Tensor::from({0, 0}, {1, 2}), {2}), std::invalid_argument);
  CHECK_THROWS_AS(cross_entropy(Tensor::from({0, 0}, {2}), {0}), std::invalid_argument);
}
