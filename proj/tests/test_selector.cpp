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

#include <algorithm>
#include <cmath>
#include <numeric>

#include "doctest.h"
#include "pim/autograd.hpp"
#include "pim/ops.hpp"
#include "pim/selector.hpp"
#include "support/gradcheck.hpp"
#include "support/point_logits.hpp"

using namespace pim;
using pim::testing::point_logits_from;
using pim::testing::pseudo_random;
using pim::testing::random_tensor;

namespace {

Linear zero_head(std::size_t in, std::size_t out) {
  Rng rng(0);
  Linear head(in, out, rng, DType::f64);
  head.weight = Tensor::zeros({out, in}, DType::f64);
  head.bias = Tensor::zeros({out}, DType::f64);
  return head;
}

}  // namespace

TEST_CASE("zero head gives uniform probabilities") {
  FeatureMap fm{1, random_tensor({2, 3, 4, 4}, 1, false)};
  auto pl = classify_points(fm, zero_head(3, 5));
  CHECK(pl.probs.shape() == Shape{32, 5});
  for (double p : pl.probs.values()) CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
}

TEST_CASE("1x1 map logits equal the matrix-vector product") {
  const auto v = pseudo_random(4, 2);
  FeatureMap fm{1, Tensor::from(v, {1, 4, 1, 1})};
  Rng rng(3);
  Linear head(4, 3, rng, DType::f64);
  auto pl = classify_points(fm, head);
  const auto w = head.weight.values(), b = head.bias.values();
  for (std::size_t j = 0; j < 3; ++j) {
    double dot = b[j];
    for (std::size_t i = 0; i < 4; ++i) dot += w[j * 4 + i] * v[i];
    CHECK(pl.logits.at(j) == doctest::Approx(dot).epsilon(1e-14));
  }
}

TEST_CASE("permuting spatial points permutes logits identically") {
  Rng rng(4);
  Linear head(3, 4, rng, DType::f64);
  const auto v = pseudo_random(3 * 6, 5);  // [1,3,2,3]
  FeatureMap fm{1, Tensor::from(v, {1, 3, 2, 3})};
  const std::size_t perm[] = {4, 0, 5, 2, 1, 3};
  std::vector<double> pv(v.size());
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t s = 0; s < 6; ++s) pv[c * 6 + s] = v[c * 6 + perm[s]];
  FeatureMap permuted{1, Tensor::from(pv, {1, 3, 2, 3})};
  auto a = classify_points(fm, head), b = classify_points(permuted, head);
  for (std::size_t s = 0; s < 6; ++s)
    for (std::size_t j = 0; j < 4; ++j) CHECK(b.logits.at(s * 4 + j) == a.logits.at(perm[s] * 4 + j));
}

TEST_CASE("head width mismatch is an error") {
  FeatureMap fm{1, Tensor::zeros({1, 3, 2, 2}, DType::f64)};
  CHECK_THROWS_AS(classify_points(fm, zero_head(4, 2)), std::invalid_argument);
}

TEST_CASE("worked 2x2 example") {
  auto pl = point_logits_from({2, 0, 0, 0, 1, 1, 0, 3}, 2, 2, 2);
  const auto conf = pl.max_probs(0);
  CHECK(conf[0] == doctest::Approx(0.880797).epsilon(1e-5));
  CHECK(conf[1] == doctest::Approx(0.5));
  CHECK(conf[2] == doctest::Approx(0.5));
  CHECK(conf[3] == doctest::Approx(0.952574).epsilon(1e-5));

  auto one = select(pl, 0, 1);
  CHECK(one.selected_indices == std::vector<std::size_t>{3});
  CHECK(one.mask == std::vector<std::uint8_t>{0, 0, 0, 1});
  CHECK(one.dropped_indices == std::vector<std::size_t>{0, 1, 2});

  auto two = select(pl, 0, 2);
  CHECK(two.selected_indices == std::vector<std::size_t>{3, 0});
  CHECK(two.mask == std::vector<std::uint8_t>{1, 0, 0, 1});
  CHECK(two.selected_features.shape() == Shape{2, 2});
  // Rows are the consumed feature vectors in confidence order.
  CHECK(two.selected_features.values() == std::vector<double>{0, 3, 2, 0});

  // The tie between points 1 and 2 goes to the lower index.
  auto three = select(pl, 0, 3);
  CHECK(three.selected_indices == std::vector<std::size_t>{3, 0, 1});
}

TEST_CASE("k = H*W selects everything; k out of range throws") {
  auto pl = point_logits_from(pseudo_random(3 * 4 * 3, 8), 3, 4, 3);
  auto all = select(pl, 0, 12);
  CHECK(std::ranges::all_of(all.mask, [](auto m) { return m == 1; }));
  CHECK(all.dropped_indices.empty());
  CHECK_THROWS_AS(select(pl, 0, 0), std::invalid_argument);
  CHECK_THROWS_AS(select(pl, 0, 13), std::invalid_argument);
}

TEST_CASE("identical points select the first k in row-major order") {
  auto pl = point_logits_from(std::vector<double>(5 * 5 * 3, 0.25), 5, 5, 3);
  auto sr = select(pl, 0, 7);
  CHECK(sr.selected_indices == std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6});
}

TEST_CASE("threshold filter") {
  // Max-probs: 0.9526, 0.9975, 0.5, 0.8808, 0.9933 (rows below).
  auto pl = point_logits_from({3, 0, 6, 0, 0, 0, 2, 0, 5, 0}, 1, 5, 2);
  auto sr = select(pl, 0, 4);
  REQUIRE(sr.selected_indices == std::vector<std::size_t>{1, 4, 0, 3});

  SUBCASE("no-op when everything clears tau") {
    auto high = point_logits_from({3, 0, 4, 0, 5, 0}, 1, 3, 2);
    auto s = select(high, 0, 3);
    auto f = threshold_filter(s, high, 0, 0.9);
    CHECK(f.selected_indices == s.selected_indices);
    CHECK(f.mask == s.mask);
    CHECK(f.confidence_threshold == 0.9);
  }
  SUBCASE("everything filtered") {
    auto flat = point_logits_from({0, 0, 0, 0, 1, 1}, 1, 3, 2);
    auto f = threshold_filter(select(flat, 0, 2), flat, 0, 0.9);
    CHECK(f.selected_indices.empty());
    CHECK(f.selected_features.size(0) == 0);
    CHECK(f.dropped_indices == std::vector<std::size_t>{0, 1, 2});
  }
  SUBCASE("exactly the sub-threshold points leave, order kept") {
    auto f = threshold_filter(sr, pl, 0, 0.9);
    CHECK(f.selected_indices == std::vector<std::size_t>{1, 4, 0});
    CHECK(f.dropped_indices == std::vector<std::size_t>{2, 3});
    CHECK(f.mask == std::vector<std::uint8_t>{1, 1, 0, 0, 1});
    CHECK(!f.selected_features.requires_grad());
  }
  CHECK_THROWS_AS(threshold_filter(sr, pl, 0, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(threshold_filter(sr, pl, 0, 0.0), std::invalid_argument);
}

TEST_CASE("ranking property over random maps") {
  Rng rng(2026);
  for (int trial = 0; trial < 1000; ++trial) {
    const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6), c = 2 + rng.below(5);
    std::vector<double> logits(h * w * c);
    // Coarse values so that ties are common.
    for (auto& v : logits) v = trial % 2 ? rng.normal() * 3.0 : double(rng.below(3));
    auto pl = point_logits_from(logits, h, w, c);
    const std::size_t k = 1 + rng.below(h * w);
    auto sr = select(pl, 0, k);
    const auto conf = pl.max_probs(0);
    REQUIRE(sr.num_selected() == k);
    REQUIRE(std::count(sr.mask.begin(), sr.mask.end(), 1) == long(k));
    double min_sel = 1.0, max_drop = 0.0;
    for (auto s : sr.selected_indices) min_sel = std::min(min_sel, conf[s]);
    for (auto s : sr.dropped_indices) max_drop = std::max(max_drop, conf[s]);
    REQUIRE(min_sel >= max_drop);
    for (std::size_t i = 1; i < k; ++i) {
      const auto a = sr.selected_indices[i - 1], b = sr.selected_indices[i];
      REQUIRE((conf[a] > conf[b] || (conf[a] == conf[b] && a < b)));
    }
  }
}

TEST_CASE("selection is shift equivariant under wraparound") {
  const std::size_t h = 6, w = 5, c = 4;
  const auto logits = pseudo_random(h * w * c, 12);
  auto base = select(point_logits_from(logits, h, w, c), 0, 9);
  for (std::size_t dy = 0; dy < h; ++dy)
    for (std::size_t dx = 0; dx < w; ++dx) {
      std::vector<double> shifted(logits.size());
      for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x) {
          const std::size_t to = ((y + dy) % h) * w + (x + dx) % w;
          std::copy_n(logits.begin() + long((y * w + x) * c), c, shifted.begin() + long(to * c));
        }
      auto sr = select(point_logits_from(shifted, h, w, c), 0, 9);
      std::vector<std::size_t> expected;
      for (auto s : base.selected_indices) expected.push_back(((s / w + dy) % h) * w + (s % w + dx) % w);
      CHECK(sr.selected_indices == expected);
    }
}

TEST_CASE("gradients reach gathered features, never the ranking") {
  Rng rng(5);
  Linear head(3, 4, rng, DType::f64);
  Tensor features = random_tensor({1, 3, 3, 3}, 6);
  auto pl = classify_points({1, features}, head);
  auto sr = select(pl, 0, 2);
  backward(ops::sum_all(sr.selected_features));
  // Only the selector head produced the confidences; it receives nothing.
  for (double g : head.weight.grad_values()) CHECK(g == 0.0);
  const auto gf = features.grad_values();
  for (std::size_t ch = 0; ch < 3; ++ch)
    for (std::size_t s = 0; s < 9; ++s) CHECK(gf[ch * 9 + s] == (sr.mask[s] ? 1.0 : 0.0));
}

TEST_CASE("selection counts scale with map area") {
  BackboneConfig cfg;
  CHECK(scaled_num_selects(cfg) == std::vector<std::size_t>{28, 14, 7, 4});
  cfg.input_resolution = 192;
  CHECK(scaled_num_selects(cfg) == std::vector<std::size_t>{256, 128, 64, 32});
  cfg.input_resolution = 16;
  CHECK(scaled_num_selects(cfg) == std::vector<std::size_t>{2, 1, 1, 1});
  cfg.num_blocks = 2;
  cfg.channels = {4, 4};
  cfg.input_resolution = 8;
  CHECK(scaled_num_selects(cfg) == std::vector<std::size_t>{1, 1});
}

TEST_CASE("selector wiring") {
  Rng rng(7);
  CHECK_THROWS_AS(Selector({4, 4}, 3, SelectorConfig{{2}}, rng, DType::f64), std::invalid_argument);
  Selector sel({4, 4}, 3, SelectorConfig{{3, 1}}, rng, DType::f64);
  std::vector<FeatureMap> maps{{1, random_tensor({2, 4, 4, 4}, 1, false)}, {2, random_tensor({2, 4, 2, 2}, 2, false)}};
  auto pls = sel.classify(maps);
  auto all = sel.select_all(pls);
  REQUIRE(all.size() == 2);
  REQUIRE(all[0].size() == 2);
  CHECK(all[0][1].num_selected() == 3);
  CHECK(all[1][0].num_selected() == 1);
  // Sample 1 rows come from the second half of the point matrix.
  CHECK(global_rows(pls[0], 1, std::vector<std::size_t>{0, 5}) == std::vector<std::size_t>{16, 21});
  for (std::size_t r = 0; r < pls[0].probs.size(0); ++r) {
    double total = 0;
    for (std::size_t j = 0; j < 3; ++j) total += pls[0].probs.at(r * 3 + j);
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}
