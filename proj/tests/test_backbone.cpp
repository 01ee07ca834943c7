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
#include <string>

#include "doctest.h"
#include "pim/backbone.hpp"
#include "pim/ops.hpp"
#include "support/gradcheck.hpp"

using namespace pim;
using pim::testing::random_tensor;

namespace {

BackboneConfig small_config(bool fpn = true) {
  BackboneConfig cfg;
  cfg.num_blocks = 4;
  cfg.input_resolution = 64;
  cfg.channels = {4, 6, 8, 8};
  cfg.fpn_width = 5;
  cfg.fpn_enabled = fpn;
  return cfg;
}

bool all_finite(const Tensor& t) {
  for (double v : t.values())
    if (!std::isfinite(v)) return false;
  return true;
}

void set_identity_projection(Conv2d& conv) {
  const std::size_t n = conv.weight.size(0);
  conv.weight = Tensor::zeros(conv.weight.shape(), DType::f64);
  for (std::size_t i = 0; i < n; ++i) conv.weight.set(i * n + i, 1.0);
  conv.bias = Tensor::zeros(conv.bias.shape(), DType::f64);
}

}  // namespace

TEST_CASE("pyramid sizes follow the stride arithmetic") {
  Rng rng(1);
  Backbone bb(small_config(false), rng, DType::f64);
  auto maps = bb.extract(random_tensor({3, 64, 64}, 1, false));
  REQUIRE(maps.size() == 4);
  const std::size_t sizes[] = {32, 16, 8, 4};
  for (std::size_t l = 0; l < 4; ++l) {
    CHECK(maps[l].block_index == l + 1);
    CHECK(maps[l].batch() == 1);
    CHECK(maps[l].height() == sizes[l]);
    CHECK(maps[l].width() == sizes[l]);
    CHECK(maps[l].channels() == small_config().channels[l]);
    CHECK(bb.config().map_size(l + 1) == sizes[l]);
  }
}

TEST_CASE("every post-FPN map has the common width") {
  struct Case {
    std::size_t blocks, resolution;
    std::vector<std::size_t> channels;
    std::size_t width;
  };
  const Case cases[] = {{1, 8, {3}, 4}, {2, 8, {2, 5}, 3}, {3, 16, {4, 4, 7}, 6}, {4, 32, {2, 3, 5, 7}, 8}};
  for (const auto& c : cases) {
    BackboneConfig cfg;
    cfg.num_blocks = c.blocks;
    cfg.input_resolution = c.resolution;
    cfg.channels = c.channels;
    cfg.fpn_width = c.width;
    Rng rng(2);
    Backbone bb(cfg, rng, DType::f64);
    auto maps = bb.forward(random_tensor({2, 3, c.resolution, c.resolution}, 3, false));
    REQUIRE(maps.size() == c.blocks);
    for (std::size_t l = 0; l < c.blocks; ++l) {
      CHECK(maps[l].channels() == c.width);
      CHECK(maps[l].height() == c.resolution >> (l + 1));
    }
  }
}

TEST_CASE("wrong input size names expected and actual shapes") {
  Rng rng(1);
  Backbone bb(small_config(), rng, DType::f64);
  try {
    bb.extract(Tensor::zeros({1, 3, 32, 32}, DType::f64));
    FAIL("expected an error");
  } catch (const std::invalid_argument& e) {
    const std::string what = e.what();
    CHECK(what.find("[B,3,64,64]") != std::string::npos);
    CHECK(what.find("[1,3,32,32]") != std::string::npos);
  }
  CHECK_THROWS_AS(bb.extract(Tensor::zeros({1, 1, 64, 64}, DType::f64)), std::invalid_argument);
}

TEST_CASE("zero image gives finite outputs") {
  Rng rng(4);
  Backbone bb(small_config(), rng, DType::f64);
  for (const auto& m : bb.forward(Tensor::zeros({3, 64, 64}, DType::f64))) CHECK(all_finite(m.features));
}

TEST_CASE("same seed reproduces outputs bit-exactly") {
  const Tensor image = random_tensor({2, 3, 64, 64}, 9, false);
  for (DType dtype : {DType::f64, DType::f32}) {
    Rng a(77), b(77);
    Backbone first(small_config(), a, dtype), second(small_config(), b, dtype);
    auto ma = first.forward(image.to(dtype)), mb = second.forward(image.to(dtype));
    for (std::size_t l = 0; l < ma.size(); ++l) CHECK(ma[l].features.values() == mb[l].features.values());
  }
}

TEST_CASE("single level FPN is the lateral projection") {
  BackboneConfig cfg;
  cfg.num_blocks = 1;
  cfg.input_resolution = 8;
  cfg.channels = {3};
  cfg.fpn_width = 4;
  Rng rng(5);
  Backbone bb(cfg, rng, DType::f64);
  auto pre = bb.extract(random_tensor({3, 8, 8}, 6, false));
  auto post = bb.fpn_fuse(pre);
  REQUIRE(post.size() == 1);
  CHECK(post[0].features.values() == bb.lateral(1)(pre[0].features).values());
}

TEST_CASE("all-zero coarse level leaves the lateral projection") {
  BackboneConfig cfg;
  cfg.num_blocks = 2;
  cfg.input_resolution = 8;
  cfg.channels = {3, 3};
  cfg.fpn_width = 3;
  Rng rng(6);
  Backbone bb(cfg, rng, DType::f64);
  Conv2d& coarse = bb.lateral(2);
  coarse.weight = Tensor::zeros(coarse.weight.shape(), DType::f64);
  coarse.bias = Tensor::zeros(coarse.bias.shape(), DType::f64);
  std::vector<FeatureMap> maps{{1, random_tensor({1, 3, 4, 4}, 7, false)},
                               {2, random_tensor({1, 3, 2, 2}, 8, false)}};
  auto post = bb.fpn_fuse(maps);
  for (double v : post[1].features.values()) CHECK(v == 0.0);
  CHECK(post[0].features.values() == bb.lateral(1)(maps[0].features).values());
}

TEST_CASE("two level fusion with identity projections, by hand") {
  BackboneConfig cfg;
  cfg.num_blocks = 2;
  cfg.input_resolution = 8;
  cfg.channels = {2, 2};
  cfg.fpn_width = 2;
  Rng rng(8);
  Backbone bb(cfg, rng, DType::f64);
  set_identity_projection(bb.lateral(1));
  set_identity_projection(bb.lateral(2));

  // Fine level: 2 channels x 2x2; coarse level: 2 channels x 1x1.
  const Tensor fine = Tensor::from({1, 2, 3, 4, 10, 20, 30, 40}, {1, 2, 2, 2});
  const Tensor coarse = Tensor::from({100, -7}, {1, 2, 1, 1});
  auto post = bb.fpn_fuse({{1, fine}, {2, coarse}});
  CHECK(post[1].features.values() == std::vector<double>{100, -7});
  CHECK(post[0].features.values() == std::vector<double>{101, 102, 103, 104, 3, 13, 23, 33});
}

TEST_CASE("fpn_fuse rejects out-of-order blocks") {
  BackboneConfig cfg;
  cfg.num_blocks = 2;
  cfg.input_resolution = 8;
  cfg.channels = {2, 2};
  cfg.fpn_width = 2;
  Rng rng(1);
  Backbone bb(cfg, rng, DType::f64);
  const Tensor a = Tensor::zeros({1, 2, 4, 4}, DType::f64), b = Tensor::zeros({1, 2, 2, 2}, DType::f64);
  CHECK_THROWS_AS(bb.fpn_fuse({{2, b}, {1, a}}), std::invalid_argument);
  CHECK_THROWS_AS(bb.fpn_fuse({{1, a}, {3, b}}), std::invalid_argument);
  CHECK_THROWS_AS(bb.fpn_fuse({{1, a}}), std::invalid_argument);
}

TEST_CASE("FPN disabled hands out the block maps unchanged") {
  Rng a(3), b(3);
  Backbone plain(small_config(false), a, DType::f64);
  const Tensor image = random_tensor({1, 3, 64, 64}, 2, false);
  auto out = plain.forward(image);
  auto pre = plain.extract(image);
  for (std::size_t l = 0; l < out.size(); ++l) CHECK(out[l].features.values() == pre[l].features.values());
  CHECK_THROWS_AS(plain.fpn_fuse(pre), std::logic_error);
  ParameterList params;
  plain.collect(params);
  for (const auto& p : params.items()) CHECK(p.name.rfind("backbone.", 0) == 0);
}

TEST_CASE("backbone config validation") {
  BackboneConfig cfg = small_config();
  cfg.channels = {4, 4};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.input_resolution = 40;
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
  cfg = small_config();
  cfg.num_blocks = 0;
  cfg.channels = {};
  CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
