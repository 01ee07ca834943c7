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

#include "pim/backbone.hpp"

#include <stdexcept>
#include <string>

#include "pim/ops.hpp"

namespace pim {

std::size_t BackboneConfig::map_size(std::size_t block) const {
  return input_resolution >> block;
}

std::size_t BackboneConfig::output_width(std::size_t block) const {
  return fpn_enabled ? fpn_width : channels.at(block - 1);
}

void BackboneConfig::validate() const {
  if (num_blocks == 0) throw std::invalid_argument("backbone: num_blocks must be positive");
  if (channels.size() != num_blocks) {
    throw std::invalid_argument("backbone: " + std::to_string(channels.size()) +
                                " channel widths for " + std::to_string(num_blocks) + " blocks");
  }
  if (input_resolution % (std::size_t{1} << num_blocks) != 0) {
    throw std::invalid_argument("backbone: input_resolution " + std::to_string(input_resolution) +
                                " is not divisible by 2^" + std::to_string(num_blocks));
  }
  for (auto c : channels)
    if (c == 0) throw std::invalid_argument("backbone: channel widths must be positive");
  if (fpn_enabled && fpn_width == 0) throw std::invalid_argument("backbone: fpn_width must be positive");
}

Backbone::Backbone(const BackboneConfig& cfg, Rng& rng, DType dtype) : cfg_(cfg) {
  cfg_.validate();
  std::size_t in = 3;
  for (std::size_t l = 0; l < cfg_.num_blocks; ++l) {
    down_.emplace_back(in, cfg_.channels[l], 3, 2, 1, rng, dtype);
    refine_.emplace_back(cfg_.channels[l], cfg_.channels[l], 3, 1, 1, rng, dtype);
    in = cfg_.channels[l];
  }
  if (cfg_.fpn_enabled)
    for (std::size_t l = 0; l < cfg_.num_blocks; ++l)
      laterals_.emplace_back(cfg_.channels[l], cfg_.fpn_width, 1, 1, 0, rng, dtype);
}

std::vector<FeatureMap> Backbone::extract(const Tensor& images) const {
  Tensor x = images;
  if (x.dim() == 3) x = ops::reshape(x, {1, x.size(0), x.size(1), x.size(2)});
  const std::size_t r = cfg_.input_resolution;
  if (x.dim() != 4 || x.size(1) != 3 || x.size(2) != r || x.size(3) != r) {
    throw std::invalid_argument("backbone.extract: expected images [B,3," + std::to_string(r) + "," +
                                std::to_string(r) + "], got " + shape_str(x.shape()));
  }
  std::vector<FeatureMap> maps;
  for (std::size_t l = 0; l < cfg_.num_blocks; ++l) {
    x = ops::relu(down_[l](x));
    x = ops::relu(refine_[l](x));
    maps.push_back({l + 1, x});
  }
  return maps;
}

std::vector<FeatureMap> Backbone::fpn_fuse(const std::vector<FeatureMap>& maps) const {
  if (!cfg_.fpn_enabled) throw std::logic_error("backbone.fpn_fuse: FPN is disabled in the config");
  if (maps.size() != laterals_.size()) {
    throw std::invalid_argument("backbone.fpn_fuse: expected " + std::to_string(laterals_.size()) +
                                " maps, got " + std::to_string(maps.size()));
  }
  for (std::size_t i = 0; i < maps.size(); ++i) {
    if (maps[i].block_index != i + 1) {
      throw std::invalid_argument("backbone.fpn_fuse: block indices must be 1..L in order; position " +
                                  std::to_string(i) + " holds block " + std::to_string(maps[i].block_index));
    }
  }
  std::vector<FeatureMap> out(maps.size());
  Tensor top_down;
  for (std::size_t i = maps.size(); i-- > 0;) {
    Tensor fused = laterals_[i](maps[i].features);
    if (top_down.defined()) {
      Tensor up = ops::upsample2x_nearest(top_down);
      if (up.shape() != fused.shape()) {
        throw std::invalid_argument("backbone.fpn_fuse: upsampled level " + shape_str(up.shape()) +
                                    " does not match lateral " + shape_str(fused.shape()));
      }
      fused = ops::add(fused, up);
    }
    out[i] = {maps[i].block_index, fused};
    top_down = fused;
  }
  return out;
}

std::vector<FeatureMap> Backbone::forward(const Tensor& images) const {
  auto maps = extract(images);
  return cfg_.fpn_enabled ? fpn_fuse(maps) : maps;
}

void Backbone::collect(ParameterList& out) const {
  for (std::size_t l = 0; l < down_.size(); ++l) {
    const std::string p = "backbone.block" + std::to_string(l + 1);
    down_[l].collect(out, p + ".down");
    refine_[l].collect(out, p + ".refine");
  }
  for (std::size_t l = 0; l < laterals_.size(); ++l)
    laterals_[l].collect(out, "fpn.lateral" + std::to_string(l + 1));
}

}  // namespace pim
