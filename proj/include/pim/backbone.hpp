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
#include <vector>

#include "pim/layers.hpp"

namespace pim {

struct BackboneConfig {
  std::size_t num_blocks = 4;
  std::size_t input_resolution = 64;
  std::vector<std::size_t> channels{16, 32, 64, 64};  // one width per block
  std::size_t fpn_width = 64;
  bool fpn_enabled = true;

  // Spatial extent of block `block` (1-based): input_resolution / 2^block.
  std::size_t map_size(std::size_t block) const;
  // Channel width the selector sees for a block.
  std::size_t output_width(std::size_t block) const;
  void validate() const;
};

// Output of one block: features [B, C, H, W].
struct FeatureMap {
  std::size_t block_index = 0;  // 1-based
  Tensor features;

  std::size_t batch() const { return features.size(0); }
  std::size_t channels() const { return features.size(1); }
  std::size_t height() const { return features.size(2); }
  std::size_t width() const { return features.size(3); }
};

// Plain conv net: each block is a stride-2 3x3 conv + ReLU followed by a
// stride-1 3x3 conv + ReLU. The optional FPN adds a 1x1 lateral projection
// per block and a nearest-neighbour top-down pathway.
class Backbone {
 public:
  Backbone(const BackboneConfig& cfg, Rng& rng, DType dtype);

  const BackboneConfig& config() const { return cfg_; }

  // images [B,3,R,R] (or a single [3,R,R]) -> L pre-FPN maps.
  std::vector<FeatureMap> extract(const Tensor& images) const;
  // Top-down fusion; every output has width fpn_width.
  std::vector<FeatureMap> fpn_fuse(const std::vector<FeatureMap>& maps) const;
  // extract, then fpn_fuse when enabled.
  std::vector<FeatureMap> forward(const Tensor& images) const;

  Conv2d& lateral(std::size_t block) { return laterals_.at(block - 1); }
  void collect(ParameterList& out) const;

 private:
  BackboneConfig cfg_;
  std::vector<Conv2d> down_, refine_, laterals_;
};

}  // namespace pim
