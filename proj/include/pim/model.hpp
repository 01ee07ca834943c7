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
#include <optional>
#include <vector>

#include "pim/backbone.hpp"
#include "pim/combiner.hpp"
#include "pim/losses.hpp"
#include "pim/selector.hpp"

namespace pim {

struct ModelConfig {
  BackboneConfig backbone;
  SelectorConfig selector;  // empty num_selects: scaled_num_selects(backbone)
  CombinerConfig combiner;
  std::size_t num_classes = 10;
  bool selector_enabled = true;
  bool combiner_enabled = true;
  DType dtype = DType::f32;

  // Copy with derived values filled in and everything checked.
  ModelConfig resolved() const;
};

struct ForwardResult {
  std::vector<FeatureMap> maps;
  std::vector<PointLogits> points;                        // per block
  std::vector<std::vector<SelectionResult>> selections;  // [block][sample]
  Tensor combiner_logits;                                 // [B, C']
  Tensor backbone_logits;                                 // [B, C'], selector disabled only
};

// Backbone + FPN + weakly supervised selector + combiner. With the selector
// disabled the model is a plain classifier: global average pool of the
// finest map the backbone hands out (the FPN output when FPN is on, the last
// block otherwise) followed by a linear layer.
class PimModel {
 public:
  PimModel(const ModelConfig& cfg, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  Backbone& backbone() { return backbone_; }
  Selector& selector() { return *selector_; }
  Combiner& combiner() { return *combiner_; }
  const Selector& selector() const { return *selector_; }
  const Combiner& combiner() const { return *combiner_; }

  ForwardResult forward(const Tensor& images) const;
  LossBundle losses(const ForwardResult& fr, const std::vector<std::size_t>& labels,
                    const LossWeights& w) const;

  // Per-sample probability vectors of every head: z_l of each block, then
  // the combiner softmax (selector on), or the single backbone head.
  // Result is [sample][head][class].
  std::vector<std::vector<std::vector<double>>> head_scores(const ForwardResult& fr) const;
  std::size_t num_heads() const;

  const ParameterList& parameters() const { return params_; }

 private:
  ModelConfig cfg_;
  Backbone backbone_;
  std::optional<Selector> selector_;
  std::optional<Combiner> combiner_;
  std::optional<Linear> backbone_head_;
  ParameterList params_;
};

}  // namespace pim
