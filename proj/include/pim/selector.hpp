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

// Weakly supervised selector: every spatial point of a block's feature map
// is classified by that block's linear head, points are ranked by their
// top-class softmax probability, and the top num_selects are kept.

#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "pim/backbone.hpp"
#include "pim/layers.hpp"

namespace pim {

// Per-point class predictions for one block, batched. Row r of every
// matrix is sample r / (H*W), spatial index r % (H*W) in row-major order.
struct PointLogits {
  std::size_t block_index = 0;
  std::size_t batch = 0, height = 0, width = 0;
  Tensor points;  // [B*H*W, C] feature rows the head consumed
  Tensor logits;  // [B*H*W, C']
  Tensor probs;   // softmax of logits over classes

  std::size_t points_per_sample() const { return height * width; }
  std::size_t num_classes() const { return logits.size(1); }
  // Highest class probability of every point of one sample.
  std::vector<double> max_probs(std::size_t sample) const;
};

struct SelectionResult {
  std::size_t height = 0, width = 0;
  std::vector<std::uint8_t> mask;             // H*W, 1 = selected
  std::vector<std::size_t> selected_indices;  // confidence descending, ties by index
  std::vector<std::size_t> dropped_indices;   // ascending
  std::vector<double> selected_confidence;    // max-prob of each selected point
  Tensor selected_features;                   // [num_selected, C]
  std::optional<double> confidence_threshold;

  std::size_t num_selected() const { return selected_indices.size(); }
};

struct SelectorConfig {
  std::vector<std::size_t> num_selects;  // one per block
};

// Selection counts tuned for 384px inputs, and the map sizes they were
// tuned on (a 4-stage backbone with stride-4 stem).
inline constexpr std::size_t kReferenceNumSelects[] = {256, 128, 64, 32};
inline constexpr std::size_t kReferenceMapSize[] = {96, 48, 24, 12};

// Reference counts scaled by the ratio of map areas:
// max(1, round(reference * H*W / reference_area)), capped at H*W. Blocks past
// the fourth reuse the last reference ratio.
std::vector<std::size_t> scaled_num_selects(const BackboneConfig& cfg);

PointLogits classify_points(const FeatureMap& fmap, const Linear& head);

// Top-k of one sample. Gradients reach selected_features through the
// gathered feature values; the ranking itself is a constant.
SelectionResult select(const PointLogits& pl, std::size_t sample, std::size_t k);

// Removes selected points whose max-prob is below tau (they join the
// dropped set). Evaluation only: the features are re-gathered without tape
// history. May leave the selection empty.
SelectionResult threshold_filter(const SelectionResult& sr, const PointLogits& pl,
                                 std::size_t sample, double tau);

// Global row indices (into PointLogits matrices) of spatial indices of one sample.
std::vector<std::size_t> global_rows(const PointLogits& pl, std::size_t sample,
                                     std::span<const std::size_t> spatial);

// One linear head per block.
class Selector {
 public:
  Selector(const std::vector<std::size_t>& in_widths, std::size_t num_classes,
           SelectorConfig cfg, Rng& rng, DType dtype);

  const SelectorConfig& config() const { return cfg_; }
  Linear& head(std::size_t block) { return heads_.at(block - 1); }
  const Linear& head(std::size_t block) const { return heads_.at(block - 1); }

  std::vector<PointLogits> classify(const std::vector<FeatureMap>& maps) const;
  // [block][sample]
  std::vector<std::vector<SelectionResult>> select_all(const std::vector<PointLogits>& pls) const;

  void collect(ParameterList& out) const;

 private:
  SelectorConfig cfg_;
  std::vector<Linear> heads_;
};

}  // namespace pim
