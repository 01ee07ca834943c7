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
#include <string>
#include <vector>

#include "pim/layers.hpp"
#include "pim/selector.hpp"

namespace pim {

enum class CombinerVariant { add, mlp, gcn };

std::string to_string(CombinerVariant v);
CombinerVariant parse_combiner_variant(const std::string& name);

struct CombinerConfig {
  CombinerVariant variant = CombinerVariant::gcn;
  std::size_t gcn_layers = 1;
  // Output nodes of each layer as a fraction of the combiner's input nodes.
  std::vector<double> pooling_ratios{1.0 / 32.0};
  std::size_t hidden_width = 0;  // 0: same as the input width

  // Node budget of each GCN layer for N input nodes: max(1, round(N * ratio)).
  std::vector<std::size_t> node_budgets(std::size_t num_nodes) const;
  void validate() const;
};

// Selected points of every block of one sample, as graph nodes.
struct GraphBatch {
  Tensor nodes;      // [N, C], block order then confidence order
  Tensor adjacency;  // [N, N], row-stochastic
  std::vector<std::size_t> block_of_node;
};

// Cosine-similarity graph over node features: relu(cos) + I, row-normalized.
// Differentiable in the node features.
Tensor similarity_adjacency(const Tensor& nodes);

// Concatenates the selections of one sample (one entry per block).
GraphBatch build_graph(const std::vector<SelectionResult>& selections);

struct GcnOutput {
  Tensor scores;  // [1, C']
  Tensor pooled;  // [N', hidden] after the last layer
  std::vector<std::size_t> layer_nodes;
};

// One GCN layer: H = relu(A X W + b), then soft assignment
// S = softmax(H P + c) over super nodes and mass-normalized pooling
// X' = diag(1 / colsum S) S^T H.
struct GcnLayer {
  Linear propagate;
  Linear assign;
};

class Combiner {
 public:
  // `num_nodes` is the total selected points per sample (fixed by the
  // selector config); the MLP and the node budgets depend on it.
  Combiner(const CombinerConfig& cfg, std::size_t in_width, std::size_t num_nodes,
           std::size_t num_classes, Rng& rng, DType dtype);

  const CombinerConfig& config() const { return cfg_; }
  std::size_t hidden_width() const { return hidden_; }
  std::vector<GcnLayer>& layers() { return layers_; }
  Linear& classifier() { return classifier_; }

  // Scores [1, C'] of one sample from its per-block selections.
  Tensor forward(const std::vector<SelectionResult>& selections) const;

  GcnOutput gcn_forward(const GraphBatch& g) const;
  Tensor mlp_forward(const std::vector<SelectionResult>& selections) const;
  Tensor add_forward(const std::vector<SelectionResult>& selections) const;

  void collect(ParameterList& out) const;

 private:
  CombinerConfig cfg_;
  std::size_t in_width_, num_nodes_, hidden_;
  std::vector<GcnLayer> layers_;
  Linear classifier_;
};

}  // namespace pim
