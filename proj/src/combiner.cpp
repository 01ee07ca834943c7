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

#include "pim/combiner.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "pim/ops.hpp"

namespace pim {

std::string to_string(CombinerVariant v) {
  switch (v) {
    case CombinerVariant::add: return "add";
    case CombinerVariant::mlp: return "mlp";
    case CombinerVariant::gcn: return "gcn";
  }
  return "?";
}

CombinerVariant parse_combiner_variant(const std::string& name) {
  if (name == "add" || name == "ADD") return CombinerVariant::add;
  if (name == "mlp" || name == "MLP") return CombinerVariant::mlp;
  if (name == "gcn" || name == "GCN") return CombinerVariant::gcn;
  throw std::invalid_argument("unknown combiner variant '" + name + "' (expected add, mlp or gcn)");
}

std::vector<std::size_t> CombinerConfig::node_budgets(std::size_t num_nodes) const {
  std::vector<std::size_t> out;
  for (double r : pooling_ratios) {
    if (!(r > 0.0) || r > 1.0) {
      throw std::invalid_argument("combiner: pooling ratio " + std::to_string(r) +
                                  " would yield more super nodes than the " + std::to_string(num_nodes) +
                                  " input nodes (ratio must lie in (0, 1])");
    }
    const auto n = static_cast<std::size_t>(std::llround(static_cast<double>(num_nodes) * r));
    out.push_back(std::max<std::size_t>(1, n));
  }
  return out;
}

void CombinerConfig::validate() const {
  if (variant != CombinerVariant::gcn) return;
  if (gcn_layers == 0) throw std::invalid_argument("combiner: gcn_layers must be positive");
  if (pooling_ratios.size() != gcn_layers) {
    throw std::invalid_argument("combiner: " + std::to_string(pooling_ratios.size()) +
                                " pooling ratios for " + std::to_string(gcn_layers) + " GCN layers");
  }
}

Tensor similarity_adjacency(const Tensor& nodes) {
  Tensor unit = ops::l2_normalize_rows(nodes);
  Tensor cosine = ops::matmul(unit, ops::transpose(unit));
  Tensor self_loops = Tensor::eye(nodes.size(0), nodes.dtype());
  return ops::normalize_rows_sum(ops::add(ops::relu(cosine), self_loops));
}

GraphBatch build_graph(const std::vector<SelectionResult>& selections) {
  std::vector<Tensor> parts;
  GraphBatch g;
  for (std::size_t l = 0; l < selections.size(); ++l) {
    const auto& sr = selections[l];
    if (sr.num_selected() == 0) continue;
    parts.push_back(sr.selected_features);
    g.block_of_node.insert(g.block_of_node.end(), sr.num_selected(), l + 1);
  }
  if (parts.empty()) throw std::invalid_argument("build_graph: no selected points (N = 0)");
  g.nodes = parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
  g.adjacency = similarity_adjacency(g.nodes);
  return g;
}

Combiner::Combiner(const CombinerConfig& cfg, std::size_t in_width, std::size_t num_nodes,
                   std::size_t num_classes, Rng& rng, DType dtype)
    : cfg_(cfg), in_width_(in_width), num_nodes_(num_nodes),
      hidden_(cfg.hidden_width == 0 ? in_width : cfg.hidden_width) {
  cfg_.validate();
  if (num_nodes_ == 0) throw std::invalid_argument("combiner: zero input nodes");
  switch (cfg_.variant) {
    case CombinerVariant::gcn: {
      std::size_t width = in_width_;
      for (std::size_t budget : cfg_.node_budgets(num_nodes_)) {
        GcnLayer layer{Linear(width, hidden_, rng, dtype), Linear(hidden_, budget, rng, dtype)};
        layers_.push_back(std::move(layer));
        width = hidden_;
      }
      classifier_ = Linear(hidden_, num_classes, rng, dtype);
      break;
    }
    case CombinerVariant::mlp:
      classifier_ = Linear(num_nodes_ * in_width_, num_classes, rng, dtype);
      break;
    case CombinerVariant::add:
      classifier_ = Linear(in_width_, num_classes, rng, dtype);
      break;
  }
}

GcnOutput Combiner::gcn_forward(const GraphBatch& g) const {
  if (cfg_.variant != CombinerVariant::gcn) throw std::logic_error("gcn_forward: combiner variant is not gcn");
  Tensor x = g.nodes;
  Tensor adjacency = g.adjacency;
  GcnOutput out;
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const auto& layer = layers_[j];
    if (j > 0) adjacency = similarity_adjacency(x);
    const std::size_t budget = layer.assign.out_features();
    if (budget > x.size(0)) {
      throw std::invalid_argument("gcn_forward: layer " + std::to_string(j + 1) + " pools " +
                                  std::to_string(x.size(0)) + " nodes into " + std::to_string(budget) +
                                  " super nodes");
    }
    Tensor h = ops::relu(layer.propagate(ops::matmul(adjacency, x)));
    Tensor assignment = ops::softmax(layer.assign(h), 1);
    x = ops::matmul(ops::normalize_rows_sum(ops::transpose(assignment)), h);
    out.layer_nodes.push_back(x.size(0));
  }
  out.pooled = x;
  Tensor summary = ops::reshape(ops::mean(x, 0), {1, hidden_});
  out.scores = classifier_(summary);
  return out;
}

Tensor Combiner::mlp_forward(const std::vector<SelectionResult>& selections) const {
  std::vector<Tensor> parts;
  std::size_t n = 0;
  for (const auto& sr : selections) {
    n += sr.num_selected();
    if (sr.num_selected() > 0) parts.push_back(sr.selected_features);
  }
  if (n != num_nodes_) {
    throw std::invalid_argument("mlp_forward: " + std::to_string(n) + " selected points but the MLP was built for " +
                                std::to_string(num_nodes_));
  }
  Tensor nodes = parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
  return classifier_(ops::reshape(nodes, {1, nodes.numel()}));
}

Tensor Combiner::add_forward(const std::vector<SelectionResult>& selections) const {
  std::vector<Tensor> parts;
  for (const auto& sr : selections)
    if (sr.num_selected() > 0) parts.push_back(sr.selected_features);
  if (parts.empty()) throw std::invalid_argument("add_forward: no selected points");
  Tensor nodes = parts.size() == 1 ? parts.front() : ops::concat(parts, 0);
  return classifier_(ops::reshape(ops::mean(nodes, 0), {1, in_width_}));
}

Tensor Combiner::forward(const std::vector<SelectionResult>& selections) const {
  switch (cfg_.variant) {
    case CombinerVariant::gcn: return gcn_forward(build_graph(selections)).scores;
    case CombinerVariant::mlp: return mlp_forward(selections);
    case CombinerVariant::add: return add_forward(selections);
  }
  throw std::logic_error("combiner: unknown variant");
}

void Combiner::collect(ParameterList& out) const {
  for (std::size_t j = 0; j < layers_.size(); ++j) {
    const std::string p = "combiner.gcn" + std::to_string(j + 1);
    layers_[j].propagate.collect(out, p + ".propagate");
    layers_[j].assign.collect(out, p + ".assign");
  }
  classifier_.collect(out, "combiner.classifier");
}

}  // namespace pim
