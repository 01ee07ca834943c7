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

#include "pim/model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "pim/ops.hpp"

namespace pim {

namespace {

// Parameter initialisation streams are keyed by component so that toggling
// one component leaves the others' initial weights unchanged.
enum Stream : std::uint64_t { kBackbone = 1, kSelector = 2, kCombiner = 3, kBackboneHead = 4 };

std::vector<std::vector<double>> softmax_rows(const Tensor& logits) {
  std::vector<std::vector<double>> out;
  const std::size_t b = logits.size(0), c = logits.size(1);
  const auto v = logits.values();
  for (std::size_t i = 0; i < b; ++i) {
    double mx = v[i * c];
    for (std::size_t j = 1; j < c; ++j) mx = std::max(mx, v[i * c + j]);
    std::vector<double> row(c);
    double total = 0;
    for (std::size_t j = 0; j < c; ++j) total += row[j] = std::exp(v[i * c + j] - mx);
    for (auto& r : row) r /= total;
    out.push_back(std::move(row));
  }
  return out;
}

}  // namespace

ModelConfig ModelConfig::resolved() const {
  ModelConfig out = *this;
  out.backbone.validate();
  if (num_classes < 2) throw std::invalid_argument("model: num_classes must be at least 2");
  if (combiner_enabled && !selector_enabled)
    throw std::invalid_argument("model: the combiner consumes selections; enable the selector too");
  if (out.selector.num_selects.empty()) out.selector.num_selects = scaled_num_selects(out.backbone);
  if (out.selector.num_selects.size() != out.backbone.num_blocks) {
    throw std::invalid_argument("model: " + std::to_string(out.selector.num_selects.size()) +
                                " num_selects for " + std::to_string(out.backbone.num_blocks) + " blocks");
  }
  for (std::size_t l = 1; l <= out.backbone.num_blocks; ++l) {
    const std::size_t k = out.selector.num_selects[l - 1], hw = out.backbone.map_size(l) * out.backbone.map_size(l);
    if (k < 1 || k > hw) {
      throw std::invalid_argument("model: num_selects " + std::to_string(k) + " for block " + std::to_string(l) +
                                  " outside [1, " + std::to_string(hw) + "]");
    }
  }
  if (combiner_enabled) {
    out.combiner.validate();
    for (std::size_t l = 2; l <= out.backbone.num_blocks; ++l)
      if (out.backbone.output_width(l) != out.backbone.output_width(1))
        throw std::invalid_argument("model: the combiner needs a common width; enable FPN or use equal block widths");
  }
  return out;
}

PimModel::PimModel(const ModelConfig& cfg, std::uint64_t seed)
    : cfg_(cfg.resolved()),
      backbone_([&] {
        Rng rng = Rng::derive(seed, kBackbone);
        return Backbone(cfg_.backbone, rng, cfg_.dtype);
      }()) {
  backbone_.collect(params_);
  const std::size_t blocks = cfg_.backbone.num_blocks;
  if (cfg_.selector_enabled) {
    std::vector<std::size_t> widths;
    for (std::size_t l = 1; l <= blocks; ++l) widths.push_back(cfg_.backbone.output_width(l));
    Rng rng = Rng::derive(seed, kSelector);
    selector_.emplace(widths, cfg_.num_classes, cfg_.selector, rng, cfg_.dtype);
    selector_->collect(params_);
  }
  if (cfg_.combiner_enabled) {
    const auto& ks = cfg_.selector.num_selects;
    const std::size_t nodes = std::accumulate(ks.begin(), ks.end(), std::size_t{0});
    Rng rng = Rng::derive(seed, kCombiner);
    combiner_.emplace(cfg_.combiner, cfg_.backbone.output_width(1), nodes, cfg_.num_classes, rng, cfg_.dtype);
    combiner_->collect(params_);
  }
  if (!cfg_.selector_enabled) {
    Rng rng = Rng::derive(seed, kBackboneHead);
    const std::size_t width = cfg_.backbone.fpn_enabled ? cfg_.backbone.fpn_width : cfg_.backbone.channels.back();
    backbone_head_.emplace(width, cfg_.num_classes, rng, cfg_.dtype);
    backbone_head_->collect(params_, "backbone_head");
  }
}

ForwardResult PimModel::forward(const Tensor& images) const {
  ForwardResult fr;
  Tensor x = images.dtype() == cfg_.dtype ? images : images.to(cfg_.dtype);
  fr.maps = backbone_.forward(x);
  if (!cfg_.selector_enabled) {
    const FeatureMap& fm = cfg_.backbone.fpn_enabled ? fr.maps.front() : fr.maps.back();
    Tensor rows = ops::to_points(fm.features);
    Tensor pooled = ops::mean(ops::reshape(rows, {fm.batch(), fm.height() * fm.width(), fm.channels()}), 1);
    fr.backbone_logits = (*backbone_head_)(pooled);
    return fr;
  }
  fr.points = selector_->classify(fr.maps);
  fr.selections = selector_->select_all(fr.points);
  if (cfg_.combiner_enabled) {
    const std::size_t batch = fr.maps.front().batch();
    std::vector<Tensor> rows;
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<SelectionResult> per_block;
      for (const auto& block : fr.selections) per_block.push_back(block[b]);
      rows.push_back(combiner_->forward(per_block));
    }
    fr.combiner_logits = rows.size() == 1 ? rows.front() : ops::concat(rows, 0);
  }
  return fr;
}

LossBundle PimModel::losses(const ForwardResult& fr, const std::vector<std::size_t>& labels,
                            const LossWeights& w) const {
  if (!cfg_.selector_enabled) {
    LossWeights only_head{0.0, 0.0, 0.0, 1.0};
    return total_loss({}, {}, {}, cross_entropy(fr.backbone_logits, labels), only_head);
  }
  LossTerm block = block_average_loss(fr.points, labels);
  LossTerm selected = selected_loss(fr.points, fr.selections, labels);
  LossTerm flatten = flatten_loss(fr.points, fr.selections);
  Tensor comb = cfg_.combiner_enabled ? cross_entropy(fr.combiner_logits, labels) : Tensor();
  return total_loss(std::move(block), std::move(selected), std::move(flatten), comb, w);
}

std::size_t PimModel::num_heads() const {
  if (!cfg_.selector_enabled) return 1;
  return cfg_.backbone.num_blocks + (cfg_.combiner_enabled ? 1 : 0);
}

std::vector<std::vector<std::vector<double>>> PimModel::head_scores(const ForwardResult& fr) const {
  std::vector<std::vector<std::vector<double>>> out;
  if (!cfg_.selector_enabled) {
    for (auto& row : softmax_rows(fr.backbone_logits)) out.push_back({std::move(row)});
    return out;
  }
  const std::size_t batch = fr.points.front().batch;
  out.resize(batch);
  for (const auto& pl : fr.points) {
    const std::size_t hw = pl.points_per_sample(), c = pl.num_classes();
    const auto probs = pl.probs.values();
    for (std::size_t b = 0; b < batch; ++b) {
      std::vector<double> z(c, 0.0);
      for (std::size_t s = 0; s < hw; ++s)
        for (std::size_t j = 0; j < c; ++j) z[j] += probs[(b * hw + s) * c + j];
      for (auto& v : z) v /= static_cast<double>(hw);
      out[b].push_back(std::move(z));
    }
  }
  if (cfg_.combiner_enabled) {
    auto rows = softmax_rows(fr.combiner_logits);
    for (std::size_t b = 0; b < batch; ++b) out[b].push_back(std::move(rows[b]));
  }
  return out;
}

}  // namespace pim
