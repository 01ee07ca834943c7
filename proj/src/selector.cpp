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

#include "pim/selector.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "pim/ops.hpp"

namespace pim {

std::vector<double> PointLogits::max_probs(std::size_t sample) const {
  if (sample >= batch) throw std::out_of_range("PointLogits::max_probs: sample out of range");
  const std::size_t hw = points_per_sample(), c = num_classes();
  std::vector<double> out(hw);
  dispatch(probs.dtype(), [&]<class T>() {
    auto p = probs.data<T>();
    for (std::size_t s = 0; s < hw; ++s) {
      const T* row = p.data() + (sample * hw + s) * c;
      out[s] = static_cast<double>(*std::max_element(row, row + c));
    }
  });
  return out;
}

std::vector<std::size_t> scaled_num_selects(const BackboneConfig& cfg) {
  constexpr std::size_t refs = std::size(kReferenceNumSelects);
  std::vector<std::size_t> out;
  for (std::size_t l = 1; l <= cfg.num_blocks; ++l) {
    const std::size_t r = std::min(l, refs) - 1;
    const double area = static_cast<double>(cfg.map_size(l) * cfg.map_size(l));
    const double ref_area = static_cast<double>(kReferenceMapSize[r] * kReferenceMapSize[r]);
    const double k = std::round(static_cast<double>(kReferenceNumSelects[r]) * area / ref_area);
    out.push_back(std::clamp<std::size_t>(static_cast<std::size_t>(k), 1, cfg.map_size(l) * cfg.map_size(l)));
  }
  return out;
}

PointLogits classify_points(const FeatureMap& fmap, const Linear& head) {
  if (fmap.features.dim() != 4) {
    throw std::invalid_argument("classify_points: feature map must be [B,C,H,W], got " +
                                shape_str(fmap.features.shape()));
  }
  if (fmap.channels() != head.in_features()) {
    throw std::invalid_argument("classify_points: feature width " + std::to_string(fmap.channels()) +
                                " does not match head input width " + std::to_string(head.in_features()));
  }
  PointLogits pl;
  pl.block_index = fmap.block_index;
  pl.batch = fmap.batch();
  pl.height = fmap.height();
  pl.width = fmap.width();
  pl.points = ops::to_points(fmap.features);
  pl.logits = head(pl.points);
  pl.probs = ops::softmax(pl.logits, 1);
  return pl;
}

std::vector<std::size_t> global_rows(const PointLogits& pl, std::size_t sample,
                                     std::span<const std::size_t> spatial) {
  std::vector<std::size_t> rows(spatial.size());
  const std::size_t base = sample * pl.points_per_sample();
  std::ranges::transform(spatial, rows.begin(), [base](std::size_t s) { return base + s; });
  return rows;
}

SelectionResult select(const PointLogits& pl, std::size_t sample, std::size_t k) {
  const std::size_t hw = pl.points_per_sample();
  if (k < 1 || k > hw) {
    throw std::invalid_argument("select: num_selects " + std::to_string(k) + " outside [1, " +
                                std::to_string(hw) + "] for block " + std::to_string(pl.block_index));
  }
  const std::vector<double> conf = pl.max_probs(sample);
  std::vector<std::size_t> order(hw);
  std::iota(order.begin(), order.end(), 0);
  std::ranges::stable_sort(order, [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });

  SelectionResult sr;
  sr.height = pl.height;
  sr.width = pl.width;
  sr.mask.assign(hw, 0);
  sr.selected_indices.assign(order.begin(), order.begin() + static_cast<long>(k));
  for (auto s : sr.selected_indices) {
    sr.mask[s] = 1;
    sr.selected_confidence.push_back(conf[s]);
  }
  for (std::size_t s = 0; s < hw; ++s)
    if (!sr.mask[s]) sr.dropped_indices.push_back(s);
  sr.selected_features = ops::gather_rows(pl.points, global_rows(pl, sample, sr.selected_indices));
  return sr;
}

SelectionResult threshold_filter(const SelectionResult& sr, const PointLogits& pl,
                                 std::size_t sample, double tau) {
  if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("threshold_filter: tau must lie in (0, 1)");
  SelectionResult out;
  out.height = sr.height;
  out.width = sr.width;
  out.mask = sr.mask;
  out.dropped_indices = sr.dropped_indices;
  out.confidence_threshold = tau;
  for (std::size_t i = 0; i < sr.selected_indices.size(); ++i) {
    const std::size_t s = sr.selected_indices[i];
    if (sr.selected_confidence[i] >= tau) {
      out.selected_indices.push_back(s);
      out.selected_confidence.push_back(sr.selected_confidence[i]);
    } else {
      out.mask[s] = 0;
      out.dropped_indices.push_back(s);
    }
  }
  std::ranges::sort(out.dropped_indices);
  NoGradGuard no_grad;
  out.selected_features = ops::gather_rows(pl.points.detach(), global_rows(pl, sample, out.selected_indices));
  return out;
}

Selector::Selector(const std::vector<std::size_t>& in_widths, std::size_t num_classes,
                   SelectorConfig cfg, Rng& rng, DType dtype)
    : cfg_(std::move(cfg)) {
  if (cfg_.num_selects.size() != in_widths.size()) {
    throw std::invalid_argument("selector: " + std::to_string(cfg_.num_selects.size()) +
                                " num_selects for " + std::to_string(in_widths.size()) + " blocks");
  }
  for (auto w : in_widths) heads_.emplace_back(w, num_classes, rng, dtype);
}

std::vector<PointLogits> Selector::classify(const std::vector<FeatureMap>& maps) const {
  if (maps.size() != heads_.size()) throw std::invalid_argument("selector: map count does not match head count");
  std::vector<PointLogits> out;
  for (std::size_t l = 0; l < maps.size(); ++l) out.push_back(classify_points(maps[l], heads_[l]));
  return out;
}

std::vector<std::vector<SelectionResult>> Selector::select_all(const std::vector<PointLogits>& pls) const {
  std::vector<std::vector<SelectionResult>> out(pls.size());
  for (std::size_t l = 0; l < pls.size(); ++l)
    for (std::size_t b = 0; b < pls[l].batch; ++b) out[l].push_back(select(pls[l], b, cfg_.num_selects[l]));
  return out;
}

void Selector::collect(ParameterList& out) const {
  for (std::size_t l = 0; l < heads_.size(); ++l) heads_[l].collect(out, "selector.head" + std::to_string(l + 1));
}

}  // namespace pim
