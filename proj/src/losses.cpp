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

#include "pim/losses.hpp"

#include <iostream>
#include <stdexcept>
#include <string>

#include "pim/ops.hpp"

namespace pim {

namespace {

void check_labels(const char* op, const std::vector<std::size_t>& labels, std::size_t batch,
                  std::size_t classes) {
  if (labels.size() != batch) {
    throw std::invalid_argument(std::string(op) + ": " + std::to_string(labels.size()) +
                                " labels for batch of " + std::to_string(batch));
  }
  for (auto y : labels)
    if (y >= classes) {
      throw std::invalid_argument(std::string(op) + ": label " + std::to_string(y) + " outside [0, " +
                                  std::to_string(classes) + ")");
    }
}

// mean_b -log(clamp(p[b, label_b]))
Tensor nll_of_probs(const Tensor& probs, const std::vector<std::size_t>& labels) {
  Tensor picked = ops::clamp(ops::pick(probs, labels), kLogEpsilon, 1.0);
  return ops::scale(ops::mean_all(ops::log(picked)), -1.0);
}

// Mean of the probability rows at `spatial` for one sample, as [1, C'].
Tensor region_mean(const PointLogits& pl, std::size_t sample, const std::vector<std::size_t>& spatial) {
  Tensor rows = ops::gather_rows(pl.probs, global_rows(pl, sample, spatial));
  return ops::reshape(ops::mean(rows, 0), {1, pl.num_classes()});
}

Tensor accumulate(const Tensor& acc, const Tensor& term) {
  return acc.defined() ? ops::add(acc, term) : term;
}

}  // namespace

void LossWeights::validate() const {
  if (block < 0 || selected < 0 || flatten < 0 || combiner < 0)
    throw std::invalid_argument("loss weights must be non-negative");
}

LossTerm block_average_loss(const std::vector<PointLogits>& pls, const std::vector<std::size_t>& labels) {
  if (pls.empty()) throw std::invalid_argument("block_average_loss: no blocks");
  LossTerm out;
  for (const auto& pl : pls) {
    check_labels("block_average_loss", labels, pl.batch, pl.num_classes());
    Tensor per_sample = ops::reshape(pl.probs, {pl.batch, pl.points_per_sample(), pl.num_classes()});
    Tensor z = ops::mean(per_sample, 1);
    out.summary.push_back(z);
    out.loss = accumulate(out.loss, nll_of_probs(z, labels));
  }
  return out;
}

LossTerm selected_loss(const std::vector<PointLogits>& pls,
                       const std::vector<std::vector<SelectionResult>>& selections,
                       const std::vector<std::size_t>& labels) {
  if (pls.empty() || selections.size() != pls.size())
    throw std::invalid_argument("selected_loss: selections do not match blocks");
  LossTerm out;
  for (std::size_t l = 0; l < pls.size(); ++l) {
    const auto& pl = pls[l];
    check_labels("selected_loss", labels, pl.batch, pl.num_classes());
    std::vector<Tensor> rows;
    for (std::size_t b = 0; b < pl.batch; ++b) {
      const auto& sel = selections[l].at(b).selected_indices;
      if (sel.empty()) {
        throw std::invalid_argument("selected_loss: empty selection in block " + std::to_string(pl.block_index));
      }
      rows.push_back(region_mean(pl, b, sel));
    }
    Tensor h = ops::concat(rows, 0);
    out.summary.push_back(h);
    out.loss = accumulate(out.loss, nll_of_probs(h, labels));
  }
  return out;
}

LossTerm flatten_loss(const std::vector<PointLogits>& pls,
                      const std::vector<std::vector<SelectionResult>>& selections) {
  if (pls.empty() || selections.size() != pls.size())
    throw std::invalid_argument("flatten_loss: selections do not match blocks");
  LossTerm out;
  const DType dtype = pls.front().probs.dtype();
  for (std::size_t l = 0; l < pls.size(); ++l) {
    const auto& pl = pls[l];
    const std::size_t classes = pl.num_classes();
    Tensor block_total;
    std::vector<Tensor> rows;
    for (std::size_t b = 0; b < pl.batch; ++b) {
      const auto& dropped = selections[l].at(b).dropped_indices;
      if (dropped.empty()) {
        std::cerr << "warning: flatten_loss: block " << pl.block_index << " sample " << b
                  << " has no dropped points; term contributes 0\n";
        rows.push_back(Tensor::full({1, classes}, 1.0 / static_cast<double>(classes), dtype));
        continue;
      }
      Tensor n = region_mean(pl, b, dropped);
      rows.push_back(n);
      Tensor flat = ops::clamp(n, kLogEpsilon, 1.0 - kLogEpsilon);
      Tensor term = ops::scale(ops::sum_all(ops::log(ops::add_scalar(ops::scale(flat, -1.0), 1.0))), -1.0);
      block_total = accumulate(block_total, term);
    }
    out.summary.push_back(ops::concat(rows, 0));
    if (!block_total.defined()) block_total = Tensor::zeros({1}, dtype);
    out.loss = accumulate(out.loss, ops::scale(block_total, 1.0 / static_cast<double>(pl.batch)));
  }
  return out;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<std::size_t>& labels) {
  if (logits.dim() != 2) throw std::invalid_argument("cross_entropy: logits must be [B, C'], got " + shape_str(logits.shape()));
  check_labels("cross_entropy", labels, logits.size(0), logits.size(1));
  return ops::scale(ops::mean_all(ops::pick(ops::log_softmax(logits, 1), labels)), -1.0);
}

double LossBundle::weighted_sum(const LossWeights& w, double block, double selected, double flatten,
                                double combiner) {
  double total = w.block * block;
  total = total + w.selected * selected;
  total = total + w.flatten * flatten;
  total = total + w.combiner * combiner;
  return total;
}

LossBundle total_loss(LossTerm block, LossTerm selected, LossTerm flatten, Tensor combiner,
                      const LossWeights& w) {
  w.validate();
  LossBundle out;
  out.weights = w;
  DType dtype = DType::f64;
  for (const Tensor* t : {&block.loss, &selected.loss, &flatten.loss, &combiner})
    if (t->defined()) dtype = t->dtype();
  auto or_zero = [dtype](const Tensor& t) { return t.defined() ? t : Tensor::zeros({1}, dtype); };
  out.block = or_zero(block.loss);
  out.selected = or_zero(selected.loss);
  out.flatten = or_zero(flatten.loss);
  out.combiner = or_zero(combiner);
  out.z = std::move(block.summary);
  out.h = std::move(selected.summary);
  out.n = std::move(flatten.summary);
  Tensor total = ops::scale(out.block, w.block);
  total = ops::add(total, ops::scale(out.selected, w.selected));
  total = ops::add(total, ops::scale(out.flatten, w.flatten));
  total = ops::add(total, ops::scale(out.combiner, w.combiner));
  out.total = total;
  return out;
}

}  // namespace pim
