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

#include "pim/evaluate.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include "json.hpp"
#include "pim/image.hpp"

namespace pim {

namespace fs = std::filesystem;

std::size_t argmax(const std::vector<double>& v) {
  return std::size_t(std::max_element(v.begin(), v.end()) - v.begin());
}

std::vector<std::size_t> rank_heads(const std::vector<std::vector<double>>& heads, EnsembleRank rank) {
  std::vector<std::size_t> order(heads.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  if (rank == EnsembleRank::confidence) {
    std::vector<double> conf;
    for (const auto& h : heads) conf.push_back(*std::max_element(h.begin(), h.end()));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return conf[a] > conf[b]; });
  }
  return order;
}

namespace {

// Sum of the top-k heads, taken in head order so the result depends only on
// which heads are in, not on how ties in confidence were broken.
std::vector<double> ensemble_sum(const std::vector<std::vector<double>>& heads, std::size_t k, EnsembleRank rank) {
  if (k == 0 || k > heads.size()) {
    throw std::invalid_argument("ensemble: k = " + std::to_string(k) + " but there are " +
                                std::to_string(heads.size()) + " heads");
  }
  const auto order = rank_heads(heads, rank);
  std::vector<char> chosen(heads.size(), 0);
  for (std::size_t i = 0; i < k; ++i) chosen[order[i]] = 1;
  std::vector<double> sum(heads.front().size(), 0.0);
  for (std::size_t h = 0; h < heads.size(); ++h)
    if (chosen[h])
      for (std::size_t j = 0; j < sum.size(); ++j) sum[j] += heads[h][j];
  return sum;
}

}  // namespace

std::vector<double> ensemble_scores(const std::vector<std::vector<double>>& heads, std::size_t k,
                                    EnsembleRank rank) {
  auto avg = ensemble_sum(heads, k, rank);
  for (auto& v : avg) v /= double(k);
  return avg;
}

// Argmax of the sum: dividing by k can round two distinct sums into a tie.
std::size_t ensemble_predict(const std::vector<std::vector<double>>& heads, std::size_t k, EnsembleRank rank) {
  return argmax(ensemble_sum(heads, k, rank));
}

AccuracyTable accuracy_table(const std::vector<EvalRecord>& records, const std::vector<std::string>& names,
                             std::size_t max_k, EnsembleRank rank) {
  AccuracyTable t;
  t.head_names = names;
  t.images = records.size();
  t.head_accuracy.assign(names.size(), 0.0);
  t.topk_accuracy.assign(max_k, 0.0);
  if (max_k > names.size()) {
    throw std::invalid_argument("evaluate: k = " + std::to_string(max_k) + " exceeds the " +
                                std::to_string(names.size()) + " heads of this model");
  }
  for (const auto& r : records) {
    for (std::size_t h = 0; h < names.size(); ++h) t.head_accuracy[h] += argmax(r.heads[h]) == r.label;
    for (std::size_t k = 1; k <= max_k; ++k) t.topk_accuracy[k - 1] += ensemble_predict(r.heads, k, rank) == r.label;
  }
  const double n = std::max<double>(1.0, double(records.size()));
  for (auto& a : t.head_accuracy) a /= n;
  for (auto& a : t.topk_accuracy) a /= n;
  return t;
}

std::vector<std::string> head_names(const PimModel& model) {
  if (!model.config().selector_enabled) return {"backbone"};
  std::vector<std::string> names;
  for (std::size_t l = 1; l <= model.config().backbone.num_blocks; ++l) names.push_back("block" + std::to_string(l));
  if (model.config().combiner_enabled) names.push_back("combiner");
  return names;
}

namespace {

std::vector<double> softmax_row(const Tensor& logits) {
  auto v = logits.values();
  const double mx = *std::max_element(v.begin(), v.end());
  double total = 0;
  for (auto& x : v) total += x = std::exp(x - mx);
  for (auto& x : v) x /= total;
  return v;
}

std::vector<double> mean_probs(const PointLogits& pl, std::size_t sample, const std::vector<std::size_t>& spatial) {
  const std::size_t c = pl.num_classes(), hw = pl.points_per_sample();
  const auto probs = pl.probs.values();
  std::vector<double> out(c, 0.0);
  for (auto s : spatial)
    for (std::size_t j = 0; j < c; ++j) out[j] += probs[(sample * hw + s) * c + j];
  for (auto& v : out) v /= double(std::max<std::size_t>(1, spatial.size()));
  return out;
}

// Runs the model over the test view of every image in dataset order.
template <class F>
void for_each_batch(const PimModel& model, const Dataset& data, const std::vector<Image>& scaled,
                    const AugmentConfig& augment, std::size_t batch_size, F&& f) {
  std::vector<std::size_t> order(data.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  BatchLoader loader(data, scaled, order, batch_size, AugmentMode::test, 0, 0, augment, model.config().dtype, 2);
  NoGradGuard no_grad;
  while (auto batch = loader.next()) f(*batch, model.forward(batch->images));
}

}  // namespace

EvalResult evaluate(const PimModel& model, const Dataset& data, const std::vector<Image>& scaled,
                    const AugmentConfig& augment, const EvalOptions& opts) {
  const auto& cfg = model.config();
  if (data.num_classes() != cfg.num_classes) {
    throw std::invalid_argument("evaluate: dataset has " + std::to_string(data.num_classes()) +
                                " classes, the model " + std::to_string(cfg.num_classes));
  }
  if (opts.threshold && cfg.combiner_enabled && cfg.combiner.variant == CombinerVariant::mlp)
    throw std::invalid_argument("evaluate: --threshold cannot be used with the mlp combiner (fixed input size)");
  if (opts.threshold && !cfg.selector_enabled)
    throw std::invalid_argument("evaluate: --threshold needs the selector");
  if (opts.per_region && !cfg.selector_enabled)
    throw std::invalid_argument("evaluate: --per-region needs the selector");
  const auto names = head_names(model);
  if (opts.k == 0 || opts.k > names.size()) {
    throw std::invalid_argument("evaluate: k = " + std::to_string(opts.k) + " but the model has " +
                                std::to_string(names.size()) + " heads (L + 1)");
  }

  EvalResult result;
  const std::size_t blocks = cfg.backbone.num_blocks;
  RegionAccuracy regions;
  regions.selected.assign(blocks, 0.0);
  regions.dropped.assign(blocks, 0.0);
  regions.dropped_images.assign(blocks, 0);

  for_each_batch(model, data, scaled, augment, opts.batch_size, [&](const Batch& batch, const ForwardResult& fr) {
    auto scores = model.head_scores(fr);
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      EvalRecord rec{batch.indices[b], batch.labels[b], std::move(scores[b])};
      if (opts.threshold && cfg.combiner_enabled) {
        std::vector<SelectionResult> kept;
        bool any = false;
        for (std::size_t l = 0; l < blocks; ++l) {
          kept.push_back(threshold_filter(fr.selections[l][b], fr.points[l], b, *opts.threshold));
          any = any || kept.back().num_selected() > 0;
        }
        auto& head = rec.heads[blocks];
        if (any) {
          head = softmax_row(model.combiner().forward(kept));
        } else {
          head.assign(cfg.num_classes, 0.0);
          for (std::size_t l = 0; l < blocks; ++l)
            for (std::size_t j = 0; j < cfg.num_classes; ++j) head[j] += rec.heads[l][j] / double(blocks);
        }
      }
      if (opts.per_region) {
        for (std::size_t l = 0; l < blocks; ++l) {
          const auto& sr = fr.selections[l][b];
          regions.selected[l] += argmax(mean_probs(fr.points[l], b, sr.selected_indices)) == rec.label;
          if (!sr.dropped_indices.empty()) {
            regions.dropped[l] += argmax(mean_probs(fr.points[l], b, sr.dropped_indices)) == rec.label;
            ++regions.dropped_images[l];
          }
        }
      }
      result.records.push_back(std::move(rec));
    }
  });

  result.table = accuracy_table(result.records, names, opts.k, opts.rank);
  if (opts.per_region) {
    for (std::size_t l = 0; l < blocks; ++l) {
      regions.selected[l] /= std::max<double>(1.0, double(result.records.size()));
      regions.dropped[l] /= std::max<double>(1.0, double(regions.dropped_images[l]));
    }
    result.regions = std::move(regions);
  }
  return result;
}

std::string format_table(const AccuracyTable& t) {
  std::ostringstream out;
  char buf[96];
  out << "images: " << t.images << "\n";
  for (std::size_t h = 0; h < t.head_names.size(); ++h) {
    std::snprintf(buf, sizeof buf, "  %-10s %6.2f%%\n", t.head_names[h].c_str(), 100.0 * t.head_accuracy[h]);
    out << buf;
  }
  for (std::size_t k = 1; k <= t.topk_accuracy.size(); ++k) {
    std::snprintf(buf, sizeof buf, "  top-%zu avg  %6.2f%%\n", k, 100.0 * t.topk_accuracy[k - 1]);
    out << buf;
  }
  return out.str();
}

HitReport selection_hits(const std::vector<std::vector<std::size_t>>& selected, std::size_t map_size,
                         const std::vector<RegionBox>& boxes, std::size_t resolution) {
  if (selected.size() != boxes.size()) throw std::invalid_argument("selection_hits: one box per image");
  HitReport r;
  const double cell = double(resolution) / double(map_size), area = double(resolution) * double(resolution);
  auto inside = [&](const RegionBox& box, std::size_t s) {
    return box.contains((double(s / map_size) + 0.5) * cell, (double(s % map_size) + 0.5) * cell);
  };
  // covering[s]: how many boxes hold the centre of cell s.
  std::vector<std::size_t> covering(map_size * map_size, 0);
  for (const auto& box : boxes)
    for (std::size_t s = 0; s < covering.size(); ++s) covering[s] += inside(box, s);
  const double others = double(boxes.size()) - 1.0;
  double chance_sum = 0, variance = 0, placement_sum = 0, placement_variance = 0;
  for (std::size_t i = 0; i < selected.size(); ++i) {
    const double p = boxes[i].area() / area;
    for (auto s : selected[i]) {
      const bool hit = inside(boxes[i], s);
      r.hits += hit;
      ++r.points;
      chance_sum += p;
      variance += p * (1 - p);
      const double q = others > 0 ? (double(covering[s]) - double(hit)) / others : 0.0;
      placement_sum += q;
      placement_variance += q * (1 - q);
    }
    ++r.images;
  }
  if (r.points > 0) {
    const double n = double(r.points);
    r.hit_rate = double(r.hits) / n;
    r.chance_rate = chance_sum / n;
    r.standard_error = std::sqrt(variance) / n;
    r.placement_rate = placement_sum / n;
    r.placement_error = std::sqrt(placement_variance) / n;
  }
  return r;
}

ExportResult export_masks(const PimModel& model, const Dataset& data, const AugmentConfig& augment,
                          const fs::path& out, std::size_t batch_size) {
  const auto& cfg = model.config();
  if (!cfg.selector_enabled) throw std::invalid_argument("export-masks: the model has no selector");
  if (data.num_classes() != cfg.num_classes) throw std::invalid_argument("export-masks: class count mismatch");
  const std::size_t blocks = cfg.backbone.num_blocks, res = augment.resolution;
  const auto scaled = prescale(data, augment);
  ExportResult result;
  std::vector<std::vector<std::size_t>> last_block(data.size());

  for_each_batch(model, data, scaled, augment, batch_size, [&](const Batch& batch, const ForwardResult& fr) {
    for (std::size_t b = 0; b < batch.indices.size(); ++b) {
      const Sample& s = data.samples[batch.indices[b]];
      const fs::path rel(s.path);
      const fs::path dir = out / rel.parent_path();
      fs::create_directories(dir);
      for (std::size_t l = 0; l < blocks; ++l) {
        const auto& sr = fr.selections[l][b];
        std::vector<std::uint8_t> native(sr.mask.size()), up(res * res);
        for (std::size_t i = 0; i < sr.mask.size(); ++i) native[i] = sr.mask[i] ? 255 : 0;
        for (std::size_t y = 0; y < res; ++y)
          for (std::size_t x = 0; x < res; ++x)
            up[y * res + x] = native[(y * sr.height / res) * sr.width + x * sr.width / res];
        const std::string stem = rel.stem().string() + "_block" + std::to_string(l + 1);
        write_pgm(dir / (stem + ".pgm"), sr.height, sr.width, native);
        write_pgm(dir / (stem + "_up.pgm"), res, res, up);
        result.masks_written += 2;
      }
      last_block[batch.indices[b]] = fr.selections[blocks - 1][b].selected_indices;
    }
  });

  const bool have_truth =
      data.has_motifs && std::all_of(data.samples.begin(), data.samples.end(), [](const Sample& s) { return s.motif.has_value(); });
  if (!have_truth) {
    std::cerr << "warning: " << data.root.string()
              << " has no complete motif index; masks written, hit report skipped\n";
    return result;
  }
  std::vector<RegionBox> boxes;
  for (const auto& s : data.samples) boxes.push_back(test_view_box(*s.motif, s.image.height, s.image.width, augment));
  const HitReport hits = selection_hits(last_block, cfg.backbone.map_size(blocks), boxes, res);
  nlohmann::ordered_json j;
  j["block"] = blocks;
  j["images"] = hits.images;
  j["selected_points"] = hits.points;
  j["hits"] = hits.hits;
  j["hit_rate"] = hits.hit_rate;
  j["chance_rate"] = hits.chance_rate;
  j["standard_error"] = hits.standard_error;
  j["ratio"] = hits.ratio();
  j["placement_rate"] = hits.placement_rate;
  j["placement_error"] = hits.placement_error;
  j["placement_ratio"] = hits.placement_ratio();
  std::ofstream(out / "hit_report.json") << j.dump(2) << "\n";
  result.hits = hits;
  return result;
}

}  // namespace pim
