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

// Multi-head evaluation with top-k score ensembling, per-region
// diagnostics and selection-mask export.

#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "pim/config.hpp"
#include "pim/dataset.hpp"
#include "pim/model.hpp"

namespace pim {

// Class scores of every head for one image: block heads in order, then the
// combiner (or the single backbone head of a baseline model).
struct EvalRecord {
  std::size_t index = 0;  // into the dataset
  std::size_t label = 0;
  std::vector<std::vector<double>> heads;
};

// Order in which heads enter a top-k ensemble. confidence: by each head's
// max score, descending, ties to the lower head index. fixed: head order.
std::vector<std::size_t> rank_heads(const std::vector<std::vector<double>>& heads, EnsembleRank rank);

// Elementwise mean of the first k ranked heads.
std::vector<double> ensemble_scores(const std::vector<std::vector<double>>& heads, std::size_t k,
                                    EnsembleRank rank);
// argmax of ensemble_scores, ties to the lower class. Throws when k is 0 or
// exceeds the number of heads.
std::size_t ensemble_predict(const std::vector<std::vector<double>>& heads, std::size_t k, EnsembleRank rank);

std::size_t argmax(const std::vector<double>& v);

struct AccuracyTable {
  std::vector<std::string> head_names;
  std::vector<double> head_accuracy;
  std::vector<double> topk_accuracy;  // [k-1] for k = 1..K
  std::size_t images = 0;
};

AccuracyTable accuracy_table(const std::vector<EvalRecord>& records, const std::vector<std::string>& head_names,
                             std::size_t max_k, EnsembleRank rank);

std::vector<std::string> head_names(const PimModel& model);

// Accuracy of each block's mean prediction over selected points alone and
// over dropped points alone.
struct RegionAccuracy {
  std::vector<double> selected, dropped;
  std::vector<std::size_t> dropped_images;  // images with a non-empty dropped set
};

struct EvalOptions {
  std::size_t k = 5;
  std::optional<double> threshold;
  EnsembleRank rank = EnsembleRank::confidence;
  bool per_region = false;
  std::size_t batch_size = 8;
};

struct EvalResult {
  std::vector<EvalRecord> records;
  AccuracyTable table;
  std::optional<RegionAccuracy> regions;
};

// Test-mode view of every image through the model. With a threshold, the
// combiner sees only selected points whose confidence reaches tau; when no
// block keeps any point its head falls back to the mean of the block heads.
EvalResult evaluate(const PimModel& model, const Dataset& data, const std::vector<Image>& scaled,
                    const AugmentConfig& augment, const EvalOptions& opts);

std::string format_table(const AccuracyTable& t);

struct HitReport {
  std::size_t images = 0, points = 0, hits = 0;
  double hit_rate = 0, chance_rate = 0, standard_error = 0;
  // Same points scored against the other images' boxes.
  double placement_rate = 0, placement_error = 0;
  double ratio() const { return chance_rate > 0 ? hit_rate / chance_rate : 0.0; }
  double placement_ratio() const { return placement_rate > 0 ? hit_rate / placement_rate : 0.0; }
};

// Fraction of selected last-block points whose cell centre lies inside the
// motif box (in test-view coordinates); chance is the mean box area
// fraction, and the standard error treats each point as an independent
// Bernoulli draw at its image's chance rate.
//
// Area chance assumes every cell is equally likely to hold motif pixels. It
// is not when motifs keep off the border and the selector also does (zero
// padding makes border cells different even at init), so the placement rate
// gives each point the probability that a box drawn from the other images
// covers it. Selection that ignores content sits at the placement rate.
HitReport selection_hits(const std::vector<std::vector<std::size_t>>& selected, std::size_t map_size,
                         const std::vector<RegionBox>& boxes, std::size_t resolution);

struct ExportResult {
  std::size_t masks_written = 0;
  std::optional<HitReport> hits;
};

// Writes <out>/<class>/<image>_block<l>.pgm at map resolution and
// <image>_block<l>_up.pgm at input resolution, then the hit report (as
// hit_report.json) when every image has a motif box.
ExportResult export_masks(const PimModel& model, const Dataset& data, const AugmentConfig& augment,
                          const std::filesystem::path& out, std::size_t batch_size = 8);

}  // namespace pim
