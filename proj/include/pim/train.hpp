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

// Training loop. Writes into out_dir:
//   manifest.txt   resolved config and parameter table, before step 0
//   metrics.jsonl  one record per step ("step") and per evaluation ("eval")
//   final.ckpt     the trained parameters
// A non-finite loss stops the run and leaves nan_batch.txt behind.

#pragma once

#include <filesystem>
#include <fstream>
#include <iosfwd>
#include <memory>
#include <optional>

#include "pim/config.hpp"
#include "pim/dataset.hpp"
#include "pim/evaluate.hpp"
#include "pim/model.hpp"

namespace pim {

// Line-delimited JSON records.
class MetricsWriter {
 public:
  explicit MetricsWriter(const std::filesystem::path& path);
  void step(std::size_t step, std::size_t epoch, const LossBundle& loss, double lr);
  void eval(std::size_t step, std::size_t epoch, const AccuracyTable& table);

 private:
  std::ofstream out_;
};

struct TrainResult {
  RunConfig config;  // resolved
  std::unique_ptr<PimModel> model;
  std::filesystem::path checkpoint;
  std::optional<EvalResult> final_eval;  // when a test set is configured
};

// `log` receives one human-readable line per evaluation.
TrainResult train(const RunConfig& cfg, std::ostream& log);
// Same, with datasets already in memory (test may be null).
TrainResult train(const RunConfig& cfg, const Dataset& train_set, const Dataset* test_set, std::ostream& log);

}  // namespace pim
