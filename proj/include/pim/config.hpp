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

// Run configuration. The key list is documented in README.md; every key
// round-trips through to_key_values(), which is also the manifest body.

#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "pim/dataset.hpp"
#include "pim/keyvalue.hpp"
#include "pim/losses.hpp"
#include "pim/model.hpp"
#include "pim/optim.hpp"

namespace pim {

enum class EnsembleRank { confidence, fixed };

std::string to_string(EnsembleRank r);
EnsembleRank parse_ensemble_rank(const std::string& name);

struct RunConfig {
  RunConfig() { model.num_classes = 0; }  // taken from the dataset

  std::uint64_t seed = 0;
  std::string train_dir, test_dir;
  std::string out_dir = "run";
  // 0 means "auto": 30 when the training set carries a motif index
  // (synthetic), 50 otherwise.
  std::size_t epochs = 0;
  std::size_t batch_size = 8;
  std::size_t max_steps_per_epoch = 0;  // 0: the whole epoch
  std::size_t eval_every = 1;           // epochs between evaluations; 0: final only
  std::size_t eval_k = 5;
  std::optional<double> eval_threshold;
  EnsembleRank eval_rank = EnsembleRank::confidence;
  std::size_t prefetch = 4;

  OptimizerConfig optim;
  LossWeights loss;
  ModelConfig model;
  AugmentConfig augment;

  static RunConfig from_key_values(const KeyValues& kv);
  // Applies `key=value` pairs on top; unknown keys throw.
  void apply(const KeyValues& kv);
  KeyValues to_key_values() const;
  std::string to_text() const;

  // Fills the dataset-dependent values and validates.
  RunConfig resolved(const Dataset& train) const;
};

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides);

}  // namespace pim
