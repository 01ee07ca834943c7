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

// Command-line entry point: train, eval, synth-data, export-masks.

#include <cstdio>
#include <exception>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pim/checkpoint.hpp"
#include "pim/evaluate.hpp"
#include "pim/synthetic.hpp"
#include "pim/train.hpp"

namespace {

int run_train(const std::string& config, const std::vector<std::string>& overrides) {
  const pim::RunConfig cfg = pim::load_run_config(config, overrides);
  auto result = pim::train(cfg, std::cout);
  std::cout << "checkpoint: " << result.checkpoint.string() << "\n";
  if (result.final_eval) std::cout << pim::format_table(result.final_eval->table);
  return 0;
}

int run_eval(const std::string& checkpoint, const std::string& data, std::optional<std::size_t> k,
             std::optional<double> threshold, const std::string& rank, bool per_region) {
  auto ck = pim::load_checkpoint(checkpoint);
  const pim::Dataset ds = pim::ingest(data);
  pim::EvalOptions opts;
  opts.k = k.value_or(std::min(ck.config.eval_k, pim::head_names(*ck.model).size()));
  opts.threshold = threshold;
  opts.rank = pim::parse_ensemble_rank(rank);
  opts.per_region = per_region;
  opts.batch_size = ck.config.batch_size;
  const auto scaled = pim::prescale(ds, ck.config.augment);
  const auto result = pim::evaluate(*ck.model, ds, scaled, ck.config.augment, opts);
  std::cout << pim::format_table(result.table);
  if (result.regions) {
    for (std::size_t l = 0; l < result.regions->selected.size(); ++l) {
      std::printf("  block%zu  selected %6.2f%%  dropped %6.2f%%\n", l + 1, 100 * result.regions->selected[l],
                  100 * result.regions->dropped[l]);
    }
  }
  return 0;
}

int run_export(const std::string& checkpoint, const std::string& data, const std::string& out) {
  auto ck = pim::load_checkpoint(checkpoint);
  const pim::Dataset ds = pim::ingest(data);
  const auto result = pim::export_masks(*ck.model, ds, ck.config.augment, out, ck.config.batch_size);
  std::cout << "masks written: " << result.masks_written << "\n";
  if (result.hits) {
    const auto& h = *result.hits;
    std::printf("block-%zu hit rate %.4f, chance %.4f (se %.4f), ratio %.2fx\n", ck.config.model.backbone.num_blocks,
                h.hit_rate, h.chance_rate, h.standard_error, h.ratio());
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Plug-in module for fine-grained classification: training and evaluation"};
  app.require_subcommand(1);

  std::string config, checkpoint, data, out, spec, rank = "confidence";
  std::vector<std::string> overrides;
  std::optional<std::size_t> k;
  std::optional<double> threshold;
  std::uint64_t seed = 0;
  bool per_region = false;

  auto* train = app.add_subcommand("train", "Train a model from a config file");
  train->add_option("--config", config, "Config file (key = value)")->required()->check(CLI::ExistingFile);
  train->add_option("--override", overrides, "key=value applied after the config file")->take_all();

  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint on a dataset");
  eval->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  eval->add_option("--data", data, "Class-per-folder dataset")->required()->check(CLI::ExistingDirectory);
  eval->add_option("--k", k, "Largest top-k ensemble to report")->check(CLI::Range(1, 5));
  eval->add_option("--threshold", threshold, "Drop selected points below this confidence before the combiner");
  eval->add_option("--rank", rank, "Head ranking for ensembles")->check(CLI::IsMember({"confidence", "fixed"}));
  eval->add_flag("--per-region", per_region, "Also report selected-only and dropped-only accuracy per block");

  auto* synth = app.add_subcommand("synth-data", "Generate the synthetic dataset");
  synth->add_option("--spec", spec, "Synthetic spec file (key = value)")->required()->check(CLI::ExistingFile);
  synth->add_option("--out", out)->required();
  synth->add_option("--seed", seed)->required();

  auto* masks = app.add_subcommand("export-masks", "Write selection masks and the motif hit report");
  masks->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
  masks->add_option("--data", data)->required()->check(CLI::ExistingDirectory);
  masks->add_option("--out", out)->required();

  CLI11_PARSE(app, argc, argv);
  try {
    if (train->parsed()) return run_train(config, overrides);
    if (eval->parsed()) return run_eval(checkpoint, data, k, threshold, rank, per_region);
    if (synth->parsed()) {
      pim::synth_generate(pim::SyntheticSpec::from_key_values(pim::read_key_values(spec)), seed, out);
      return 0;
    }
    if (masks->parsed()) return run_export(checkpoint, data, out);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
