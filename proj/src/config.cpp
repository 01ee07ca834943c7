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

#include "pim/config.hpp"

#include <stdexcept>

namespace pim {

std::string to_string(EnsembleRank r) { return r == EnsembleRank::confidence ? "confidence" : "fixed"; }

EnsembleRank parse_ensemble_rank(const std::string& name) {
  if (name == "confidence") return EnsembleRank::confidence;
  if (name == "fixed") return EnsembleRank::fixed;
  throw std::invalid_argument("eval.rank: '" + name + "' is not confidence or fixed");
}

namespace {

std::size_t size_or_auto(const std::string& key, const std::string& value) {
  return value == "auto" ? 0 : parse_size(key, value);
}

// "auto" maps to 0, so an explicit 0 would silently mean auto.
std::size_t positive_or_auto(const std::string& key, const std::string& value) {
  if (value == "auto") return 0;
  const std::size_t n = parse_size(key, value);
  if (n == 0) throw std::invalid_argument("config: " + key + " must be positive or auto");
  return n;
}

std::string auto_or(std::size_t v) { return v == 0 ? "auto" : std::to_string(v); }

}  // namespace

void RunConfig::apply(const KeyValues& kv) {
  for (const auto& [key, v] : kv) {
    if (key == "seed") seed = parse_u64(key, v);
    else if (key == "data.train") train_dir = v;
    else if (key == "data.test") test_dir = v;
    else if (key == "out_dir") out_dir = v;
    else if (key == "epochs") epochs = positive_or_auto(key, v);
    else if (key == "batch_size") batch_size = parse_size(key, v);
    else if (key == "max_steps_per_epoch") max_steps_per_epoch = parse_size(key, v);
    else if (key == "precision") model.dtype = parse_dtype(v);
    else if (key == "num_classes") model.num_classes = positive_or_auto(key, v);
    else if (key == "eval.every") eval_every = parse_size(key, v);
    else if (key == "eval.k") eval_k = parse_size(key, v);
    else if (key == "eval.threshold") eval_threshold = v == "none" ? std::nullopt : std::optional(parse_real(key, v));
    else if (key == "eval.rank") eval_rank = parse_ensemble_rank(v);
    else if (key == "loader.prefetch") prefetch = parse_size(key, v);
    else if (key == "optim.learning_rate") optim.learning_rate = parse_real(key, v);
    else if (key == "optim.weight_decay") optim.weight_decay = parse_real(key, v);
    else if (key == "optim.momentum") optim.momentum = parse_real(key, v);
    else if (key == "loss.lambda_b") loss.block = parse_real(key, v);
    else if (key == "loss.lambda_s") loss.selected = parse_real(key, v);
    else if (key == "loss.lambda_n") loss.flatten = parse_real(key, v);
    else if (key == "loss.lambda_c") loss.combiner = parse_real(key, v);
    else if (key == "backbone.num_blocks") model.backbone.num_blocks = parse_size(key, v);
    else if (key == "backbone.input_resolution") model.backbone.input_resolution = parse_size(key, v);
    else if (key == "backbone.channels") model.backbone.channels = parse_size_list(key, v);
    else if (key == "backbone.fpn_width") model.backbone.fpn_width = parse_size(key, v);
    else if (key == "fpn_enabled") model.backbone.fpn_enabled = parse_bool(key, v);
    else if (key == "selector_enabled") model.selector_enabled = parse_bool(key, v);
    else if (key == "combiner_enabled") model.combiner_enabled = parse_bool(key, v);
    else if (key == "selector.num_selects")
      model.selector.num_selects = v == "auto" ? std::vector<std::size_t>{} : parse_size_list(key, v);
    else if (key == "combiner.variant") model.combiner.variant = parse_combiner_variant(v);
    else if (key == "combiner.gcn_layers") model.combiner.gcn_layers = parse_size(key, v);
    else if (key == "combiner.pooling_ratios") model.combiner.pooling_ratios = parse_real_list(key, v);
    else if (key == "combiner.hidden_width") model.combiner.hidden_width = parse_size(key, v);
    else if (key == "augment.scale_size") augment.scale_size = size_or_auto(key, v);
    else if (key == "augment.flip_p") augment.flip_probability = parse_real(key, v);
    else if (key == "augment.blur_p") augment.blur_probability = parse_real(key, v);
    else if (key == "augment.blur_sigma_min") augment.blur_sigma_min = parse_real(key, v);
    else if (key == "augment.blur_sigma_max") augment.blur_sigma_max = parse_real(key, v);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  augment.resolution = model.backbone.input_resolution;
}

RunConfig RunConfig::from_key_values(const KeyValues& kv) {
  RunConfig cfg;
  cfg.apply(kv);
  return cfg;
}

KeyValues RunConfig::to_key_values() const {
  const auto& b = model.backbone;
  const auto& c = model.combiner;
  return {
      {"seed", std::to_string(seed)},
      {"data.train", train_dir},
      {"data.test", test_dir},
      {"out_dir", out_dir},
      {"epochs", auto_or(epochs)},
      {"batch_size", std::to_string(batch_size)},
      {"max_steps_per_epoch", std::to_string(max_steps_per_epoch)},
      {"precision", to_string(model.dtype)},
      {"num_classes", auto_or(model.num_classes)},
      {"eval.every", std::to_string(eval_every)},
      {"eval.k", std::to_string(eval_k)},
      {"eval.threshold", eval_threshold ? format_real(*eval_threshold) : "none"},
      {"eval.rank", to_string(eval_rank)},
      {"loader.prefetch", std::to_string(prefetch)},
      {"optim.learning_rate", format_real(optim.learning_rate)},
      {"optim.weight_decay", format_real(optim.weight_decay)},
      {"optim.momentum", format_real(optim.momentum)},
      {"loss.lambda_b", format_real(loss.block)},
      {"loss.lambda_s", format_real(loss.selected)},
      {"loss.lambda_n", format_real(loss.flatten)},
      {"loss.lambda_c", format_real(loss.combiner)},
      {"backbone.num_blocks", std::to_string(b.num_blocks)},
      {"backbone.input_resolution", std::to_string(b.input_resolution)},
      {"backbone.channels", join(b.channels)},
      {"backbone.fpn_width", std::to_string(b.fpn_width)},
      {"fpn_enabled", b.fpn_enabled ? "true" : "false"},
      {"selector_enabled", model.selector_enabled ? "true" : "false"},
      {"combiner_enabled", model.combiner_enabled ? "true" : "false"},
      {"selector.num_selects", model.selector.num_selects.empty() ? "auto" : join(model.selector.num_selects)},
      {"combiner.variant", to_string(c.variant)},
      {"combiner.gcn_layers", std::to_string(c.gcn_layers)},
      {"combiner.pooling_ratios", join(c.pooling_ratios)},
      {"combiner.hidden_width", std::to_string(c.hidden_width)},
      {"augment.scale_size", auto_or(augment.scale_size)},
      {"augment.flip_p", format_real(augment.flip_probability)},
      {"augment.blur_p", format_real(augment.blur_probability)},
      {"augment.blur_sigma_min", format_real(augment.blur_sigma_min)},
      {"augment.blur_sigma_max", format_real(augment.blur_sigma_max)},
  };
}

std::string RunConfig::to_text() const {
  std::string out;
  for (const auto& [k, v] : to_key_values()) out += k + " = " + v + "\n";
  return out;
}

RunConfig RunConfig::resolved(const Dataset& train) const {
  RunConfig out = *this;
  if (out.model.num_classes != 0 && out.model.num_classes != train.num_classes()) {
    throw std::invalid_argument("config: num_classes = " + std::to_string(out.model.num_classes) +
                                " but the training set has " + std::to_string(train.num_classes()) + " classes");
  }
  out.model.num_classes = train.num_classes();
  if (out.epochs == 0) out.epochs = train.has_motifs ? 30 : 50;
  if (out.augment.scale_size == 0) out.augment.scale_size = out.augment.resolved_scale();
  if (out.batch_size == 0) throw std::invalid_argument("config: batch_size must be positive");
  if (out.eval_k == 0) throw std::invalid_argument("config: eval.k must be positive");
  out.augment.validate();
  out.loss.validate();
  out.model = out.model.resolved();
  if (out.eval_threshold && out.model.combiner.variant == CombinerVariant::mlp && out.model.combiner_enabled)
    throw std::invalid_argument("config: eval.threshold cannot be used with the mlp combiner (fixed input size)");
  return out;
}

RunConfig load_run_config(const std::string& path, const std::vector<std::string>& overrides) {
  RunConfig cfg = RunConfig::from_key_values(read_key_values(path));
  KeyValues extra;
  for (const auto& o : overrides) {
    auto [k, v] = split_override(o);
    extra[k] = v;
  }
  cfg.apply(extra);
  return cfg;
}

}  // namespace pim
