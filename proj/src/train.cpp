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

#include "pim/train.hpp"

#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

#include "json.hpp"
#include "pim/autograd.hpp"
#include "pim/checkpoint.hpp"
#include "pim/optim.hpp"
#include "pim/rng.hpp"

namespace pim {

namespace fs = std::filesystem;

namespace {

double value_or_zero(const Tensor& t) { return t.defined() ? t.item() : 0.0; }

constexpr std::uint64_t kOrderStream = 0x6f72646572;  // "order"

}  // namespace

MetricsWriter::MetricsWriter(const fs::path& path) : out_(path) {
  if (!out_) throw std::runtime_error(path.string() + ": cannot open for writing");
}

void MetricsWriter::step(std::size_t step, std::size_t epoch, const LossBundle& loss, double lr) {
  nlohmann::ordered_json j;
  j["kind"] = "step";
  j["step"] = step;
  j["epoch"] = epoch;
  j["loss_b"] = value_or_zero(loss.block);
  j["loss_s"] = value_or_zero(loss.selected);
  j["loss_n"] = value_or_zero(loss.flatten);
  j["loss_c"] = value_or_zero(loss.combiner);
  j["loss_total"] = value_or_zero(loss.total);
  j["lr"] = lr;
  out_ << j.dump() << '\n';
}

void MetricsWriter::eval(std::size_t step, std::size_t epoch, const AccuracyTable& table) {
  nlohmann::ordered_json j;
  j["kind"] = "eval";
  j["step"] = step;
  j["epoch"] = epoch;
  for (std::size_t h = 0; h < table.head_names.size(); ++h) j["acc_" + table.head_names[h]] = table.head_accuracy[h];
  for (std::size_t k = 1; k <= table.topk_accuracy.size(); ++k) j["acc_top" + std::to_string(k)] = table.topk_accuracy[k - 1];
  out_ << j.dump() << std::endl;
}

TrainResult train(const RunConfig& cfg, std::ostream& log) {
  const Dataset train_set = ingest(cfg.train_dir);
  std::optional<Dataset> test_set;
  if (!cfg.test_dir.empty()) test_set = ingest(cfg.test_dir);
  return train(cfg, train_set, test_set ? &*test_set : nullptr, log);
}

TrainResult train(const RunConfig& raw, const Dataset& train_set, const Dataset* test_set, std::ostream& log) {
  TrainResult result;
  result.config = raw.resolved(train_set);
  const RunConfig& cfg = result.config;
  if (test_set && test_set->class_names != train_set.class_names)
    throw std::invalid_argument("train: test classes differ from training classes");

  const fs::path out(cfg.out_dir);
  fs::create_directories(out);
  result.model = std::make_unique<PimModel>(cfg.model, cfg.seed);
  PimModel& model = *result.model;
  std::ofstream(out / "manifest.txt") << build_manifest(cfg, model);
  MetricsWriter metrics(out / "metrics.jsonl");

  const auto train_scaled = prescale(train_set, cfg.augment);
  std::vector<Image> test_scaled;
  if (test_set) test_scaled = prescale(*test_set, cfg.augment);

  const std::size_t n = train_set.size();
  std::size_t steps_per_epoch = (n + cfg.batch_size - 1) / cfg.batch_size;
  if (cfg.max_steps_per_epoch) steps_per_epoch = std::min(steps_per_epoch, cfg.max_steps_per_epoch);
  OptimizerState opt(cfg.optim, cfg.epochs * steps_per_epoch);
  auto params = model.parameters().tensors();
  const std::size_t eval_k = std::min(cfg.eval_k, head_names(model).size());

  auto run_eval = [&](std::size_t step, std::size_t epoch) {
    EvalOptions eo;
    eo.k = eval_k;
    eo.rank = cfg.eval_rank;
    eo.batch_size = cfg.batch_size;
    auto ev = evaluate(model, *test_set, test_scaled, cfg.augment, eo);
    metrics.eval(step, epoch, ev.table);
    char line[160];
    std::snprintf(line, sizeof line, "epoch %zu: %s %.2f%%, top-%zu %.2f%%\n", epoch, ev.table.head_names.back().c_str(),
                  100 * ev.table.head_accuracy.back(), eval_k, 100 * ev.table.topk_accuracy.back());
    log << line << std::flush;
    return ev;
  };

  std::size_t step = 0;
  for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng::derive(cfg.seed, kOrderStream, epoch).shuffle(order);
    order.resize(std::min(n, steps_per_epoch * cfg.batch_size));
    BatchLoader loader(train_set, train_scaled, order, cfg.batch_size, AugmentMode::train, cfg.seed, epoch,
                       cfg.augment, cfg.model.dtype, cfg.prefetch);
    for (std::size_t b = 0; auto batch = loader.next(); ++b, ++step) {
      auto abort = [&](const LossBundle& loss) {
        const fs::path dump = out / "nan_batch.txt";
        std::ofstream d(dump);
        d << "epoch " << epoch << "\nstep " << step << "\nbatch " << b << "\n";
        d << "loss_b " << value_or_zero(loss.block) << "\nloss_s " << value_or_zero(loss.selected)
          << "\nloss_n " << value_or_zero(loss.flatten) << "\nloss_c " << value_or_zero(loss.combiner) << "\n";
        for (auto idx : batch->indices) d << "sample " << idx << " " << train_set.samples[idx].path << "\n";
        throw std::runtime_error("train: non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                                 std::to_string(step) + " (batch " + std::to_string(b) + "); details in " +
                                 dump.string());
      };
      LossBundle loss = model.losses(model.forward(batch->images), batch->labels, cfg.loss);
      if (!std::isfinite(loss.total.item())) abort(loss);
      const double lr = opt.current_learning_rate();
      backward(loss.total);
      sgd_step(opt, params);
      metrics.step(step, epoch, loss, lr);
    }
    const bool last = epoch + 1 == cfg.epochs;
    if (test_set && (last || (cfg.eval_every && (epoch + 1) % cfg.eval_every == 0))) {
      auto ev = run_eval(step, epoch + 1);
      if (last) result.final_eval = std::move(ev);
    }
  }
  result.checkpoint = out / "final.ckpt";
  save_checkpoint(result.checkpoint, cfg, model);
  return result;
}

}  // namespace pim
