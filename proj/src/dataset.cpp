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

#include "pim/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iostream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "pim/rng.hpp"

namespace pim {

namespace fs = std::filesystem;

namespace {

bool is_image_file(const fs::path& p) {
  std::string ext = p.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return std::tolower(c); });
  return ext == ".png" || ext == ".ppm";
}

}  // namespace

void write_motif_index(const fs::path& path, const std::vector<MotifEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  for (const auto& e : entries)
    out << e.path << ' ' << e.label << ' ' << e.box.y0 << ' ' << e.box.x0 << ' ' << e.box.y1 << ' ' << e.box.x1
        << '\n';
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

std::vector<MotifEntry> read_motif_index(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  std::vector<MotifEntry> out;
  std::string line;
  for (std::size_t n = 1; std::getline(in, line); ++n) {
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    std::istringstream ss(line);
    MotifEntry e;
    std::string extra;
    if (!(ss >> e.path >> e.label >> e.box.y0 >> e.box.x0 >> e.box.y1 >> e.box.x1) || (ss >> extra))
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": expected 'path class y0 x0 y1 x1'");
    if (e.box.y1 <= e.box.y0 || e.box.x1 <= e.box.x0)
      throw std::runtime_error(path.string() + ":" + std::to_string(n) + ": empty motif box");
    out.push_back(std::move(e));
  }
  return out;
}

Dataset ingest(const fs::path& root) {
  if (!fs::is_directory(root)) throw std::runtime_error(root.string() + ": not a dataset directory");
  Dataset data;
  data.root = root;
  for (const auto& entry : fs::directory_iterator(root))
    if (entry.is_directory()) data.class_names.push_back(entry.path().filename().string());
  std::ranges::sort(data.class_names);
  if (data.class_names.empty()) throw std::runtime_error(root.string() + ": no class folders");

  for (std::size_t label = 0; label < data.class_names.size(); ++label) {
    const auto dir = root / data.class_names[label];
    std::vector<std::string> files;
    for (const auto& entry : fs::directory_iterator(dir))
      if (entry.is_regular_file() && is_image_file(entry.path())) files.push_back(entry.path().filename().string());
    std::ranges::sort(files);
    if (files.empty()) throw std::runtime_error(dir.string() + ": class folder holds no .png or .ppm images");
    for (const auto& f : files)
      data.samples.push_back({data.class_names[label] + "/" + f, label, read_image(dir / f), std::nullopt});
  }

  const auto index_path = root / kMotifIndexName;
  if (fs::exists(index_path)) {
    data.has_motifs = true;
    std::map<std::string, const MotifEntry*> by_path;
    const auto entries = read_motif_index(index_path);
    for (const auto& e : entries) by_path[e.path] = &e;
    for (auto& s : data.samples) {
      const auto it = by_path.find(s.path);
      if (it == by_path.end()) continue;
      if (it->second->label >= data.num_classes() || data.class_names[it->second->label] != data.class_names[s.label])
        throw std::runtime_error(index_path.string() + ": class of " + s.path + " disagrees with its folder");
      const Box& b = it->second->box;
      if (b.y1 > s.image.height || b.x1 > s.image.width)
        throw std::runtime_error(index_path.string() + ": motif box of " + s.path + " exceeds the image");
      s.motif = b;
    }
  }
  return data;
}

std::size_t AugmentConfig::resolved_scale() const {
  return scale_size ? scale_size : std::size_t(std::llround(double(resolution) * 4.0 / 3.0));
}

void AugmentConfig::validate() const {
  if (resolution == 0) throw std::invalid_argument("augment: resolution must be positive");
  if (resolved_scale() < resolution) throw std::invalid_argument("augment: scale_size smaller than the crop");
  auto prob = [](double p) { return p >= 0.0 && p <= 1.0; };
  if (!prob(flip_probability) || !prob(blur_probability))
    throw std::invalid_argument("augment: probabilities must be in [0, 1]");
  if (!(blur_sigma_min > 0.0) || blur_sigma_max < blur_sigma_min)
    throw std::invalid_argument("augment: need 0 < blur_sigma_min <= blur_sigma_max");
}

Image scale_for_augment(const Image& img, const AugmentConfig& cfg) {
  const std::size_t s = cfg.resolved_scale();
  return resize_bilinear(img, s, s);
}

Image augment_scaled(const Image& scaled, AugmentMode mode, std::uint64_t seed, const AugmentConfig& cfg) {
  const std::size_t r = cfg.resolution, s = scaled.height;
  if (mode == AugmentMode::test) return crop(scaled, (s - r) / 2, (scaled.width - r) / 2, r, r);
  Rng rng(seed);
  const std::size_t y = rng.below(s - r + 1), x = rng.below(scaled.width - r + 1);
  Image out = crop(scaled, y, x, r, r);
  if (rng.bernoulli(cfg.flip_probability)) out = flip_horizontal(out);
  const bool blur = rng.bernoulli(cfg.blur_probability);
  const double sigma = rng.uniform(cfg.blur_sigma_min, cfg.blur_sigma_max);
  if (blur) out = gaussian_blur(out, sigma);
  return out;
}

Image augment(const Image& img, AugmentMode mode, std::uint64_t seed, const AugmentConfig& cfg) {
  return augment_scaled(scale_for_augment(img, cfg), mode, seed, cfg);
}

std::uint64_t augment_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t index) {
  return Rng::derive(run_seed, 0x617567, epoch, index).next();
}

RegionBox test_view_box(const Box& box, std::size_t src_height, std::size_t src_width, const AugmentConfig& cfg) {
  const double s = double(cfg.resolved_scale()), r = double(cfg.resolution);
  const double sy = s / double(src_height), sx = s / double(src_width);
  const double off = double((cfg.resolved_scale() - cfg.resolution) / 2);
  auto clip = [r](double v) { return std::clamp(v, 0.0, r); };
  return {clip(double(box.y0) * sy - off), clip(double(box.x0) * sx - off), clip(double(box.y1) * sy - off),
          clip(double(box.x1) * sx - off)};
}

std::vector<Image> prescale(const Dataset& data, const AugmentConfig& cfg) {
  std::vector<Image> out;
  out.reserve(data.size());
  for (const auto& s : data.samples) out.push_back(scale_for_augment(s.image, cfg));
  return out;
}

BatchLoader::BatchLoader(const Dataset& data, const std::vector<Image>& scaled, std::vector<std::size_t> order,
                         std::size_t batch_size, AugmentMode mode, std::uint64_t seed, std::size_t epoch,
                         const AugmentConfig& cfg, DType dtype, std::size_t prefetch)
    : data_(data),
      scaled_(scaled),
      order_(std::move(order)),
      batch_size_(batch_size),
      num_batches_(batch_size ? (order_.size() + batch_size - 1) / batch_size : 0),
      mode_(mode),
      seed_(seed),
      epoch_(epoch),
      cfg_(cfg),
      dtype_(dtype),
      prefetch_(std::max<std::size_t>(1, prefetch)) {
  if (batch_size == 0) throw std::invalid_argument("loader: batch_size must be positive");
  if (scaled_.size() != data_.size()) throw std::invalid_argument("loader: scaled cache does not match the dataset");
  worker_ = std::thread([this] { run(); });
}

BatchLoader::~BatchLoader() {
  {
    std::lock_guard lock(mutex_);
    stop_ = true;
  }
  cv_.notify_all();
  worker_.join();
}

void BatchLoader::run() {
  try {
    for (std::size_t b = 0; b < num_batches_; ++b) {
      {
        std::unique_lock lock(mutex_);
        cv_.wait(lock, [&] { return stop_ || queue_.size() < prefetch_; });
        if (stop_) return;
      }
      const std::size_t begin = b * batch_size_, end = std::min(order_.size(), begin + batch_size_);
      const std::size_t r = cfg_.resolution;
      Batch batch{Tensor::zeros({end - begin, 3, r, r}, dtype_), {}, {}};
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t idx = order_[i];
        image_into_batch(augment_scaled(scaled_[idx], mode_, augment_seed(seed_, epoch_, idx), cfg_), batch.images,
                         i - begin);
        batch.labels.push_back(data_.samples[idx].label);
        batch.indices.push_back(idx);
      }
      {
        std::lock_guard lock(mutex_);
        queue_.push_back(std::move(batch));
        ++produced_;
      }
      cv_.notify_all();
    }
  } catch (...) {
    std::lock_guard lock(mutex_);
    error_ = std::current_exception();
    stop_ = true;
  }
  cv_.notify_all();
}

std::optional<Batch> BatchLoader::next() {
  std::unique_lock lock(mutex_);
  if (consumed_ == num_batches_) return std::nullopt;
  cv_.wait(lock, [&] { return !queue_.empty() || error_; });
  if (queue_.empty()) std::rethrow_exception(error_);
  Batch b = std::move(queue_.front());
  queue_.pop_front();
  ++consumed_;
  lock.unlock();
  cv_.notify_all();
  return b;
}

}  // namespace pim
