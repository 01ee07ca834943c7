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

// Class-per-folder datasets, the motif ground-truth index, augmentation and
// the prefetching batch loader.

#pragma once

#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <exception>
#include <filesystem>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "pim/image.hpp"
#include "pim/tensor.hpp"

namespace pim {

// Pixel box, rows [y0, y1) and columns [x0, x1).
struct Box {
  std::size_t y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  std::size_t area() const { return (y1 - y0) * (x1 - x0); }
  bool operator==(const Box&) const = default;
};

// A box after geometric transforms, in continuous pixel coordinates.
struct RegionBox {
  double y0 = 0, x0 = 0, y1 = 0, x1 = 0;
  double area() const { return (y1 - y0) * (x1 - x0); }
  bool contains(double y, double x) const { return y >= y0 && y < y1 && x >= x0 && x < x1; }
};

// One line per image: "<relative path> <class> <y0> <x0> <y1> <x1>".
struct MotifEntry {
  std::string path;  // relative to the dataset root, '/' separated
  std::size_t label = 0;
  Box box;
};

inline constexpr const char* kMotifIndexName = "motifs.index";

void write_motif_index(const std::filesystem::path& path, const std::vector<MotifEntry>& entries);
std::vector<MotifEntry> read_motif_index(const std::filesystem::path& path);

struct Sample {
  std::string path;  // relative to the root
  std::size_t label = 0;
  Image image;
  std::optional<Box> motif;
};

struct Dataset {
  std::filesystem::path root;
  std::vector<std::string> class_names;  // index = label
  std::vector<Sample> samples;           // class order, then file name order
  bool has_motifs = false;               // a motifs.index was present

  std::size_t num_classes() const { return class_names.size(); }
  std::size_t size() const { return samples.size(); }
};

// Classes are the sub-directories of `root` in sorted order; images are the
// .png/.ppm files directly inside each (other files are ignored). Throws on
// an empty class folder or an undecodable image (naming the file).
Dataset ingest(const std::filesystem::path& root);

enum class AugmentMode { train, test };

struct AugmentConfig {
  std::size_t resolution = 64;  // crop size fed to the network
  std::size_t scale_size = 0;   // 0: round(resolution * 4 / 3)
  double flip_probability = 0.5;
  double blur_probability = 0.5;
  double blur_sigma_min = 0.1, blur_sigma_max = 2.0;

  std::size_t resolved_scale() const;
  void validate() const;
};

// Resize to the square scale_size; the first augmentation stage.
Image scale_for_augment(const Image& img, const AugmentConfig& cfg);
// Remaining stages on an already scaled image. Train: random crop, flip,
// blur; test: center crop. Deterministic in `seed`.
Image augment_scaled(const Image& scaled, AugmentMode mode, std::uint64_t seed, const AugmentConfig& cfg);
Image augment(const Image& img, AugmentMode mode, std::uint64_t seed, const AugmentConfig& cfg);

// Seed of sample `index` in `epoch`, independent of batching and threads.
std::uint64_t augment_seed(std::uint64_t run_seed, std::size_t epoch, std::size_t index);

// Where a source-image box lands in the test view (scale, then center crop),
// clipped to the crop.
RegionBox test_view_box(const Box& box, std::size_t src_height, std::size_t src_width, const AugmentConfig& cfg);

struct Batch {
  Tensor images;  // [B, 3, R, R]
  std::vector<std::size_t> labels;
  std::vector<std::size_t> indices;  // into the dataset
};

// Assembles batches of `order` on a worker thread, at most `prefetch`
// ahead of the consumer. Batch contents depend only on the arguments.
class BatchLoader {
 public:
  BatchLoader(const Dataset& data, const std::vector<Image>& scaled, std::vector<std::size_t> order,
              std::size_t batch_size, AugmentMode mode, std::uint64_t seed, std::size_t epoch,
              const AugmentConfig& cfg, DType dtype, std::size_t prefetch);
  ~BatchLoader();
  BatchLoader(const BatchLoader&) = delete;
  BatchLoader& operator=(const BatchLoader&) = delete;

  // Next batch in order, or nullopt after the last one. Rethrows worker
  // errors.
  std::optional<Batch> next();
  std::size_t num_batches() const { return num_batches_; }

 private:
  void run();

  const Dataset& data_;
  const std::vector<Image>& scaled_;
  std::vector<std::size_t> order_;
  std::size_t batch_size_, num_batches_;
  AugmentMode mode_;
  std::uint64_t seed_;
  std::size_t epoch_;
  AugmentConfig cfg_;
  DType dtype_;
  std::size_t prefetch_;

  std::mutex mutex_;
  std::condition_variable cv_;
  std::deque<Batch> queue_;
  std::size_t produced_ = 0, consumed_ = 0;
  bool stop_ = false;
  std::exception_ptr error_;
  std::thread worker_;
};

// Scaled copies of every image, for the loader.
std::vector<Image> prescale(const Dataset& data, const AugmentConfig& cfg);

}  // namespace pim
