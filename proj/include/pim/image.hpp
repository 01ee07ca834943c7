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

// RGB images, their file formats and the geometric/photometric transforms
// used by augmentation.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "pim/tensor.hpp"

namespace pim {

// Planar RGB, values in [0, 1]: data[(c * height + y) * width + x].
struct Image {
  std::size_t height = 0, width = 0;
  std::vector<float> data;

  Image() = default;
  Image(std::size_t h, std::size_t w) : height(h), width(w), data(3 * h * w, 0.0f) {}
  float& at(std::size_t c, std::size_t y, std::size_t x) { return data[(c * height + y) * width + x]; }
  float at(std::size_t c, std::size_t y, std::size_t x) const { return data[(c * height + y) * width + x]; }
};

// Decodes binary PPM (P6, maxval 255) or PNG (8-bit; gray, palette and
// alpha are converted to RGB). Throws std::runtime_error naming the file.
Image read_image(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& img);
void write_png(const std::filesystem::path& path, const Image& img);
// Grayscale P5 from raw bytes.
void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& height, std::size_t& width);

// Quantizes to 8 bits the way the writers do.
std::uint8_t to_byte(float v);

// Bilinear resampling with pixel-centre alignment.
Image resize_bilinear(const Image& img, std::size_t height, std::size_t width);
Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t height, std::size_t width);
Image flip_horizontal(const Image& img);
// Separable Gaussian, radius ceil(3 sigma), edges clamped.
Image gaussian_blur(const Image& img, double sigma);

// [1, 3, H, W] tensor of (value - 0.5) / 0.25.
Tensor image_to_tensor(const Image& img, DType dtype);
// Writes into a [B, 3, H, W] batch buffer at `slot`.
void image_into_batch(const Image& img, Tensor& batch, std::size_t slot);

}  // namespace pim
