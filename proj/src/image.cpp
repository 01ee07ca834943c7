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

#include "pim/image.hpp"

#include <png.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <stdexcept>
#include <string>

namespace pim {

namespace {

[[noreturn]] void fail(const std::filesystem::path& path, const std::string& why) {
  throw std::runtime_error(path.string() + ": " + why);
}

std::string read_all(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(path, "cannot open");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// Reads one whitespace-delimited header token of a netpbm file, skipping
// comments.
std::string netpbm_token(const std::string& bytes, std::size_t& pos) {
  for (;;) {
    while (pos < bytes.size() && std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
    if (pos < bytes.size() && bytes[pos] == '#') {
      while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
      continue;
    }
    break;
  }
  const std::size_t start = pos;
  while (pos < bytes.size() && !std::isspace(static_cast<unsigned char>(bytes[pos]))) ++pos;
  return bytes.substr(start, pos - start);
}

std::size_t netpbm_number(const std::string& bytes, std::size_t& pos, const std::filesystem::path& path) {
  const std::string tok = netpbm_token(bytes, pos);
  if (tok.empty() || !std::all_of(tok.begin(), tok.end(), ::isdigit)) fail(path, "malformed netpbm header");
  return std::stoul(tok);
}

Image read_ppm(const std::filesystem::path& path) {
  const std::string bytes = read_all(path);
  std::size_t pos = 0;
  if (netpbm_token(bytes, pos) != "P6") fail(path, "not a binary PPM (P6)");
  const std::size_t w = netpbm_number(bytes, pos, path), h = netpbm_number(bytes, pos, path);
  const std::size_t maxval = netpbm_number(bytes, pos, path);
  if (maxval != 255) fail(path, "only 8-bit PPM is supported");
  ++pos;  // the single whitespace byte after maxval
  if (w == 0 || h == 0 || bytes.size() < pos + 3 * w * h) fail(path, "truncated PPM data");
  Image img(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = static_cast<unsigned char>(bytes[pos + (y * w + x) * 3 + c]) / 255.0f;
  return img;
}

struct FileCloser {
  void operator()(std::FILE* f) const { std::fclose(f); }
};

Image read_png(const std::filesystem::path& path) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "rb"));
  if (!file) fail(path, "cannot open");
  unsigned char sig[8];
  if (std::fread(sig, 1, 8, file.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) fail(path, "not a PNG file");

  png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_read_struct(&png, nullptr, nullptr);
    fail(path, "libpng initialisation failed");
  }
  Image img;
  std::vector<unsigned char> pixels;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "corrupt PNG data");
  }
  png_init_io(png, file.get());
  png_set_sig_bytes(png, 8);
  png_read_info(png, info);
  const auto w = png_get_image_width(png, info), h = png_get_image_height(png, info);
  const int color = png_get_color_type(png, info), depth = png_get_bit_depth(png, info);
  if (depth == 16) png_set_strip_16(png);
  if (color == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
  if (color == PNG_COLOR_TYPE_GRAY && depth < 8) png_set_expand_gray_1_2_4_to_8(png);
  if (color == PNG_COLOR_TYPE_GRAY || color == PNG_COLOR_TYPE_GRAY_ALPHA) png_set_gray_to_rgb(png);
  if (color & PNG_COLOR_MASK_ALPHA) png_set_strip_alpha(png);
  if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_strip_alpha(png);
  png_read_update_info(png, info);
  const std::size_t rowbytes = png_get_rowbytes(png, info);
  if (rowbytes != 3 * std::size_t(w)) {
    png_destroy_read_struct(&png, &info, nullptr);
    fail(path, "unsupported PNG pixel layout");
  }
  pixels.resize(rowbytes * h);
  std::vector<png_bytep> rows(h);
  for (std::size_t y = 0; y < h; ++y) rows[y] = pixels.data() + y * rowbytes;
  png_read_image(png, rows.data());
  png_read_end(png, nullptr);
  png_destroy_read_struct(&png, &info, nullptr);

  img = Image(h, w);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, y, x) = pixels[y * rowbytes + x * 3 + c] / 255.0f;
  return img;
}

std::vector<unsigned char> interleaved(const Image& img) {
  std::vector<unsigned char> out(3 * img.height * img.width);
  for (std::size_t y = 0; y < img.height; ++y)
    for (std::size_t x = 0; x < img.width; ++x)
      for (std::size_t c = 0; c < 3; ++c) out[(y * img.width + x) * 3 + c] = to_byte(img.at(c, y, x));
  return out;
}

void write_bytes(const std::filesystem::path& path, const std::string& header, const unsigned char* data,
                 std::size_t n) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(path, "cannot open for writing");
  out << header;
  out.write(reinterpret_cast<const char*>(data), static_cast<std::streamsize>(n));
  if (!out) fail(path, "write failed");
}

}  // namespace

std::uint8_t to_byte(float v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0f, 1.0f) * 255.0f));
}

Image read_image(const std::filesystem::path& path) {
  std::string ext = path.extension().string();
  std::ranges::transform(ext, ext.begin(), [](unsigned char c) { return std::tolower(c); });
  if (ext == ".ppm") return read_ppm(path);
  if (ext == ".png") return read_png(path);
  fail(path, "unsupported image extension (expected .png or .ppm)");
}

void write_ppm(const std::filesystem::path& path, const Image& img) {
  const auto bytes = interleaved(img);
  write_bytes(path, "P6\n" + std::to_string(img.width) + " " + std::to_string(img.height) + "\n255\n",
              bytes.data(), bytes.size());
}

void write_png(const std::filesystem::path& path, const Image& img) {
  std::unique_ptr<std::FILE, FileCloser> file(std::fopen(path.c_str(), "wb"));
  if (!file) fail(path, "cannot open for writing");
  png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
  png_infop info = png ? png_create_info_struct(png) : nullptr;
  if (!info) {
    png_destroy_write_struct(&png, nullptr);
    fail(path, "libpng initialisation failed");
  }
  auto bytes = interleaved(img);
  std::vector<png_bytep> rows(img.height);
  for (std::size_t y = 0; y < img.height; ++y) rows[y] = bytes.data() + y * img.width * 3;
  if (setjmp(png_jmpbuf(png))) {
    png_destroy_write_struct(&png, &info);
    fail(path, "PNG encoding failed");
  }
  png_init_io(png, file.get());
  png_set_IHDR(png, info, png_uint_32(img.width), png_uint_32(img.height), 8, PNG_COLOR_TYPE_RGB,
               PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
  png_write_info(png, info);
  png_write_image(png, rows.data());
  png_write_end(png, nullptr);
  png_destroy_write_struct(&png, &info);
}

void write_pgm(const std::filesystem::path& path, std::size_t height, std::size_t width,
               const std::vector<std::uint8_t>& pixels) {
  if (pixels.size() != height * width) fail(path, "pixel count does not match the PGM size");
  write_bytes(path, "P5\n" + std::to_string(width) + " " + std::to_string(height) + "\n255\n", pixels.data(),
              pixels.size());
}

std::vector<std::uint8_t> read_pgm(const std::filesystem::path& path, std::size_t& height, std::size_t& width) {
  const std::string bytes = read_all(path);
  std::size_t pos = 0;
  if (netpbm_token(bytes, pos) != "P5") fail(path, "not a binary PGM (P5)");
  width = netpbm_number(bytes, pos, path);
  height = netpbm_number(bytes, pos, path);
  if (netpbm_number(bytes, pos, path) != 255) fail(path, "only 8-bit PGM is supported");
  ++pos;
  if (bytes.size() < pos + width * height) fail(path, "truncated PGM data");
  return {bytes.begin() + long(pos), bytes.begin() + long(pos + width * height)};
}

Image resize_bilinear(const Image& img, std::size_t height, std::size_t width) {
  Image out(height, width);
  const double sy = double(img.height) / double(height), sx = double(img.width) / double(width);
  for (std::size_t y = 0; y < height; ++y) {
    const double fy = std::clamp((double(y) + 0.5) * sy - 0.5, 0.0, double(img.height - 1));
    const std::size_t y0 = std::size_t(fy), y1 = std::min(y0 + 1, img.height - 1);
    const float wy = float(fy - double(y0));
    for (std::size_t x = 0; x < width; ++x) {
      const double fx = std::clamp((double(x) + 0.5) * sx - 0.5, 0.0, double(img.width - 1));
      const std::size_t x0 = std::size_t(fx), x1 = std::min(x0 + 1, img.width - 1);
      const float wx = float(fx - double(x0));
      for (std::size_t c = 0; c < 3; ++c) {
        const float top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const float bottom = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bottom * wy;
      }
    }
  }
  return out;
}

Image crop(const Image& img, std::size_t y0, std::size_t x0, std::size_t height, std::size_t width) {
  if (y0 + height > img.height || x0 + width > img.width) {
    throw std::invalid_argument("crop: window exceeds the " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " image");
  }
  Image out(height, width);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t x = 0; x < width; ++x) out.at(c, y, x) = img.at(c, y0 + y, x0 + x);
  return out;
}

Image flip_horizontal(const Image& img) {
  Image out(img.height, img.width);
  for (std::size_t c = 0; c < 3; ++c)
    for (std::size_t y = 0; y < img.height; ++y)
      for (std::size_t x = 0; x < img.width; ++x) out.at(c, y, x) = img.at(c, y, img.width - 1 - x);
  return out;
}

Image gaussian_blur(const Image& img, double sigma) {
  if (!(sigma > 0.0)) throw std::invalid_argument("gaussian_blur: sigma must be positive");
  const long radius = long(std::ceil(3.0 * sigma));
  std::vector<float> kernel(std::size_t(2 * radius + 1));
  double total = 0;
  for (long i = -radius; i <= radius; ++i) total += kernel[std::size_t(i + radius)] = float(std::exp(-0.5 * double(i * i) / (sigma * sigma)));
  for (auto& k : kernel) k = float(k / total);

  const long h = long(img.height), w = long(img.width);
  Image tmp(img.height, img.width), out(img.height, img.width);
  for (std::size_t c = 0; c < 3; ++c) {
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        float acc = 0;
        for (long i = -radius; i <= radius; ++i)
          acc += kernel[std::size_t(i + radius)] * img.at(c, std::size_t(y), std::size_t(std::clamp(x + i, 0L, w - 1)));
        tmp.at(c, std::size_t(y), std::size_t(x)) = acc;
      }
    for (long y = 0; y < h; ++y)
      for (long x = 0; x < w; ++x) {
        float acc = 0;
        for (long i = -radius; i <= radius; ++i)
          acc += kernel[std::size_t(i + radius)] * tmp.at(c, std::size_t(std::clamp(y + i, 0L, h - 1)), std::size_t(x));
        out.at(c, std::size_t(y), std::size_t(x)) = acc;
      }
  }
  return out;
}

Tensor image_to_tensor(const Image& img, DType dtype) {
  Tensor t = Tensor::zeros({1, 3, img.height, img.width}, dtype);
  image_into_batch(img, t, 0);
  return t;
}

void image_into_batch(const Image& img, Tensor& batch, std::size_t slot) {
  const auto& s = batch.shape();
  if (s.size() != 4 || s[1] != 3 || s[2] != img.height || s[3] != img.width || slot >= s[0]) {
    throw std::invalid_argument("image_into_batch: image " + std::to_string(img.height) + "x" +
                                std::to_string(img.width) + " does not fit batch " + shape_str(s));
  }
  dispatch(batch.dtype(), [&]<class T>() {
    T* dst = batch.data<T>().data() + slot * img.data.size();
    for (std::size_t i = 0; i < img.data.size(); ++i) dst[i] = static_cast<T>((img.data[i] - 0.5f) / 0.25f);
  });
}

}  // namespace pim
