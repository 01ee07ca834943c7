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

#include "pim/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "pim/rng.hpp"

namespace pim {

namespace {

using Color = std::array<float, 3>;

constexpr std::uint64_t kMotifStream = 0x6d6f746966;  // "motif"

Color random_color(Rng& rng) {
  return {float(rng.uniform()), float(rng.uniform()), float(rng.uniform())};
}

double color_distance(const Color& a, const Color& b) {
  double s = 0;
  for (int c = 0; c < 3; ++c) s += (a[c] - b[c]) * (a[c] - b[c]);
  return std::sqrt(s);
}

void fill_rect(Image& img, long y0, long x0, long h, long w, const Color& color) {
  const long H = long(img.height), W = long(img.width);
  for (long y = std::max(0L, y0); y < std::min(H, y0 + h); ++y)
    for (long x = std::max(0L, x0); x < std::min(W, x0 + w); ++x)
      for (std::size_t c = 0; c < 3; ++c) img.at(c, std::size_t(y), std::size_t(x)) = color[c];
}

void draw_tile(Image& img, const SyntheticSpec& spec, const Motif& bits, std::size_t y0, std::size_t x0,
               const Color& fg, const Color& bg) {
  const std::size_t n = spec.motif_bits, s = spec.motif_scale;
  for (std::size_t by = 0; by < n; ++by)
    for (std::size_t bx = 0; bx < n; ++bx)
      fill_rect(img, long(y0 + by * s), long(x0 + bx * s), long(s), long(s), bits[by * n + bx] ? fg : bg);
}

bool overlaps(const Box& a, const Box& b, std::size_t gap) {
  return a.y0 < b.y1 + gap && b.y0 < a.y1 + gap && a.x0 < b.x1 + gap && b.x0 < a.x1 + gap;
}

}  // namespace

void SyntheticSpec::validate() const {
  auto fail = [](const std::string& why) { throw std::invalid_argument("synthetic spec: " + why); };
  if (num_classes < 2) fail("num_classes must be at least 2");
  if (train_per_class == 0) fail("train_per_class must be positive");
  if (motif_bits == 0 || motif_scale == 0) fail("motif_bits and motif_scale must be positive");
  if (canvas < motif_pixels() + 2 * margin) fail("canvas too small for the motif and margin");
  if (!(clutter_density >= 0.0 && clutter_density <= 1.0)) fail("clutter_density must be in [0, 1]");
  if (min_hamming > motif_bits * motif_bits) fail("min_hamming exceeds the motif size");
  if (decoys_per_image > 0 && (decoy_flips == 0 || decoy_flips > motif_bits * motif_bits))
    fail("decoy_flips must be in [1, motif_bits^2] when decoys are drawn");
  if (format != "png" && format != "ppm") fail("format must be png or ppm");
  if (tile_colors != "random" && tile_colors != "fixed") fail("tile_colors must be random or fixed");
}

SyntheticSpec SyntheticSpec::from_key_values(const KeyValues& kv) {
  SyntheticSpec s;
  for (const auto& [key, value] : kv) {
    if (key == "num_classes") s.num_classes = parse_size(key, value);
    else if (key == "train_per_class") s.train_per_class = parse_size(key, value);
    else if (key == "test_per_class") s.test_per_class = parse_size(key, value);
    else if (key == "canvas") s.canvas = parse_size(key, value);
    else if (key == "motif_bits") s.motif_bits = parse_size(key, value);
    else if (key == "motif_scale") s.motif_scale = parse_size(key, value);
    else if (key == "clutter_density") s.clutter_density = parse_real(key, value);
    else if (key == "decoys_per_image") s.decoys_per_image = parse_size(key, value);
    else if (key == "decoy_flips") s.decoy_flips = parse_size(key, value);
    else if (key == "margin") s.margin = parse_size(key, value);
    else if (key == "min_hamming") s.min_hamming = parse_size(key, value);
    else if (key == "format") s.format = value;
    else if (key == "tile_colors") s.tile_colors = value;
    else throw std::invalid_argument("synthetic spec: unknown key '" + key + "'");
  }
  s.validate();
  return s;
}

KeyValues SyntheticSpec::to_key_values() const {
  return {{"num_classes", std::to_string(num_classes)},
          {"train_per_class", std::to_string(train_per_class)},
          {"test_per_class", std::to_string(test_per_class)},
          {"canvas", std::to_string(canvas)},
          {"motif_bits", std::to_string(motif_bits)},
          {"motif_scale", std::to_string(motif_scale)},
          {"clutter_density", format_real(clutter_density)},
          {"decoys_per_image", std::to_string(decoys_per_image)},
          {"decoy_flips", std::to_string(decoy_flips)},
          {"margin", std::to_string(margin)},
          {"min_hamming", std::to_string(min_hamming)},
          {"format", format},
          {"tile_colors", tile_colors}};
}

std::size_t hamming(const Motif& a, const Motif& b) {
  if (a.size() != b.size()) throw std::invalid_argument("hamming: motif sizes differ");
  std::size_t d = 0;
  for (std::size_t i = 0; i < a.size(); ++i) d += a[i] != b[i];
  return d;
}

std::vector<Motif> class_motifs(const SyntheticSpec& spec, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, kMotifStream);
  const std::size_t n = spec.motif_bits * spec.motif_bits;
  std::vector<Motif> motifs;
  for (std::size_t attempt = 0; motifs.size() < spec.num_classes; ++attempt) {
    if (attempt > 100000) throw std::runtime_error("synthetic: cannot draw motifs at the requested min_hamming");
    Motif m(n);
    for (auto& bit : m) bit = std::uint8_t(rng.below(2));
    const bool far = std::all_of(motifs.begin(), motifs.end(),
                                 [&](const Motif& other) { return hamming(m, other) >= spec.min_hamming; });
    // Solid tiles would read as colour patches rather than patterns.
    const auto ones = std::size_t(std::count(m.begin(), m.end(), 1));
    if (far && ones >= n / 4 && ones <= n - n / 4) motifs.push_back(std::move(m));
  }
  return motifs;
}

SyntheticImage render_synthetic(const SyntheticSpec& spec, const std::vector<Motif>& motifs, std::uint64_t seed,
                                std::size_t split, std::size_t label, std::size_t index) {
  Rng rng = Rng::derive(seed, 1 + split, label, index);
  const std::size_t R = spec.canvas, size = spec.motif_pixels();
  SyntheticImage out{Image(R, R), {}};
  Image& img = out.image;

  // Background: a linear gradient between two colours plus pixel noise.
  const Color a = random_color(rng), b = random_color(rng);
  const double angle = rng.uniform(0.0, 6.283185307179586);
  const double dy = std::sin(angle), dx = std::cos(angle);
  for (std::size_t y = 0; y < R; ++y)
    for (std::size_t x = 0; x < R; ++x) {
      const double t = 0.5 + 0.5 * ((double(y) / double(R) - 0.5) * dy + (double(x) / double(R) - 0.5) * dx);
      for (std::size_t c = 0; c < 3; ++c)
        img.at(c, y, x) = float(std::clamp(a[c] + (b[c] - a[c]) * t + rng.uniform(-0.04, 0.04), 0.0, 1.0));
    }

  // Clutter: small rectangles and bars. Mean area is 12 pixels.
  const auto strokes = std::size_t(std::llround(spec.clutter_density * double(R * R) / 12.0));
  for (std::size_t i = 0; i < strokes; ++i) {
    const bool bar = rng.bernoulli(0.5);
    const long h = bar ? long(1 + rng.below(2)) : long(2 + rng.below(4));
    const long w = bar ? long(4 + rng.below(8)) : long(2 + rng.below(4));
    const bool vertical = rng.bernoulli(0.5);
    fill_rect(img, long(rng.below(R)) - 2, long(rng.below(R)) - 2, vertical ? w : h, vertical ? h : w,
              random_color(rng));
  }

  // Tile colours, shared by the motif and its decoys.
  Color fg = random_color(rng), bg = random_color(rng);
  while (color_distance(fg, bg) < 0.5) bg = random_color(rng);
  if (spec.tile_colors == "fixed") fg = {0, 0, 0}, bg = {1, 1, 1};

  const std::size_t span = R - 2 * spec.margin - size;
  const std::size_t my = spec.margin + rng.below(span + 1), mx = spec.margin + rng.below(span + 1);
  out.box = {my, mx, my + size, mx + size};

  std::vector<Box> taken{out.box};
  for (std::size_t d = 0; d < spec.decoys_per_image; ++d) {
    std::size_t source = rng.below(spec.num_classes - 1);
    if (source >= label) ++source;
    Motif decoy = motifs[source];
    std::vector<std::size_t> positions(decoy.size());
    for (std::size_t i = 0; i < positions.size(); ++i) positions[i] = i;
    rng.shuffle(positions);
    for (std::size_t i = 0; i < spec.decoy_flips; ++i) decoy[positions[i]] ^= 1;
    // Never an exact class motif, so each image holds exactly one.
    const bool distinct = std::all_of(motifs.begin(), motifs.end(), [&](const Motif& m) { return hamming(m, decoy) > 0; });
    for (int attempt = 0; attempt < 100 && distinct; ++attempt) {
      const std::size_t y = rng.below(R - size + 1), x = rng.below(R - size + 1);
      const Box box{y, x, y + size, x + size};
      if (std::any_of(taken.begin(), taken.end(), [&](const Box& t) { return overlaps(box, t, 2); })) continue;
      draw_tile(img, spec, decoy, y, x, fg, bg);
      taken.push_back(box);
      break;
    }
  }
  draw_tile(img, spec, motifs.at(label), my, mx, fg, bg);
  return out;
}

std::string synthetic_class_name(std::size_t label) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "class%02zu", label);
  return buf;
}

void synth_generate(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& out) {
  spec.validate();
  const auto motifs = class_motifs(spec, seed);
  const std::size_t per_class[] = {spec.train_per_class, spec.test_per_class};
  const char* split_names[] = {"train", "test"};
  for (std::size_t split = 0; split < 2; ++split) {
    if (per_class[split] == 0) continue;
    const auto root = out / split_names[split];
    std::error_code ec;
    std::filesystem::create_directories(root, ec);
    if (ec) throw std::runtime_error(root.string() + ": cannot create directory: " + ec.message());
    std::vector<MotifEntry> entries;
    for (std::size_t label = 0; label < spec.num_classes; ++label) {
      const std::string cls = synthetic_class_name(label);
      std::filesystem::create_directories(root / cls, ec);
      if (ec) throw std::runtime_error((root / cls).string() + ": cannot create directory: " + ec.message());
      for (std::size_t i = 0; i < per_class[split]; ++i) {
        char name[32];
        std::snprintf(name, sizeof name, "img%04zu.%s", i, spec.format.c_str());
        const auto rendered = render_synthetic(spec, motifs, seed, split, label, i);
        const auto path = root / cls / name;
        if (spec.format == "png") write_png(path, rendered.image);
        else write_ppm(path, rendered.image);
        entries.push_back({cls + "/" + name, label, rendered.box});
      }
    }
    write_motif_index(root / kMotifIndexName, entries);
  }
}

}  // namespace pim
