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

// Synthetic fine-grained dataset with planted ground truth. Every image holds
// exactly one class motif (an 8x8 bit pattern drawn as a two-colour tile) on
// a cluttered background, plus decoy tiles in the same colours whose
// patterns are corrupted copies of other classes' motifs, so only the bit
// pattern identifies the class.

#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "pim/dataset.hpp"
#include "pim/image.hpp"
#include "pim/keyvalue.hpp"

namespace pim {

struct SyntheticSpec {
  std::size_t num_classes = 10;
  std::size_t train_per_class = 100;
  std::size_t test_per_class = 50;
  std::size_t canvas = 64;
  std::size_t motif_bits = 8;    // motif is motif_bits x motif_bits
  std::size_t motif_scale = 2;   // pixels per bit
  double clutter_density = 0.35;  // expected fraction of pixels under clutter
  std::size_t decoys_per_image = 1;
  std::size_t decoy_flips = 24;  // bits flipped in a decoy's source motif
  std::size_t margin = 8;        // motif keeps this far from the canvas edge
  std::size_t min_hamming = 16;  // between any two class motifs
  std::string format = "png";    // png | ppm
  // Tile colours: "random" draws both per image; "fixed" uses black on white.
  std::string tile_colors = "fixed";

  std::size_t motif_pixels() const { return motif_bits * motif_scale; }
  void validate() const;
  static SyntheticSpec from_key_values(const KeyValues& kv);
  KeyValues to_key_values() const;
};

using Motif = std::vector<std::uint8_t>;  // motif_bits^2 bits, row-major

std::size_t hamming(const Motif& a, const Motif& b);

// Class motifs for a seed, pairwise Hamming distance >= spec.min_hamming.
std::vector<Motif> class_motifs(const SyntheticSpec& spec, std::uint64_t seed);

struct SyntheticImage {
  Image image;
  Box box;
};

// One image. split 0 = train, 1 = test.
SyntheticImage render_synthetic(const SyntheticSpec& spec, const std::vector<Motif>& motifs, std::uint64_t seed,
                                std::size_t split, std::size_t label, std::size_t index);

std::string synthetic_class_name(std::size_t label);

// Writes <out>/train and <out>/test (the latter only when test_per_class >
// 0), each a class-per-folder tree with its own motifs.index.
void synth_generate(const SyntheticSpec& spec, std::uint64_t seed, const std::filesystem::path& out);

}  // namespace pim
