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

// Checkpoint file:
//   "PIMCKPT1"
//   manifest length, uint64 little-endian
//   manifest text (the resolved run config, then checkpoint.* and param.*
//   lines naming every parameter block)
//   parameter blocks in declaration order, little-endian; 32-bit floats for
//   f32 runs and 64-bit for f64 runs (checkpoint.precision says which)

#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include "pim/config.hpp"
#include "pim/model.hpp"

namespace pim {

inline constexpr char kCheckpointMagic[] = "PIMCKPT1";

// Resolved config plus the parameter table of `model`.
std::string build_manifest(const RunConfig& cfg, const PimModel& model);

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const PimModel& model);

struct LoadedCheckpoint {
  RunConfig config;
  std::string manifest;
  std::unique_ptr<PimModel> model;
};

// Rebuilds the model from the manifest and fills its parameters; throws
// when a parameter name, shape or the file length disagrees.
LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace pim
