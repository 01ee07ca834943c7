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

#include "pim/checkpoint.hpp"

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace pim {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

namespace {

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
  return out;
}

std::string param_key(std::size_t i) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "param.%03zu", i);
  return buf;
}

}  // namespace

std::string build_manifest(const RunConfig& cfg, const PimModel& model) {
  std::string out = cfg.to_text();
  const auto& items = model.parameters().items();
  out += "checkpoint.precision = " + to_string(model.config().dtype) + "\n";
  out += "checkpoint.parameters = " + std::to_string(items.size()) + "\n";
  for (std::size_t i = 0; i < items.size(); ++i)
    out += param_key(i) + " = " + items[i].name + " " + shape_text(items[i].tensor.shape()) + "\n";
  return out;
}

void save_checkpoint(const std::filesystem::path& path, const RunConfig& cfg, const PimModel& model) {
  const std::string manifest = build_manifest(cfg, model);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error(path.string() + ": cannot open for writing");
  out.write(kCheckpointMagic, 8);
  const std::uint64_t len = manifest.size();
  out.write(reinterpret_cast<const char*>(&len), sizeof len);
  out.write(manifest.data(), std::streamsize(len));
  for (const auto& p : model.parameters().items()) {
    dispatch(p.tensor.dtype(), [&]<class T>() {
      const auto data = p.tensor.data<T>();
      out.write(reinterpret_cast<const char*>(data.data()), std::streamsize(data.size_bytes()));
    });
  }
  if (!out) throw std::runtime_error(path.string() + ": write failed");
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(path.string() + ": cannot open");
  auto fail = [&](const std::string& why) -> std::runtime_error { return std::runtime_error(path.string() + ": " + why); };
  char magic[8];
  if (!in.read(magic, 8) || std::memcmp(magic, kCheckpointMagic, 8) != 0) throw fail("not a PIMCKPT1 checkpoint");
  std::uint64_t len = 0;
  if (!in.read(reinterpret_cast<char*>(&len), sizeof len) || len > (std::uint64_t(1) << 30))
    throw fail("bad manifest length");
  LoadedCheckpoint ck;
  ck.manifest.resize(len);
  if (!in.read(ck.manifest.data(), std::streamsize(len))) throw fail("truncated manifest");

  KeyValues config_keys, params;
  std::string precision;
  for (auto& [k, v] : parse_key_values(ck.manifest, path.string())) {
    if (k.rfind("param.", 0) == 0) params[k] = v;
    else if (k == "checkpoint.precision") precision = v;
    else if (k == "checkpoint.parameters") continue;
    else config_keys[k] = v;
  }
  ck.config = RunConfig::from_key_values(config_keys);
  if (precision != to_string(ck.config.model.dtype)) throw fail("checkpoint.precision disagrees with precision");
  ck.model = std::make_unique<PimModel>(ck.config.model, ck.config.seed);

  const auto& items = ck.model->parameters().items();
  if (params.size() != items.size()) {
    throw fail("manifest lists " + std::to_string(params.size()) + " parameters, the model has " +
               std::to_string(items.size()));
  }
  for (std::size_t i = 0; i < items.size(); ++i) {
    const std::string expected = items[i].name + " " + shape_text(items[i].tensor.shape());
    const auto it = params.find(param_key(i));
    if (it == params.end() || it->second != expected)
      throw fail(param_key(i) + " is '" + (it == params.end() ? "" : it->second) + "', expected '" + expected + "'");
    Tensor t = items[i].tensor;
    dispatch(t.dtype(), [&]<class T>() {
      auto data = t.data<T>();
      if (!in.read(reinterpret_cast<char*>(data.data()), std::streamsize(data.size_bytes())))
        throw fail("truncated parameter data at " + items[i].name);
    });
  }
  if (in.peek() != std::char_traits<char>::eof()) throw fail("trailing bytes after the last parameter");
  return ck;
}

}  // namespace pim
