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

// Flat `key = value` text used by run configs, synthetic specs and
// manifests. '#' starts a comment; blank lines are ignored.

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace pim {

using KeyValues = std::map<std::string, std::string>;

// Throws std::invalid_argument with the line number on malformed lines or
// repeated keys. `origin` names the source in messages.
KeyValues parse_key_values(const std::string& text, const std::string& origin);
KeyValues read_key_values(const std::filesystem::path& path);

// "key=value" as given on a command line.
std::pair<std::string, std::string> split_override(const std::string& arg);

// Typed accessors; the message names the key and the offending text.
std::size_t parse_size(const std::string& key, const std::string& value);
std::uint64_t parse_u64(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);
// Comma-separated; reals also accept "a/b" fractions.
std::vector<std::size_t> parse_size_list(const std::string& key, const std::string& value);
std::vector<double> parse_real_list(const std::string& key, const std::string& value);

// Shortest text that parses back to the same double.
std::string format_real(double v);
std::string join(const std::vector<std::size_t>& values);
std::string join(const std::vector<double>& values);

}  // namespace pim
