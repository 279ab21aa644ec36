// Copyright 2026 The mllc Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>

namespace mllc {

/// Flat `key = value` settings. Later assignments override earlier ones.
///
/// Lines starting with `#` are comments. `include = path` splices another
/// file (relative to the including file) at that point, so a file can layer
/// overrides on top of shared defaults.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& source = "<text>",
                         const std::filesystem::path& base_dir = {});
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool contains(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& at(const std::string& key) const;
  const std::map<std::string, std::string>& entries() const noexcept { return values_; }
  const std::string& source() const noexcept { return source_; }

  std::string to_text() const;

 private:
  void parse_into(std::string_view text, const std::string& source, const std::filesystem::path& base_dir, int depth);

  std::map<std::string, std::string> values_;
  std::string source_;
};

// Strict scalar parsers; throw ConfigError naming the key.
int parse_int(const std::string& key, const std::string& value);
unsigned long long parse_u64(const std::string& key, const std::string& value);
double parse_real(const std::string& key, const std::string& value);
bool parse_bool(const std::string& key, const std::string& value);

}  // namespace mllc
