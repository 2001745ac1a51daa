// Copyright 2026 The GRCNN Toolkit Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Run configuration as flat dotted keys ("train.lr"). Resolution order:
// preset defaults, then a JSON file, then command-line overrides.

#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "json.hpp"

#include "grcnn/network.hpp"
#include "grcnn/trainer.hpp"

namespace grcnn {

class Config {
 public:
  /// Every known key with its default for the given preset (tiny or paper).
  static Config defaults(const std::string& preset);

  /// Merges a JSON object. Nested objects are flattened with dots. Unknown
  /// keys and type mismatches throw ConfigError.
  void merge(const nlohmann::json& object, const std::string& origin);
  void merge_file(const std::filesystem::path& path);
  /// Applies "key=value"; the value is parsed according to the key's type.
  void set_override(const std::string& assignment);
  void set(const std::string& key, const std::string& value);

  [[nodiscard]] bool has(const std::string& key) const { return values_.contains(key); }
  [[nodiscard]] std::string str(const std::string& key) const;
  [[nodiscard]] double num(const std::string& key) const;
  [[nodiscard]] std::uint64_t count(const std::string& key) const;
  [[nodiscard]] bool flag(const std::string& key) const;
  [[nodiscard]] std::vector<double> list(const std::string& key) const;

  [[nodiscard]] const nlohmann::json& values() const { return values_; }
  void write(const std::filesystem::path& path) const;

  [[nodiscard]] GrcnnConfig model() const;
  [[nodiscard]] TrainConfig train() const;
  [[nodiscard]] AugmixConfig augmix() const;

 private:
  const nlohmann::json& at(const std::string& key) const;
  void assign(const std::string& key, const nlohmann::json& value, const std::string& origin);

  nlohmann::json values_ = nlohmann::json::object();
};

/// Reads "model.preset" from a config file without resolving anything else;
/// empty when the file does not set it.
std::string preset_in_file(const std::filesystem::path& path);

}  // namespace grcnn
