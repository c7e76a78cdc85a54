/*
 * Copyright 2026 The DMKCM Authors
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     http://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>

namespace dmkcm::neural {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class Composition { kSubtraction, kMultiplication };
enum class Pooling { kLastToken, kMean };

/// Model shape plus the knowledge-branch switches. Defaults are the
/// desk-scale configuration; 512/8/6 is reachable by overriding keys.
struct ModelConfig {
  std::size_t d_model = 64;
  std::size_t n_heads = 2;
  std::size_t n_layers = 2;
  std::size_t ff_dim = 128;
  std::size_t gcn_layers = 2;
  std::size_t vocab_size = 0;
  std::size_t num_relations = 0;
  std::size_t max_length = 64;
  std::size_t triple_cap = 64;
  std::size_t top_neighbors = 100;
  std::size_t filtered_docs = 5;    // T
  std::size_t candidate_cap = 10;
  std::size_t memory_window = 8;
  std::size_t context_window = 3;
  Composition composition = Composition::kSubtraction;
  Pooling doc_pooling = Pooling::kLastToken;
  bool distinct_type_filter = false;
  bool use_first_hop = true;
  bool use_memory = true;
  bool use_second_hop = true;

  void validate() const;
  bool operator==(const ModelConfig&) const = default;

  /// key=value lines, sorted by key.
  std::string to_text() const;
  static ModelConfig from_text(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static ModelConfig load(const std::filesystem::path& path);
  /// Applies recognised keys; returns the keys it did not recognise.
  std::map<std::string, std::string> apply(const std::map<std::string, std::string>& values);
};

/// Parses key=value lines; '#' starts a comment. Duplicate keys are errors.
std::map<std::string, std::string> parse_key_values(const std::string& text);
std::string read_text_file(const std::filesystem::path& path);

}  // namespace dmkcm::neural
