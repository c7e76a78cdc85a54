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

#include "dmkcm/neural/config.hpp"

#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>
#include <vector>

namespace dmkcm::neural {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \t\r\n") - first + 1);
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  std::size_t out = 0;
  auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config key " + key + ": expected a non-negative integer, got '" + v + "'");
  }
  return out;
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config key " + key + ": expected true/false, got '" + v + "'");
}

struct Field {
  const char* key;
  std::function<std::string(const ModelConfig&)> get;
  std::function<void(ModelConfig&, const std::string&)> set;
};

#define SIZE_FIELD(name)                                                          \
  Field {                                                                         \
    #name, [](const ModelConfig& c) { return std::to_string(c.name); },           \
        [](ModelConfig& c, const std::string& v) { c.name = parse_size(#name, v); } \
  }
#define BOOL_FIELD(name)                                                          \
  Field {                                                                         \
    #name, [](const ModelConfig& c) { return std::string(c.name ? "true" : "false"); }, \
        [](ModelConfig& c, const std::string& v) { c.name = parse_bool(#name, v); } \
  }

const std::vector<Field>& fields() {
  static const std::vector<Field> f = {
      SIZE_FIELD(candidate_cap),
      Field{"composition",
            [](const ModelConfig& c) {
              return std::string(c.composition == Composition::kSubtraction ? "sub" : "mult");
            },
            [](ModelConfig& c, const std::string& v) {
              if (v == "sub") c.composition = Composition::kSubtraction;
              else if (v == "mult") c.composition = Composition::kMultiplication;
              else throw ConfigError("config key composition: expected sub or mult, got '" + v + "'");
            }},
      SIZE_FIELD(context_window),
      SIZE_FIELD(d_model),
      BOOL_FIELD(distinct_type_filter),
      Field{"doc_pooling",
            [](const ModelConfig& c) {
              return std::string(c.doc_pooling == Pooling::kLastToken ? "last" : "mean");
            },
            [](ModelConfig& c, const std::string& v) {
              if (v == "last") c.doc_pooling = Pooling::kLastToken;
              else if (v == "mean") c.doc_pooling = Pooling::kMean;
              else throw ConfigError("config key doc_pooling: expected last or mean, got '" + v + "'");
            }},
      SIZE_FIELD(ff_dim),
      SIZE_FIELD(filtered_docs),
      SIZE_FIELD(gcn_layers),
      SIZE_FIELD(max_length),
      SIZE_FIELD(memory_window),
      SIZE_FIELD(n_heads),
      SIZE_FIELD(n_layers),
      SIZE_FIELD(num_relations),
      SIZE_FIELD(top_neighbors),
      SIZE_FIELD(triple_cap),
      BOOL_FIELD(use_first_hop),
      BOOL_FIELD(use_memory),
      BOOL_FIELD(use_second_hop),
      SIZE_FIELD(vocab_size),
  };
  return f;
}

#undef SIZE_FIELD
#undef BOOL_FIELD

}  // namespace

void ModelConfig::validate() const {
  auto positive = [](std::size_t v, const char* name) {
    if (v == 0) throw ConfigError(std::string("model config: ") + name + " must be >= 1");
  };
  positive(d_model, "d_model");
  positive(n_heads, "n_heads");
  positive(n_layers, "n_layers");
  positive(ff_dim, "ff_dim");
  positive(vocab_size, "vocab_size");
  positive(num_relations, "num_relations");
  positive(max_length, "max_length");
  positive(triple_cap, "triple_cap");
  positive(top_neighbors, "top_neighbors");
  positive(filtered_docs, "filtered_docs");
  positive(candidate_cap, "candidate_cap");
  positive(memory_window, "memory_window");
  if (d_model % n_heads != 0) {
    throw ConfigError("model config: d_model " + std::to_string(d_model) +
                      " is not divisible by n_heads " + std::to_string(n_heads));
  }
}

std::string ModelConfig::to_text() const {
  std::ostringstream out;
  for (const auto& f : fields()) out << f.key << '=' << f.get(*this) << '\n';
  return out.str();
}

std::map<std::string, std::string> ModelConfig::apply(
    const std::map<std::string, std::string>& values) {
  std::map<std::string, std::string> unknown;
  for (const auto& [k, v] : values) {
    bool found = false;
    for (const auto& f : fields()) {
      if (k == f.key) {
        f.set(*this, v);
        found = true;
        break;
      }
    }
    if (!found) unknown.emplace(k, v);
  }
  return unknown;
}

ModelConfig ModelConfig::from_text(const std::string& text) {
  ModelConfig c;
  auto unknown = c.apply(parse_key_values(text));
  if (!unknown.empty()) throw ConfigError("model config: unknown key " + unknown.begin()->first);
  return c;
}

void ModelConfig::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ConfigError("cannot write " + path.string());
  out << to_text();
}

ModelConfig ModelConfig::load(const std::filesystem::path& path) {
  return from_text(read_text_file(path));
}

std::map<std::string, std::string> parse_key_values(const std::string& text) {
  std::map<std::string, std::string> out;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(line_no) + ": expected key=value");
    }
    auto key = trim(line.substr(0, eq));
    auto value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
    if (!out.emplace(key, value).second) {
      throw ConfigError("config line " + std::to_string(line_no) + ": duplicate key " + key);
    }
  }
  return out;
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace dmkcm::neural
