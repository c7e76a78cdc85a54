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

#include "dmkcm/corpus/corpus.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "dmkcm/numerics/tensor.hpp"

namespace dmkcm::corpus {

namespace {

bool is_space(unsigned char c) { return c == ' ' || c == '\t' || c == '\n' || c == '\r' || c == '\f' || c == '\v'; }

bool is_punct(unsigned char c) {
  return c < 128 && ((c >= 33 && c <= 47) || (c >= 58 && c <= 64) || (c >= 91 && c <= 96) ||
                     (c >= 123 && c <= 126));
}

const char* const kReservedTokens[] = {"<pad>", "<bos>", "<eos>", "<unk>"};

}  // namespace

Tokens tokenize(std::string_view text) {
  Tokens out;
  std::string current;
  auto flush = [&] {
    if (!current.empty()) out.push_back(std::move(current));
    current.clear();
  };
  for (char ch : text) {
    const auto c = static_cast<unsigned char>(ch);
    if (is_space(c)) {
      flush();
    } else if (is_punct(c)) {
      flush();
      out.emplace_back(1, ch);
    } else {
      current += (c >= 'A' && c <= 'Z') ? static_cast<char>(c - 'A' + 'a') : ch;
    }
  }
  flush();
  return out;
}

bool is_word(std::string_view token) {
  return std::any_of(token.begin(), token.end(), [](char ch) {
    const auto c = static_cast<unsigned char>(ch);
    return c >= 128 || (c >= '0' && c <= '9') || (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
  });
}

std::vector<Conversation> read_conversations(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open dialogue file " + path.string());
  std::vector<Conversation> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (std::all_of(line.begin(), line.end(), [](char c) { return is_space(static_cast<unsigned char>(c)); })) {
      continue;
    }
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw ParseError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("id") || !j["id"].is_string() || !j.contains("turns") ||
        !j["turns"].is_array()) {
      throw ParseError(where + ": expected {\"id\": str, \"turns\": [str, ...]}");
    }
    Conversation conv;
    conv.id = j["id"].get<std::string>();
    for (const auto& t : j["turns"]) {
      if (!t.is_string()) throw ParseError(where + ": turns must be strings");
      auto text = t.get<std::string>();
      if (tokenize(text).empty()) throw ParseError(where + ": empty turn");
      conv.turns.push_back(std::move(text));
    }
    if (j.contains("persona")) {
      if (!j["persona"].is_array()) throw ParseError(where + ": persona must be a list");
      for (const auto& p : j["persona"]) {
        if (!p.is_string()) throw ParseError(where + ": persona entries must be strings");
        conv.persona.push_back(p.get<std::string>());
      }
    }
    out.push_back(std::move(conv));
  }
  return out;
}

std::vector<DialogueUnit> make_units(const Conversation& conversation, const LoadOptions& options) {
  std::vector<DialogueUnit> units;
  std::vector<std::string> history;
  if (options.include_persona) history = conversation.persona;
  const std::size_t lead = history.size();
  history.insert(history.end(), conversation.turns.begin(), conversation.turns.end());
  std::size_t n = 0;
  for (std::size_t r = 1; r < conversation.turns.size(); r += 2) {
    const std::size_t x = lead + r - 1;  // user utterance position within history
    DialogueUnit unit;
    unit.conversation_id = conversation.id;
    unit.turn_index = ++n;
    const std::size_t start = x > options.window ? x - options.window : 0;
    unit.context_turns.assign(history.begin() + static_cast<std::ptrdiff_t>(start),
                              history.begin() + static_cast<std::ptrdiff_t>(x));
    unit.user_utterance = history[x];
    unit.gold_response = history[x + 1];
    units.push_back(std::move(unit));
  }
  return units;
}

std::vector<DialogueUnit> load_dialogues(const std::filesystem::path& path,
                                         const LoadOptions& options) {
  std::vector<DialogueUnit> out;
  for (const auto& conv : read_conversations(path)) {
    auto units = make_units(conv, options);
    out.insert(out.end(), std::make_move_iterator(units.begin()),
               std::make_move_iterator(units.end()));
  }
  return out;
}

std::vector<Tokens> conversation_token_sequences(const std::vector<Conversation>& conversations,
                                                 bool include_persona) {
  std::vector<Tokens> out;
  for (const auto& conv : conversations) {
    if (include_persona) {
      for (const auto& p : conv.persona) out.push_back(tokenize(p));
    }
    for (const auto& t : conv.turns) out.push_back(tokenize(t));
  }
  return out;
}

Vocab::Vocab() {
  for (const char* t : kReservedTokens) push(t);
}

void Vocab::push(const std::string& token) {
  token_to_id_.emplace(token, id_to_token_.size());
  id_to_token_.push_back(token);
}

Vocab Vocab::build(const std::vector<Tokens>& sequences, std::size_t min_count) {
  std::map<std::string, std::size_t> counts;
  for (const auto& seq : sequences)
    for (const auto& t : seq) ++counts[t];
  std::vector<std::pair<std::string, std::size_t>> ranked;
  for (auto& [t, c] : counts) {
    if (c >= min_count && !std::count(std::begin(kReservedTokens), std::end(kReservedTokens), t)) {
      ranked.emplace_back(t, c);
    }
  }
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const auto& a, const auto& b) { return a.second > b.second; });
  Vocab v;
  for (const auto& [t, _] : ranked) v.push(t);
  return v;
}

Vocab Vocab::from_tokens(const std::vector<std::string>& tokens) {
  if (tokens.size() < kReserved ||
      !std::equal(std::begin(kReservedTokens), std::end(kReservedTokens), tokens.begin())) {
    throw ParseError("vocabulary must start with the reserved tokens <pad> <bos> <eos> <unk>");
  }
  Vocab v;
  for (std::size_t i = kReserved; i < tokens.size(); ++i) {
    if (v.contains(tokens[i])) throw ParseError("duplicate vocabulary token: " + tokens[i]);
    v.push(tokens[i]);
  }
  return v;
}

std::size_t Vocab::id(const std::string& token) const {
  auto it = token_to_id_.find(token);
  return it == token_to_id_.end() ? kUnk : it->second;
}

const std::string& Vocab::token(std::size_t id) const {
  if (id >= id_to_token_.size()) {
    throw ContractError("token id " + std::to_string(id) + " outside vocabulary of size " +
                        std::to_string(id_to_token_.size()));
  }
  return id_to_token_[id];
}

Ids Vocab::encode(const Tokens& tokens) const {
  Ids out;
  out.reserve(tokens.size());
  for (const auto& t : tokens) out.push_back(id(t));
  return out;
}

Tokens Vocab::decode(const Ids& ids) const {
  Tokens out;
  out.reserve(ids.size());
  for (auto i : ids) out.push_back(token(i));
  return out;
}

void Vocab::save(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw ParseError("cannot write vocabulary " + path.string());
  for (const auto& t : id_to_token_) out << t << '\n';
}

Vocab Vocab::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open vocabulary " + path.string());
  std::vector<std::string> tokens;
  std::string line;
  while (std::getline(in, line)) tokens.push_back(line);
  return from_tokens(tokens);
}

}  // namespace dmkcm::corpus
