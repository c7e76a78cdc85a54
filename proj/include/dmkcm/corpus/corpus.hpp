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
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace dmkcm::corpus {

/// Raised on malformed input files; the message carries the line number.
class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

using Tokens = std::vector<std::string>;
using Ids = std::vector<std::size_t>;

/// Lowercases ASCII, splits on whitespace and makes every ASCII punctuation
/// character a standalone token.
Tokens tokenize(std::string_view text);

/// True for tokens containing at least one letter or digit (or non-ASCII byte).
bool is_word(std::string_view token);

/// One training/chat sample: the turns before the user utterance, the user
/// utterance and the gold response.
struct DialogueUnit {
  std::string conversation_id;
  std::size_t turn_index = 0;  // 1-based position among this conversation's units
  std::vector<std::string> context_turns;
  std::string user_utterance;
  std::string gold_response;
};

struct LoadOptions {
  std::size_t window = 3;
  /// Prepend a conversation's "persona" sentences as leading context turns.
  bool include_persona = false;
};

struct Conversation {
  std::string id;
  std::vector<std::string> persona;
  std::vector<std::string> turns;
};

/// Reads `{"id": str, "turns": [str, ...]}` lines, optional "persona".
std::vector<Conversation> read_conversations(const std::filesystem::path& path);

/// Units for every responder turn (turns 2, 4, ...).
std::vector<DialogueUnit> make_units(const Conversation& conversation, const LoadOptions& options);

std::vector<DialogueUnit> load_dialogues(const std::filesystem::path& path,
                                         const LoadOptions& options = {});

class Vocab {
 public:
  static constexpr std::size_t kPad = 0;
  static constexpr std::size_t kBos = 1;
  static constexpr std::size_t kEos = 2;
  static constexpr std::size_t kUnk = 3;
  static constexpr std::size_t kReserved = 4;

  Vocab();

  /// Tokens seen at least min_count times, ordered by descending count then
  /// lexicographically, after the four reserved entries.
  static Vocab build(const std::vector<Tokens>& sequences, std::size_t min_count = 2);
  static Vocab from_tokens(const std::vector<std::string>& tokens);

  std::size_t size() const { return id_to_token_.size(); }
  std::size_t id(const std::string& token) const;
  bool contains(const std::string& token) const { return token_to_id_.count(token) > 0; }
  const std::string& token(std::size_t id) const;
  const std::vector<std::string>& tokens() const { return id_to_token_; }

  Ids encode(const Tokens& tokens) const;
  Tokens decode(const Ids& ids) const;

  void save(const std::filesystem::path& path) const;
  static Vocab load(const std::filesystem::path& path);

  bool operator==(const Vocab& other) const { return id_to_token_ == other.id_to_token_; }

 private:
  void push(const std::string& token);

  std::unordered_map<std::string, std::size_t> token_to_id_;
  std::vector<std::string> id_to_token_;
};

/// Tokenized turns (and persona sentences when requested), each counted once.
std::vector<Tokens> conversation_token_sequences(const std::vector<Conversation>& conversations,
                                                 bool include_persona = false);

}  // namespace dmkcm::corpus
