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

#include <filesystem>
#include <set>
#include <string>
#include <string_view>
#include <vector>

namespace dmkcm::corpus {

/// English stopword list used for title links, query terms and graph
/// lookups. Punctuation-only tokens are always treated as stopwords.
class StopwordSet {
 public:
  /// The built-in list.
  StopwordSet();
  explicit StopwordSet(const std::set<std::string>& words) : words_(words.begin(), words.end()) {}
  /// One word per line; '#' starts a comment.
  static StopwordSet load(const std::filesystem::path& path);

  bool contains(std::string_view token) const;
  /// Non-stopword word tokens in original order (duplicates kept).
  std::vector<std::string> content(const std::vector<std::string>& tokens) const;
  std::size_t size() const { return words_.size(); }
  const std::set<std::string, std::less<>>& words() const { return words_; }

 private:
  std::set<std::string, std::less<>> words_;
};

}  // namespace dmkcm::corpus
