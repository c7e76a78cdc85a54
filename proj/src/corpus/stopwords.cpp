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

#include "dmkcm/corpus/stopwords.hpp"

#include <fstream>

#include "dmkcm/corpus/corpus.hpp"

namespace dmkcm::corpus {

namespace {

// clang-format off
const char* const kDefaultStopwords[] = {
  "a", "about", "above", "after", "again", "against", "all", "am", "an", "and",
  "any", "are", "as", "at", "be", "because", "been", "before", "being", "below",
  "between", "both", "but", "by", "can", "could", "did", "do", "does", "doing",
  "down", "during", "each", "few", "for", "from", "further", "had", "has", "have",
  "having", "he", "her", "here", "hers", "herself", "him", "himself", "his", "how",
  "i", "if", "in", "into", "is", "it", "its", "itself", "just", "me",
  "more", "most", "my", "myself", "no", "nor", "not", "now", "of", "off",
  "on", "once", "only", "or", "other", "ought", "our", "ours", "ourselves", "out",
  "over", "own", "s", "same", "she", "should", "so", "some", "such", "t",
  "than", "that", "the", "their", "theirs", "them", "themselves", "then", "there", "these",
  "they", "this", "those", "through", "to", "too", "under", "until", "up", "very",
  "was", "we", "were", "what", "when", "where", "which", "while", "who", "whom",
  "why", "will", "with", "would", "you", "your", "yours", "yourself", "yourselves", "m",
  "re", "ve", "ll", "d", "don", "yes", "oh", "well", "also", "really",
};
// clang-format on

}  // namespace

StopwordSet::StopwordSet() {
  for (const char* w : kDefaultStopwords) words_.insert(w);
}

StopwordSet StopwordSet::load(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ParseError("cannot open stopword file " + path.string());
  std::set<std::string> words;
  std::string line;
  while (std::getline(in, line)) {
    if (auto hash = line.find('#'); hash != std::string::npos) line.resize(hash);
    for (auto& t : tokenize(line)) words.insert(t);
  }
  return StopwordSet(words);
}

bool StopwordSet::contains(std::string_view token) const {
  return !is_word(token) || words_.find(token) != words_.end();
}

std::vector<std::string> StopwordSet::content(const std::vector<std::string>& tokens) const {
  std::vector<std::string> out;
  for (const auto& t : tokens) {
    if (!contains(t)) out.push_back(t);
  }
  return out;
}

}  // namespace dmkcm::corpus
