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

#include <cstdint>
#include <filesystem>
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "dmkcm/corpus/corpus.hpp"
#include "dmkcm/corpus/stopwords.hpp"

// Virtual knowledge base over a titled story corpus: titles are entities,
// bodies are facts, and "a body mentions another title" links emulate
// relations between entities.
namespace dmkcm::vkb {

using DocId = std::uint32_t;

class IngestError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct StoryDoc {
  DocId doc_id = 0;
  std::string title;
  std::vector<std::string> sentences;
  corpus::Tokens body_tokens;
};

struct Posting {
  DocId doc_id;
  std::uint32_t tf;
  bool operator==(const Posting&) const = default;
};

struct Bm25Params {
  double k1 = 1.2;
  double b = 0.75;
};

struct Candidate {
  DocId doc_id;
  double score;
};

struct FilteredDoc {
  DocId doc_id;
  std::size_t filtering_score;
  std::size_t retrieval_rank;  // position in the candidate list
  double retrieval_score;
};

enum class FilterMode { kOccurrences, kDistinctTypes };

struct StoryRecord {
  std::string title;
  std::vector<std::string> sentences;
};

/// Reads `{"title": str, "sentences": [str, ...]}` lines.
std::vector<StoryRecord> read_stories(const std::filesystem::path& path);

/// Title normalization used for uniqueness: lowercase and trimmed.
std::string normalize_title(const std::string& title);

class VkbIndex {
 public:
  static VkbIndex build(const std::vector<StoryRecord>& stories,
                        const corpus::StopwordSet& stopwords = {});
  static VkbIndex build_from_file(const std::filesystem::path& stories_path,
                                  const corpus::StopwordSet& stopwords = {});

  std::size_t size() const { return docs_.size(); }
  const StoryDoc& doc(DocId id) const;
  const std::vector<StoryDoc>& docs() const { return docs_; }
  /// Postings sorted by doc id; empty for unseen tokens.
  const std::vector<Posting>& postings(const std::string& token) const;
  std::size_t document_frequency(const std::string& token) const { return postings(token).size(); }
  double average_length() const { return avg_length_; }
  const std::set<DocId>& links(DocId id) const;
  const corpus::StopwordSet& stopwords() const { return stopwords_; }

  /// BM25 over body tokens, then title-link neighbours of each ranked
  /// candidate appended at half the parent's score while under the cap.
  std::vector<Candidate> retrieve_candidates(const corpus::Tokens& query, std::size_t cap = 10,
                                             Bm25Params params = {}) const;

  /// BM25 score of one document for the unique content terms of query.
  double bm25(DocId id, const std::vector<std::string>& terms, Bm25Params params = {}) const;
  /// Unique non-stopword terms of query, in first-occurrence order.
  std::vector<std::string> query_terms(const corpus::Tokens& query) const;

  void save(const std::filesystem::path& path) const;
  static VkbIndex load(const std::filesystem::path& path);

  bool operator==(const VkbIndex& other) const;

 private:
  void index_documents();

  std::vector<StoryDoc> docs_;
  std::map<std::string, std::vector<Posting>> inverted_;
  std::vector<std::set<DocId>> links_;
  double avg_length_ = 0;
  corpus::StopwordSet stopwords_;
};

/// Counts body positions (or distinct body types) found in expanded_words
/// and keeps the best T, ties broken by retrieval rank then doc id.
std::vector<FilteredDoc> filter_candidates(const VkbIndex& index,
                                           const std::vector<Candidate>& candidates,
                                           const std::unordered_set<std::string>& expanded_words,
                                           std::size_t top_t = 5,
                                           FilterMode mode = FilterMode::kOccurrences);

std::size_t filtering_score(const StoryDoc& doc, const std::unordered_set<std::string>& words,
                            FilterMode mode);

/// Query echo, retrieved candidates and the filtered first hop.
struct CandidateSet {
  corpus::Tokens query;
  std::vector<Candidate> candidates;
  std::vector<FilteredDoc> first_hop;
};

}  // namespace dmkcm::vkb
