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
#include <map>
#include <set>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

#include "dmkcm/corpus/corpus.hpp"
#include "dmkcm/corpus/stopwords.hpp"

// Commonsense concept graph: head --relation--> tail edges loaded from TSV.
namespace dmkcm::ckg {

class GraphParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Triple {
  std::string head;
  std::string relation;
  std::string tail;
  double weight = 1.0;
  bool operator==(const Triple&) const = default;
};

struct Edge {
  std::string relation;
  std::string neighbor;
  double weight = 1.0;
  bool operator==(const Edge&) const = default;
};

/// Lowercase, trim, and join internal whitespace with '_'.
std::string normalize_concept(const std::string& text);

class ConceptGraph {
 public:
  static ConceptGraph from_triples(const std::vector<Triple>& triples);

  /// Adjacency ordered by descending weight, then relation, then neighbour.
  const std::vector<Edge>& neighbors(const std::string& concept_name) const;
  bool has_node(const std::string& concept_name) const { return adjacency_.count(concept_name) > 0; }
  const std::vector<std::string>& relations() const { return relations_; }
  /// Index of a relation label in relations(); throws for unknown labels.
  std::size_t relation_id(const std::string& relation) const;
  const std::set<std::string>& concepts() const { return concepts_; }
  std::size_t edge_count() const { return edge_count_; }
  const std::map<std::string, std::vector<Edge>>& adjacency() const { return adjacency_; }

  /// Normalized TSV: head, relation, tail, weight.
  void save_tsv(const std::filesystem::path& path) const;

 private:
  std::map<std::string, std::vector<Edge>> adjacency_;
  std::vector<std::string> relations_;
  std::set<std::string> concepts_;
  std::size_t edge_count_ = 0;
};

/// Parses `head<TAB>relation<TAB>tail[<TAB>weight]` rows; duplicates of an
/// (h, r, t) key collapse to the first occurrence.
ConceptGraph load_graph(const std::filesystem::path& path);

/// Non-stopword input tokens plus every one-hop neighbour of each of them.
std::unordered_set<std::string> expand_related_words(const ConceptGraph& graph,
                                                     const corpus::Tokens& tokens,
                                                     const corpus::StopwordSet& stopwords = {});

enum class Source { kPost = 0, kContext = 1, kFirstHop = 2 };
const char* source_name(Source s);

struct ExpansionSources {
  corpus::Tokens post;       // user utterance X
  corpus::Tokens context;    // context C
  corpus::Tokens first_hop;  // filtered document bodies K_V
};

struct ExpansionOptions {
  std::size_t top_n = 100;
  std::size_t cap = 64;
};

/// Triples selected for one turn, with vocabulary-aligned index lists.
struct TripleBatch {
  std::vector<Triple> triples;
  std::vector<std::size_t> head_ids;      // vocab ids (UNK allowed)
  std::vector<std::size_t> relation_ids;  // ConceptGraph::relation_id
  std::vector<std::size_t> tail_ids;      // vocab ids, never reserved
  std::vector<Source> sources;
  std::size_t dropped_multiword = 0;

  std::size_t size() const { return triples.size(); }
  bool empty() const { return triples.empty(); }
};

/// Expands every non-stopword source token that has a graph node, keeps at
/// most top_n neighbours per head and only single-token in-vocabulary tails,
/// ranks by (source priority X > C > K_V, weight, lexicographic) and
/// truncates to cap.
TripleBatch expand_triples(const ConceptGraph& graph, const ExpansionSources& sources,
                           const corpus::Vocab& vocab, const ExpansionOptions& options = {},
                           const corpus::StopwordSet& stopwords = {});

}  // namespace dmkcm::ckg
