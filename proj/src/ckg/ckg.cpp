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

#include "dmkcm/ckg/ckg.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <tuple>

#include "dmkcm/numerics/tensor.hpp"

namespace dmkcm::ckg {

namespace {

const std::vector<Edge> kNoEdges;

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    auto tab = line.find('\t', start);
    out.push_back(line.substr(start, tab - start));
    if (tab == std::string::npos) break;
    start = tab + 1;
  }
  return out;
}

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \r\n");
  if (first == std::string::npos) return {};
  return s.substr(first, s.find_last_not_of(" \r\n") - first + 1);
}

}  // namespace

std::string normalize_concept(const std::string& text) {
  std::string out;
  bool pending_space = false;
  for (char ch : text) {
    if (ch == ' ' || ch == '\t' || ch == '\r' || ch == '\n' || ch == '_') {
      pending_space = !out.empty();
      continue;
    }
    if (pending_space) out += '_';
    pending_space = false;
    out += (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
  }
  return out;
}

const char* source_name(Source s) {
  switch (s) {
    case Source::kPost: return "X";
    case Source::kContext: return "C";
    case Source::kFirstHop: return "K_V";
  }
  return "?";
}

ConceptGraph ConceptGraph::from_triples(const std::vector<Triple>& triples) {
  ConceptGraph g;
  std::set<std::tuple<std::string, std::string, std::string>> seen;
  std::set<std::string> relations;
  for (const auto& t : triples) {
    if (!seen.emplace(t.head, t.relation, t.tail).second) continue;
    g.adjacency_[t.head].push_back({t.relation, t.tail, t.weight});
    relations.insert(t.relation);
    g.concepts_.insert(t.head);
    g.concepts_.insert(t.tail);
    ++g.edge_count_;
  }
  for (auto& [_, edges] : g.adjacency_) {
    std::sort(edges.begin(), edges.end(), [](const Edge& a, const Edge& b) {
      if (a.weight != b.weight) return a.weight > b.weight;
      return std::tie(a.relation, a.neighbor) < std::tie(b.relation, b.neighbor);
    });
  }
  g.relations_.assign(relations.begin(), relations.end());
  return g;
}

const std::vector<Edge>& ConceptGraph::neighbors(const std::string& concept_name) const {
  auto it = adjacency_.find(concept_name);
  return it == adjacency_.end() ? kNoEdges : it->second;
}

std::size_t ConceptGraph::relation_id(const std::string& relation) const {
  auto it = std::lower_bound(relations_.begin(), relations_.end(), relation);
  if (it == relations_.end() || *it != relation) {
    throw ContractError("unknown relation label: " + relation);
  }
  return static_cast<std::size_t>(it - relations_.begin());
}

void ConceptGraph::save_tsv(const std::filesystem::path& path) const {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw GraphParseError("cannot write " + path.string());
  out.precision(17);
  for (const auto& [head, edges] : adjacency_) {
    for (const auto& e : edges) out << head << '\t' << e.relation << '\t' << e.neighbor << '\t' << e.weight << '\n';
  }
}

ConceptGraph load_graph(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw GraphParseError("cannot open triples file " + path.string());
  std::vector<Triple> triples;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (trim(line).empty()) continue;
    const auto where = path.string() + ": row " + std::to_string(row);
    auto fields = split_tabs(line);
    if (fields.size() != 3 && fields.size() != 4) {
      throw GraphParseError(where + ": expected 3 or 4 tab-separated fields, got " +
                            std::to_string(fields.size()));
    }
    Triple t;
    t.head = normalize_concept(fields[0]);
    t.relation = trim(fields[1]);
    t.tail = normalize_concept(fields[2]);
    if (t.head.empty() || t.relation.empty() || t.tail.empty()) {
      throw GraphParseError(where + ": empty head, relation or tail");
    }
    if (fields.size() == 4) {
      const auto w = trim(fields[3]);
      double v = 0;
      auto [ptr, ec] = std::from_chars(w.data(), w.data() + w.size(), v);
      if (ec != std::errc() || ptr != w.data() + w.size() || !std::isfinite(v)) {
        throw GraphParseError(where + ": invalid weight '" + w + "'");
      }
      t.weight = v;
    }
    triples.push_back(std::move(t));
  }
  return ConceptGraph::from_triples(triples);
}

std::unordered_set<std::string> expand_related_words(const ConceptGraph& graph,
                                                     const corpus::Tokens& tokens,
                                                     const corpus::StopwordSet& stopwords) {
  std::unordered_set<std::string> out;
  for (const auto& t : tokens) {
    if (stopwords.contains(t)) continue;
    out.insert(t);
    for (const auto& e : graph.neighbors(t)) out.insert(e.neighbor);
  }
  return out;
}

TripleBatch expand_triples(const ConceptGraph& graph, const ExpansionSources& sources,
                           const corpus::Vocab& vocab, const ExpansionOptions& options,
                           const corpus::StopwordSet& stopwords) {
  std::map<std::string, Source> heads;
  auto collect = [&](const corpus::Tokens& tokens, Source s) {
    for (const auto& t : tokens) {
      if (stopwords.contains(t) || !graph.has_node(t)) continue;
      heads.emplace(t, s);  // earlier (higher-priority) source wins
    }
  };
  collect(sources.post, Source::kPost);
  collect(sources.context, Source::kContext);
  collect(sources.first_hop, Source::kFirstHop);

  struct Ranked {
    Source source;
    Triple triple;
    std::size_t tail_id;
  };
  std::vector<Ranked> pool;
  TripleBatch batch;
  for (const auto& [head, source] : heads) {
    const auto& edges = graph.neighbors(head);
    const std::size_t take = std::min(options.top_n, edges.size());
    for (std::size_t i = 0; i < take; ++i) {
      const auto& e = edges[i];
      if (e.neighbor.find('_') != std::string::npos) {
        ++batch.dropped_multiword;
        continue;
      }
      const auto tail_id = vocab.id(e.neighbor);
      if (tail_id < corpus::Vocab::kReserved) continue;
      pool.push_back({source, {head, e.relation, e.neighbor, e.weight}, tail_id});
    }
  }
  std::sort(pool.begin(), pool.end(), [](const Ranked& a, const Ranked& b) {
    if (a.source != b.source) return a.source < b.source;
    if (a.triple.weight != b.triple.weight) return a.triple.weight > b.triple.weight;
    return std::tie(a.triple.head, a.triple.relation, a.triple.tail) <
           std::tie(b.triple.head, b.triple.relation, b.triple.tail);
  });
  if (pool.size() > options.cap) pool.resize(options.cap);
  for (auto& r : pool) {
    batch.head_ids.push_back(vocab.id(r.triple.head));
    batch.relation_ids.push_back(graph.relation_id(r.triple.relation));
    batch.tail_ids.push_back(r.tail_id);
    batch.sources.push_back(r.source);
    batch.triples.push_back(std::move(r.triple));
  }
  return batch;
}

}  // namespace dmkcm::ckg
