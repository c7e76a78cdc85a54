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

#include "dmkcm/vkb/vkb.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iterator>
#include <unordered_map>

#include <json.hpp>

#include "dmkcm/io/binary.hpp"
#include "dmkcm/numerics/tensor.hpp"

namespace dmkcm::vkb {

namespace {

constexpr char kMagic[4] = {'D', 'V', 'K', 'B'};
constexpr std::uint32_t kVersion = 1;

const std::vector<Posting> kNoPostings;

std::string join_sentences(const std::vector<std::string>& sentences) {
  std::string out;
  for (const auto& s : sentences) {
    if (!out.empty()) out += ' ';
    out += s;
  }
  return out;
}

}  // namespace

std::string normalize_title(const std::string& title) {
  std::string out;
  for (char ch : title) {
    out += (ch >= 'A' && ch <= 'Z') ? static_cast<char>(ch - 'A' + 'a') : ch;
  }
  const auto first = out.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return {};
  const auto last = out.find_last_not_of(" \t\r\n");
  return out.substr(first, last - first + 1);
}

std::vector<StoryRecord> read_stories(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestError("cannot open stories file " + path.string());
  std::vector<StoryRecord> out;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r\n") == std::string::npos) continue;
    const auto where = path.string() + ":" + std::to_string(line_no);
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw IngestError(where + ": invalid JSON: " + e.what());
    }
    if (!j.is_object() || !j.contains("title") || !j["title"].is_string() ||
        !j.contains("sentences") || !j["sentences"].is_array()) {
      throw IngestError(where + ": expected {\"title\": str, \"sentences\": [str, ...]}");
    }
    StoryRecord rec;
    rec.title = j["title"].get<std::string>();
    for (const auto& s : j["sentences"]) {
      if (!s.is_string()) throw IngestError(where + ": sentences must be strings");
      rec.sentences.push_back(s.get<std::string>());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

VkbIndex VkbIndex::build(const std::vector<StoryRecord>& stories,
                         const corpus::StopwordSet& stopwords) {
  if (stories.empty()) throw IngestError("story corpus is empty");
  VkbIndex index;
  index.stopwords_ = stopwords;
  std::unordered_map<std::string, std::size_t> seen;
  for (const auto& rec : stories) {
    const auto norm = normalize_title(rec.title);
    if (norm.empty()) throw IngestError("story with empty title");
    if (auto it = seen.find(norm); it != seen.end()) {
      throw IngestError("duplicate title after normalization: \"" +
                        index.docs_[it->second].title + "\" (doc " + std::to_string(it->second) +
                        ") and \"" + rec.title + "\" (doc " + std::to_string(index.docs_.size()) +
                        ")");
    }
    StoryDoc doc;
    doc.doc_id = static_cast<DocId>(index.docs_.size());
    doc.title = rec.title;
    doc.sentences = rec.sentences;
    doc.body_tokens = corpus::tokenize(join_sentences(rec.sentences));
    if (doc.body_tokens.empty()) throw IngestError("story \"" + rec.title + "\" has an empty body");
    seen.emplace(norm, index.docs_.size());
    index.docs_.push_back(std::move(doc));
  }
  index.index_documents();

  // Link A -> B when a content word of B's title occurs in A's body.
  index.links_.assign(index.docs_.size(), {});
  std::map<std::string, std::vector<DocId>> title_word_owners;
  for (const auto& doc : index.docs_) {
    auto words = stopwords.content(corpus::tokenize(doc.title));
    std::sort(words.begin(), words.end());
    words.erase(std::unique(words.begin(), words.end()), words.end());
    for (const auto& w : words) title_word_owners[w].push_back(doc.doc_id);
  }
  for (const auto& [word, owners] : title_word_owners) {
    for (const auto& p : index.postings(word)) {
      for (DocId target : owners) {
        if (target != p.doc_id) index.links_[p.doc_id].insert(target);
      }
    }
  }
  return index;
}

VkbIndex VkbIndex::build_from_file(const std::filesystem::path& stories_path,
                                   const corpus::StopwordSet& stopwords) {
  return build(read_stories(stories_path), stopwords);
}

void VkbIndex::index_documents() {
  inverted_.clear();
  double total = 0;
  for (const auto& doc : docs_) {
    std::map<std::string, std::uint32_t> tf;
    for (const auto& t : doc.body_tokens) ++tf[t];
    for (const auto& [t, n] : tf) inverted_[t].push_back({doc.doc_id, n});
    total += static_cast<double>(doc.body_tokens.size());
  }
  avg_length_ = docs_.empty() ? 0.0 : total / static_cast<double>(docs_.size());
}

const StoryDoc& VkbIndex::doc(DocId id) const {
  if (id >= docs_.size()) throw ContractError("doc id " + std::to_string(id) + " out of range");
  return docs_[id];
}

const std::vector<Posting>& VkbIndex::postings(const std::string& token) const {
  auto it = inverted_.find(token);
  return it == inverted_.end() ? kNoPostings : it->second;
}

const std::set<DocId>& VkbIndex::links(DocId id) const {
  if (id >= links_.size()) throw ContractError("doc id " + std::to_string(id) + " out of range");
  return links_[id];
}

std::vector<std::string> VkbIndex::query_terms(const corpus::Tokens& query) const {
  std::vector<std::string> terms;
  for (const auto& t : stopwords_.content(query)) {
    if (std::find(terms.begin(), terms.end(), t) == terms.end()) terms.push_back(t);
  }
  return terms;
}

double VkbIndex::bm25(DocId id, const std::vector<std::string>& terms, Bm25Params params) const {
  const auto& d = doc(id);
  const double n_docs = static_cast<double>(docs_.size());
  const double dl = static_cast<double>(d.body_tokens.size());
  double score = 0;
  for (const auto& term : terms) {
    const auto& plist = postings(term);
    auto it = std::lower_bound(plist.begin(), plist.end(), id,
                               [](const Posting& p, DocId v) { return p.doc_id < v; });
    if (it == plist.end() || it->doc_id != id) continue;
    const double df = static_cast<double>(plist.size());
    const double idf = std::log((n_docs - df + 0.5) / (df + 0.5) + 1.0);
    const double tf = it->tf;
    score += idf * tf * (params.k1 + 1.0) /
             (tf + params.k1 * (1.0 - params.b + params.b * dl / avg_length_));
  }
  return score;
}

std::vector<Candidate> VkbIndex::retrieve_candidates(const corpus::Tokens& query, std::size_t cap,
                                                     Bm25Params params) const {
  const auto terms = query_terms(query);
  std::vector<Candidate> ranked;
  if (terms.empty() || cap == 0) return ranked;
  std::set<DocId> matching;
  for (const auto& term : terms)
    for (const auto& p : postings(term)) matching.insert(p.doc_id);
  for (DocId id : matching) ranked.push_back({id, bm25(id, terms, params)});
  std::stable_sort(ranked.begin(), ranked.end(),
                   [](const Candidate& a, const Candidate& b) { return a.score > b.score; });
  if (ranked.size() > cap) ranked.resize(cap);

  std::set<DocId> present;
  for (const auto& c : ranked) present.insert(c.doc_id);
  const std::size_t parents = ranked.size();
  for (std::size_t i = 0; i < parents && ranked.size() < cap; ++i) {
    const auto parent = ranked[i];
    for (DocId neighbour : links_[parent.doc_id]) {
      if (ranked.size() >= cap) break;
      if (present.insert(neighbour).second) ranked.push_back({neighbour, parent.score * 0.5});
    }
  }
  return ranked;
}

std::size_t filtering_score(const StoryDoc& doc, const std::unordered_set<std::string>& words,
                            FilterMode mode) {
  if (mode == FilterMode::kOccurrences) {
    return static_cast<std::size_t>(std::count_if(doc.body_tokens.begin(), doc.body_tokens.end(),
                                                  [&](const auto& t) { return words.count(t) > 0; }));
  }
  std::set<std::string> types;
  for (const auto& t : doc.body_tokens) {
    if (words.count(t)) types.insert(t);
  }
  return types.size();
}

std::vector<FilteredDoc> filter_candidates(const VkbIndex& index,
                                           const std::vector<Candidate>& candidates,
                                           const std::unordered_set<std::string>& expanded_words,
                                           std::size_t top_t, FilterMode mode) {
  std::vector<FilteredDoc> scored;
  scored.reserve(candidates.size());
  for (std::size_t rank = 0; rank < candidates.size(); ++rank) {
    const auto& c = candidates[rank];
    scored.push_back({c.doc_id, filtering_score(index.doc(c.doc_id), expanded_words, mode), rank,
                      c.score});
  }
  std::sort(scored.begin(), scored.end(), [](const FilteredDoc& a, const FilteredDoc& b) {
    if (a.filtering_score != b.filtering_score) return a.filtering_score > b.filtering_score;
    if (a.retrieval_rank != b.retrieval_rank) return a.retrieval_rank < b.retrieval_rank;
    return a.doc_id < b.doc_id;
  });
  if (scored.size() > top_t) scored.resize(top_t);
  return scored;
}

void VkbIndex::save(const std::filesystem::path& path) const {
  io::BinaryWriter w;
  w.raw(kMagic, 4);
  w.u32(kVersion);
  w.u32(static_cast<std::uint32_t>(docs_.size()));
  for (const auto& d : docs_) {
    w.str(d.title);
    w.u32(static_cast<std::uint32_t>(d.sentences.size()));
    for (const auto& s : d.sentences) w.str(s);
  }
  w.u32(static_cast<std::uint32_t>(stopwords_.words().size()));
  for (const auto& s : stopwords_.words()) w.str(s);
  w.u32(static_cast<std::uint32_t>(inverted_.size()));
  for (const auto& [term, plist] : inverted_) {
    w.str(term);
    w.u32(static_cast<std::uint32_t>(plist.size()));
    for (const auto& p : plist) {
      w.u32(p.doc_id);
      w.u32(p.tf);
    }
  }
  for (const auto& l : links_) {
    w.u32(static_cast<std::uint32_t>(l.size()));
    for (DocId id : l) w.u32(id);
  }
  w.write_file(path);
}

VkbIndex VkbIndex::load(const std::filesystem::path& path) {
  auto r = io::BinaryReader::from_file(path);
  if (r.raw(4) != std::string(kMagic, 4)) throw IngestError(path.string() + ": not a DVKB index");
  if (auto v = r.u32(); v != kVersion) {
    throw IngestError(path.string() + ": unsupported index version " + std::to_string(v));
  }
  VkbIndex index;
  const auto n_docs = r.u32();
  for (std::uint32_t i = 0; i < n_docs; ++i) {
    StoryDoc d;
    d.doc_id = i;
    d.title = r.str();
    const auto n_sent = r.u32();
    for (std::uint32_t s = 0; s < n_sent; ++s) d.sentences.push_back(r.str());
    d.body_tokens = corpus::tokenize(join_sentences(d.sentences));
    index.docs_.push_back(std::move(d));
  }
  std::set<std::string> stop;
  const auto n_stop = r.u32();
  for (std::uint32_t i = 0; i < n_stop; ++i) stop.insert(r.str());
  index.stopwords_ = corpus::StopwordSet(stop);
  const auto n_terms = r.u32();
  double total = 0;
  for (const auto& d : index.docs_) total += static_cast<double>(d.body_tokens.size());
  index.avg_length_ = n_docs ? total / n_docs : 0.0;
  for (std::uint32_t i = 0; i < n_terms; ++i) {
    auto term = r.str();
    auto& plist = index.inverted_[term];
    const auto n = r.u32();
    for (std::uint32_t k = 0; k < n; ++k) {
      const auto id = r.u32();
      const auto tf = r.u32();
      if (id >= n_docs) throw IngestError(path.string() + ": posting references unknown doc");
      plist.push_back({id, tf});
    }
  }
  index.links_.resize(n_docs);
  for (auto& l : index.links_) {
    const auto n = r.u32();
    for (std::uint32_t k = 0; k < n; ++k) l.insert(r.u32());
  }
  if (!r.done()) throw IngestError(path.string() + ": trailing bytes in index");
  return index;
}

bool VkbIndex::operator==(const VkbIndex& other) const {
  if (docs_.size() != other.docs_.size()) return false;
  for (std::size_t i = 0; i < docs_.size(); ++i) {
    if (docs_[i].title != other.docs_[i].title || docs_[i].sentences != other.docs_[i].sentences) {
      return false;
    }
  }
  return inverted_ == other.inverted_ && links_ == other.links_ &&
         stopwords_.words() == other.stopwords_.words();
}

}  // namespace dmkcm::vkb
