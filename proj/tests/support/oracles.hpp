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

// Independent reference implementations used by the unit and acceptance
// tests. None of them call into the code they check beyond reading inputs.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <set>
#include <string>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "dmkcm/ckg/ckg.hpp"
#include "dmkcm/corpus/corpus.hpp"
#include "dmkcm/corpus/stopwords.hpp"
#include "dmkcm/numerics/parameters.hpp"
#include "dmkcm/pipeline/model.hpp"
#include "dmkcm/vkb/vkb.hpp"

namespace dmkcm::testing {

std::filesystem::path source_dir();
std::filesystem::path fixture_dir();
/// Fresh empty directory under the system temp dir.
std::filesystem::path scratch_dir(const std::string& name);
/// Writes text to dir/name and returns the path.
std::filesystem::path write_file(const std::filesystem::path& dir, const std::string& name,
                                 const std::string& text);

// ---------------------------------------------------------------------------
// Finite differences

struct GradCheckResult {
  double max_relative_error = 0;
  std::string worst;  // parameter with the largest error
  std::size_t checked = 0;
};

/// Compares backward() against central differences for every element of
/// the named parameters. The error of one parameter is
/// |g_analytic - g_numeric| / max(|g_analytic| + |g_numeric|, 1e-6) taken
/// over the whole tensor (L2 norms).
GradCheckResult grad_check(ParameterSet& params, const std::vector<std::string>& names,
                           const std::function<Tensor()>& loss, double eps = 1e-4);

// ---------------------------------------------------------------------------
// Retrieval

struct OracleDoc {
  std::string title;
  std::vector<std::string> body;
};

std::vector<OracleDoc> oracle_docs(const std::vector<vkb::StoryRecord>& stories);

/// Okapi BM25 over every document by direct counting.
double oracle_bm25(const std::vector<OracleDoc>& docs, std::size_t doc,
                   const std::vector<std::string>& query, double k1 = 1.2, double b = 0.75);

/// Links A -> B when a non-stopword title word of B appears in A's body.
std::vector<std::set<std::size_t>> oracle_links(const std::vector<OracleDoc>& docs,
                                                const corpus::StopwordSet& stopwords);

struct OracleCandidate {
  std::size_t doc;
  double score;
};

/// Scores all documents, keeps matching ones by (score desc, id asc), cuts
/// to cap, then appends link neighbours of each kept document in rank order
/// at half the parent score while room remains.
std::vector<OracleCandidate> oracle_retrieve(const std::vector<OracleDoc>& docs,
                                             const corpus::StopwordSet& stopwords,
                                             const corpus::Tokens& query, std::size_t cap);

/// Random titled stories over a small shared word pool (so that terms
/// repeat across documents and titles link often).
std::vector<vkb::StoryRecord> random_stories(Rng& rng, std::size_t n_docs);
/// A random query mixing pool words, stopwords and punctuation.
corpus::Tokens random_query(Rng& rng, std::size_t length);
/// A random subset of the word pool.
std::unordered_set<std::string> random_word_set(Rng& rng, std::size_t size);

/// Exhaustive filter: count occurrences, order by (score desc, rank asc,
/// id asc), keep top_t.
std::vector<std::pair<std::size_t, std::size_t>> oracle_filter(
    const std::vector<OracleDoc>& docs, const std::vector<OracleCandidate>& candidates,
    const std::unordered_set<std::string>& words, std::size_t top_t);

// ---------------------------------------------------------------------------
// Commonsense expansion

struct OracleTriple {
  int priority;  // 0 = X, 1 = C, 2 = K_V
  std::string head, relation, tail;
  double weight;
};

/// Plain TSV read of head, relation, tail[, weight] rows; concepts are lowercased with
/// internal spaces joined by '_'. No deduplication.
std::vector<ckg::Triple> read_raw_triples(const std::filesystem::path& path);

/// Enumerates every (source head, edge) pair from the raw triple list and
/// applies the selection rules one by one.
std::vector<OracleTriple> oracle_expand(const std::vector<ckg::Triple>& raw_triples,
                                        const corpus::Tokens& post, const corpus::Tokens& context,
                                        const corpus::Tokens& first_hop,
                                        const corpus::Vocab& vocab,
                                        const corpus::StopwordSet& stopwords, std::size_t top_n,
                                        std::size_t cap);

// ---------------------------------------------------------------------------
// History memory schedule (Algorithm 1 written out as a state machine)

class Algorithm1Machine {
 public:
  explicit Algorithm1Machine(std::size_t window) : window_(window) {}

  /// The turns readable while turn i runs its selector.
  std::vector<std::size_t> readable_for(std::size_t i) const;
  /// Turn i: extract (if i > 1), select, then add H_V^i.
  void run_turn(std::size_t i);

 private:
  std::size_t window_;
  std::vector<std::size_t> memory_;
};

// ---------------------------------------------------------------------------
// JSON schema subset: type, required, properties, items, enum, minimum,
// maximum, minItems, maxItems and local $ref.

std::vector<std::string> validate_schema(const nlohmann::json& instance,
                                         const nlohmann::json& schema);
nlohmann::json load_trace_schema();

// ---------------------------------------------------------------------------
// Fixtures

struct FixtureStores {
  std::shared_ptr<const pipeline::KnowledgeStores> stores;
  std::vector<corpus::Conversation> conversations;
  std::vector<corpus::DialogueUnit> units;
  corpus::Vocab vocab;
};

/// The data/fixture corpus with a min_count 1 vocabulary.
const FixtureStores& fixture();

/// Uniform(-scale, scale) values from a seeded generator.
inline Tensor random_tensor(Rng& rng, Shape shape, double scale = 1.0, bool requires_grad = false) {
  std::vector<Scalar> v(shape_numel(shape));
  for (auto& x : v) x = static_cast<Scalar>(rng.uniform(-scale, scale));
  return Tensor::from(std::move(shape), std::move(v), requires_grad);
}

/// Deliberately tiny model used by gradient checks and fast pipeline tests.
neural::ModelConfig tiny_config();

}  // namespace dmkcm::testing
