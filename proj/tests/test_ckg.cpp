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

#include <doctest.h>

#include "dmkcm/ckg/ckg.hpp"
#include "dmkcm/numerics/parameters.hpp"
#include "support/oracles.hpp"

using namespace dmkcm;
using namespace dmkcm::ckg;
namespace t = dmkcm::testing;

namespace {

const char* kFiveRows =
    "diet\tRelatedTo\thealthy\t2.0\n"
    "diet\tRelatedTo\toverweight\n"
    "Diet\tRelatedTo\thealthy\t0.5\n"  // duplicate key after normalization
    "healthy\tAntonym\tsick\t1.5\n"
    "run\tUsedFor\tLose Weight\t1.0\n";

void expect_batch_matches(const TripleBatch& got, const std::vector<t::OracleTriple>& want,
                          const corpus::Vocab& vocab) {
  REQUIRE(got.size() == want.size());
  for (std::size_t i = 0; i < got.size(); ++i) {
    CHECK(got.triples[i].head == want[i].head);
    CHECK(got.triples[i].relation == want[i].relation);
    CHECK(got.triples[i].tail == want[i].tail);
    CHECK(static_cast<int>(got.sources[i]) == want[i].priority);
    CHECK(got.tail_ids[i] == vocab.id(want[i].tail));
  }
}

}  // namespace

TEST_SUITE("ckg") {

TEST_CASE("five-row file gives the hand-built adjacency") {
  auto dir = t::scratch_dir("ckg_five");
  auto g = load_graph(t::write_file(dir, "g.tsv", kFiveRows));
  std::map<std::string, std::vector<Edge>> want{
      {"diet", {{"RelatedTo", "healthy", 2.0}, {"RelatedTo", "overweight", 1.0}}},
      {"healthy", {{"Antonym", "sick", 1.5}}},
      {"run", {{"UsedFor", "lose_weight", 1.0}}},
  };
  CHECK(g.adjacency() == want);
  CHECK(g.edge_count() == 4);
  CHECK(g.relations() == std::vector<std::string>{"Antonym", "RelatedTo", "UsedFor"});
  CHECK(g.relation_id("UsedFor") == 2);
  CHECK_THROWS_AS(g.relation_id("IsA"), ContractError);
  CHECK(g.concepts().count("sick") == 1);
  CHECK_FALSE(g.has_node("sick"));  // edges are directed; tails without out-edges have no list
}

TEST_CASE("related word expansion") {
  auto dir = t::scratch_dir("ckg_expand_words");
  auto g = load_graph(t::write_file(dir, "g.tsv", kFiveRows));
  auto words = expand_related_words(g, {"diet"});
  CHECK(words == std::unordered_set<std::string>{"diet", "healthy", "overweight"});
  auto stop = expand_related_words(g, {"the", "diet", "?"});
  CHECK(stop == std::unordered_set<std::string>{"diet", "healthy", "overweight"});
}

TEST_CASE("malformed rows are rejected with the row number") {
  auto dir = t::scratch_dir("ckg_bad");
  try {
    load_graph(t::write_file(dir, "a.tsv", "a\tb\tc\nonly\ttwo\n"));
    FAIL("expected a parse error");
  } catch (const GraphParseError& e) {
    CHECK(std::string(e.what()).find("row 2") != std::string::npos);
  }
  CHECK_THROWS_AS(load_graph(t::write_file(dir, "b.tsv", "a\tb\tc\tx1\n")), GraphParseError);
  CHECK_THROWS_AS(load_graph(t::write_file(dir, "c.tsv", "a\t\tc\n")), GraphParseError);
  CHECK_THROWS_AS(load_graph(dir / "none.tsv"), GraphParseError);
  CHECK(normalize_concept("  Lose   Weight ") == "lose_weight");
}

TEST_CASE("three neighbours with cap 2 keep the two best") {
  auto g = ConceptGraph::from_triples({{"diet", "RelatedTo", "food", 1.0},
                                       {"diet", "RelatedTo", "healthy", 2.0},
                                       {"diet", "Causes", "hunger", 1.5}});
  auto vocab = corpus::Vocab::from_tokens({"<pad>", "<bos>", "<eos>", "<unk>", "diet", "food",
                                           "healthy", "hunger"});
  ExpansionSources src{{"diet"}, {}, {}};
  auto batch = expand_triples(g, src, vocab, {100, 2});
  auto want = t::oracle_expand({{"diet", "RelatedTo", "food", 1.0},
                                {"diet", "RelatedTo", "healthy", 2.0},
                                {"diet", "Causes", "hunger", 1.5}},
                               src.post, src.context, src.first_hop, vocab, {}, 100, 2);
  expect_batch_matches(batch, want, vocab);
  REQUIRE(batch.size() == 2);
  CHECK(batch.triples[0].tail == "healthy");
  CHECK(batch.triples[1].tail == "hunger");
  CHECK(batch.relation_ids[1] == g.relation_id("Causes"));
}

TEST_CASE("multi-word and out-of-vocabulary tails are dropped") {
  auto g = ConceptGraph::from_triples({{"run", "UsedFor", "lose_weight", 3.0},
                                       {"run", "RelatedTo", "legs", 2.0},
                                       {"run", "RelatedTo", "zebra", 1.0}});
  auto vocab = corpus::Vocab::from_tokens({"<pad>", "<bos>", "<eos>", "<unk>", "run", "legs"});
  auto batch = expand_triples(g, {{"run"}, {}, {}}, vocab);
  REQUIRE(batch.size() == 1);
  CHECK(batch.triples[0].tail == "legs");
  CHECK(batch.dropped_multiword == 1);
  CHECK(expand_triples(g, {{"the", "?"}, {}, {}}, vocab).empty());
}

TEST_CASE("source priority follows X, then C, then K_V") {
  auto g = ConceptGraph::from_triples({{"dog", "IsA", "pet", 1.0}, {"park", "HasA", "tree", 5.0}});
  auto vocab = corpus::Vocab::from_tokens({"<pad>", "<bos>", "<eos>", "<unk>", "dog", "pet",
                                           "park", "tree"});
  auto batch = expand_triples(g, {{"dog"}, {"park", "dog"}, {"park"}}, vocab);
  REQUIRE(batch.size() == 2);
  CHECK(batch.sources[0] == Source::kPost);
  CHECK(batch.triples[0].head == "dog");
  CHECK(batch.sources[1] == Source::kContext);
  CHECK(std::string(source_name(Source::kFirstHop)) == "K_V");
}

TEST_CASE("fixture graph matches exhaustive enumeration on random sources") {
  const auto& f = t::fixture();
  auto raw = t::read_raw_triples(t::fixture_dir() / "triples.tsv");
  const auto& words = f.vocab.tokens();
  Rng rng(77);
  for (int trial = 0; trial < 200; ++trial) {
    auto pick = [&](std::size_t n) {
      corpus::Tokens out;
      for (std::size_t i = 0; i < n; ++i) out.push_back(words[4 + rng.below(words.size() - 4)]);
      return out;
    };
    ExpansionSources src{pick(rng.below(8)), pick(rng.below(12)), pick(rng.below(30))};
    const std::size_t top_n = 1 + rng.below(4);
    const std::size_t cap = 1 + rng.below(20);
    CAPTURE(trial);
    auto batch = expand_triples(f.stores->graph, src, f.vocab, {top_n, cap}, f.stores->stopwords());
    auto want = t::oracle_expand(raw, src.post, src.context, src.first_hop, f.vocab,
                                 f.stores->stopwords(), top_n, cap);
    expect_batch_matches(batch, want, f.vocab);
    CHECK(batch.size() <= cap);
  }
}

TEST_CASE("graph TSV round-trips") {
  auto dir = t::scratch_dir("ckg_io");
  auto g = load_graph(t::write_file(dir, "g.tsv", kFiveRows));
  g.save_tsv(dir / "out.tsv");
  auto again = load_graph(dir / "out.tsv");
  CHECK(again.adjacency() == g.adjacency());
  CHECK(again.relations() == g.relations());
}

}  // TEST_SUITE
