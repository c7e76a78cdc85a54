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

#include <cmath>
#include <set>

#include "dmkcm/fusion/fusion.hpp"
#include "dmkcm/pipeline/model.hpp"
#include "support/oracles.hpp"
#include "support/sweeps.hpp"

using namespace dmkcm;
using namespace dmkcm::testing;

namespace {

ParameterSet memory_params() {
  ParameterSet p;
  p.add("memory.W_h", Tensor::matrix({{1, 0}, {0, 1}, {1, 0}, {0, 1}}));
  p.add("memory.V_a", Tensor::vector({1, 0}));
  return p;
}

ParameterSet controller_params(std::size_t vocab) {
  Rng rng(3);
  ParameterSet p;
  p.add("controller.W_v", random_tensor(rng, {2, vocab}));
  p.add("controller.b_v", random_tensor(rng, {vocab}));
  p.add("controller.W_k", Tensor::matrix({{1, 0}, {0, 1}}));
  p.add("controller.w_gate", Tensor::zeros({2, 1}));
  p.add("controller.b_gate", Tensor::zeros({1}));
  return p;
}

pipeline::DialogueModel model_with(const neural::ModelConfig& config, std::uint64_t seed = 5) {
  const auto& f = fixture();
  return pipeline::DialogueModel::initialize(config, f.vocab, f.stores, seed);
}

std::size_t first_unit_with_docs(const pipeline::DialogueModel& model) {
  const auto& units = fixture().units;
  for (std::size_t i = 0; i < units.size(); ++i) {
    if (!model.prepare(pipeline::TurnRequest::from_unit(units[i])).document_ids.empty()) return i;
  }
  FAIL("fixture has no turn with first-hop documents");
  return 0;
}

}  // namespace

TEST_SUITE("fusion") {

TEST_CASE("memory bank stores, evicts and detaches") {
  fusion::MemoryBank bank("c", 2);
  auto h = Tensor::matrix({{1, 2}}, true);
  bank.update(1, h, {4});
  CHECK_FALSE(bank.entries().front().h_v.requires_grad());
  bank.update(2, Tensor::zeros({0, 2}), {});
  bank.update(4, Tensor::matrix({{3, 4}, {5, 6}}), {7, 9});
  CHECK(bank.turns() == std::vector<std::size_t>{2, 4});
  CHECK(bank.slot_count() == 2);
  const auto slots = bank.slots();
  REQUIRE(slots.size() == 2);
  CHECK(slots[0].turn_index == 4);
  CHECK(slots[1].doc_id == 9);
  auto flat = bank.flattened();
  CHECK(flat.rows() == 2);
  CHECK(flat.at(1, 1) == 6);

  CHECK_THROWS_AS(bank.update(4, Tensor::zeros({0, 2}), {}), ContractError);
  CHECK_THROWS_AS(bank.update(5, Tensor::zeros({1, 2}), {}), ContractError);
  CHECK_THROWS_AS(bank.update(0, Tensor::zeros({0, 2}), {}), ContractError);
  CHECK_THROWS_AS(fusion::MemoryBank("c", 0), ContractError);
  bank.clear();
  CHECK(bank.entries().empty());
  CHECK_THROWS_AS(bank.flattened(), ContractError);
  CHECK_THROWS_AS(fusion::memory_attend(bank, Tensor::zeros({1, 2}), memory_params()), ContractError);
}

TEST_CASE("additive memory attention over three slots by hand") {
  fusion::MemoryBank bank("c", 4);
  bank.update(1, Tensor::matrix({{1, 0}}), {0});
  bank.update(2, Tensor::matrix({{0, 0}, {-1, 0}}), {1, 2});
  auto read = fusion::memory_attend(bank, Tensor::matrix({{0, 0}}), memory_params());
  const double t = std::tanh(1.0);
  const double z = std::exp(t) + 1 + std::exp(-t);
  const double a0 = std::exp(t) / z, a1 = 1 / z, a2 = std::exp(-t) / z;
  CHECK(read.alpha.at(0, 0) == doctest::Approx(a0).epsilon(1e-12));
  CHECK(read.alpha.at(0, 1) == doctest::Approx(a1).epsilon(1e-12));
  CHECK(read.alpha.at(0, 2) == doctest::Approx(a2).epsilon(1e-12));
  CHECK(read.h_m.at(0, 0) == doctest::Approx(a0 - a2).epsilon(1e-12));
  CHECK(read.h_m.at(0, 1) == 0);
  REQUIRE(read.slots.size() == 3);
  CHECK(read.slots[2].turn_index == 2);
}

TEST_CASE("selector enforces the turn contract") {
  auto config = tiny_config();
  auto model = model_with(config);
  const auto& p = model.params();
  Rng rng(1);
  auto h_e = random_tensor(rng, {3, 8});
  auto pooled = random_tensor(rng, {1, 8});
  auto h_v = random_tensor(rng, {2, 8});
  CHECK_THROWS_AS(fusion::select_merge(h_e, pooled, h_v, std::nullopt, p, config, 1, true),
                  ContractError);
  CHECK_THROWS_AS(fusion::select_merge(h_e, pooled, h_v, h_v, p, config, 2, false), ContractError);
  CHECK_THROWS_AS(fusion::select_merge(h_e, pooled, h_v, std::nullopt, p, config, 0, false),
                  ContractError);

  auto empty = fusion::select_merge(h_e, pooled, Tensor::zeros({0, 8}), std::nullopt, p, config, 1, false);
  CHECK(empty.empty_first_hop);
  for (auto v : empty.a_v.data()) CHECK(v == 0);

  auto fixed = fusion::select_merge(h_e, pooled, h_v, h_v, p, config, 2, true, {Scalar{0.25}});
  CHECK(fixed.mu.item() == 0.25);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t c = 0; c < 8; ++c) {
      const double want = 0.25 * fixed.a_v.at(r, c) + 0.75 * fixed.a_m->at(r, c) + h_e.at(r, c);
      CHECK(fixed.a_merge.at(r, c) == doctest::Approx(want).epsilon(1e-12));
    }
  }
}

TEST_CASE("triple attention over three triples by hand") {
  neural::TripleEncoding enc{Tensor::matrix({{1, 0}, {0, 1}, {1, 0}}),
                             Tensor::matrix({{0, 0}, {0, 0}, {1, 3}}),
                             Tensor::matrix({{1, 2}, {3, 4}, {5, 6}})};
  auto att = fusion::triple_attend(enc, Tensor::matrix({{1, 0}}));
  const double z = std::exp(1.0) + 1 + std::exp(2.0);
  const double b[3] = {std::exp(1.0) / z, 1 / z, std::exp(2.0) / z};
  for (int i = 0; i < 3; ++i) CHECK(att.beta.at(0, i) == doctest::Approx(b[i]).epsilon(1e-12));
  CHECK(att.h_kc.at(0, 0) == doctest::Approx(b[0] + 3 * b[1] + 5 * b[2]).epsilon(1e-12));
  CHECK(att.h_kc.at(0, 1) == doctest::Approx(2 * b[0] + 4 * b[1] + 6 * b[2]).epsilon(1e-12));
  CHECK(att.weighted.at(2, 1) == doctest::Approx(6 * b[2]).epsilon(1e-12));
  CHECK_THROWS_AS(fusion::triple_attend({Tensor::zeros({0, 2}), Tensor::zeros({0, 2}),
                                         Tensor::zeros({0, 2})},
                                        Tensor::matrix({{1, 0}})),
                  ContractError);
}

TEST_CASE("duplicate tails accumulate entity mass") {
  const std::size_t vocab = 8;
  auto p = controller_params(vocab);
  fusion::TripleAttention att{Tensor::matrix({{0.5, 0.5}}), Tensor::zeros({1, 2}),
                              Tensor::matrix({{0, 0}, {std::log(7.0 / 3.0), 0}})};
  auto h_d = Tensor::matrix({{1, 0}});

  auto dup = fusion::controller_mix(h_d, &att, {5, 5}, p);
  REQUIRE(dup.gamma);
  CHECK(dup.gamma->at(0, 0) == doctest::Approx(0.3).epsilon(1e-12));
  CHECK(dup.gamma->at(0, 1) == doctest::Approx(0.7).epsilon(1e-12));
  CHECK(dup.gate.at(0, 0) == 0.5);
  CHECK(dup.final_dist.at(0, 5) == doctest::Approx(0.5 * dup.p_v.at(0, 5) + 0.5).epsilon(1e-12));
  double total = 0;
  for (std::size_t w = 0; w < vocab; ++w) total += dup.final_dist.at(0, w);
  CHECK(total == doctest::Approx(1.0).epsilon(1e-12));

  auto split = fusion::controller_mix(h_d, &att, {5, 6}, p);
  CHECK(split.final_dist.at(0, 5) == doctest::Approx(0.5 * split.p_v.at(0, 5) + 0.15).epsilon(1e-12));
  CHECK(split.final_dist.at(0, 6) == doctest::Approx(0.5 * split.p_v.at(0, 6) + 0.35).epsilon(1e-12));

  auto none = fusion::controller_mix(h_d, nullptr, {}, p);
  CHECK(none.gate.at(0, 0) == 1);
  for (std::size_t w = 0; w < vocab; ++w) CHECK(none.final_dist.at(0, w) == none.p_v.at(0, w));

  CHECK_THROWS_AS(fusion::controller_mix(h_d, &att, {5}, p), ContractError);
  CHECK_THROWS_AS(fusion::controller_mix(h_d, &att, {5, vocab}, p), ContractError);
}

TEST_CASE("memory schedule matches the reference machine over 1000 schedules") {
  const auto sweep = algorithm1_sweep(1000, 2026);
  INFO(sweep.first_mismatch);
  CHECK(sweep.schedules == 1000);
  CHECK(sweep.turns > 1000);
  CHECK(sweep.mismatches == 0);
}

TEST_CASE("first turn ignores memory contents and later turns use them") {
  const auto check = merge_branch_check(17);
  CHECK(check.first_turn_trials == 25);
  CHECK(check.first_turn_bitwise_invariant);
  CHECK(check.zeroed_history_changes_output);
  CHECK(check.max_change_at_mu_one <= 1e-12);
}

TEST_CASE("mixtures stay normalised across random parameters") {
  const auto sweep = mixture_sweep(10000, 99);
  CHECK(sweep.calls == 10000);
  CHECK(sweep.max_sum_error <= 1e-6);
  CHECK(sweep.min_probability >= 0);
  CHECK(sweep.min_gate > 0);
  CHECK(sweep.max_gate < 1);
  CHECK(sweep.min_mu > 0);
  CHECK(sweep.max_mu < 1);
}

TEST_CASE("gate endpoints recover the copy and vocabulary distributions") {
  const auto check = copy_endpoint_check(23);
  CHECK(check.tokens_at_zero > 0);
  CHECK(check.non_tail_tokens_at_zero == 0);
  CHECK(check.gate_one_bitwise_p_v);
  CHECK(check.gate_one_max_diff_vs_softmax <= 1e-12);
}

TEST_CASE("first-hop encodings are the pooled document encodings") {
  NoGradGuard guard;
  auto model = model_with(tiny_config());
  const auto unit = fixture().units[first_unit_with_docs(model)];
  auto k = model.prepare(pipeline::TurnRequest::from_unit(unit));
  auto fwd = model.forward(k, fusion::MemoryBank("c"));
  REQUIRE(fwd.h_v.rows() == k.retrieval.first_hop.size());
  const auto& index = model.stores().index;
  for (std::size_t t = 0; t < k.retrieval.first_hop.size(); ++t) {
    auto ids = model.vocab().encode(index.doc(k.retrieval.first_hop[t].doc_id).body_tokens);
    if (ids.size() > model.config().max_length) ids.resize(model.config().max_length);
    auto pooled = neural::t_enc(ids, model.params(), model.config(), model.config().doc_pooling).pooled;
    for (std::size_t c = 0; c < fwd.h_v.cols(); ++c) CHECK(fwd.h_v.at(t, c) == pooled.at(0, c));
  }

  fusion::MemoryBank bank(unit.conversation_id);
  model.commit(bank, k, fwd);
  REQUIRE(bank.entries().size() == 1);
  CHECK(bank.entries().front().turn_index == k.turn_index);
  CHECK(bank.entries().front().doc_ids.size() == k.retrieval.first_hop.size());
  CHECK(bank.entries().front().doc_ids.front() == k.retrieval.first_hop.front().doc_id);
}

TEST_CASE("forward reads memory only from turn 2 and rejects stale banks") {
  NoGradGuard guard;
  auto model = model_with(tiny_config());
  auto k = model.prepare(pipeline::TurnRequest::from_unit(fixture().units[first_unit_with_docs(model)]));
  fusion::MemoryBank bank("c");
  bank.update(1, Tensor::full({1, 8}, 1), {0});
  k.turn_index = 1;
  auto first = model.forward(k, bank);
  CHECK_FALSE(first.memory);
  CHECK_FALSE(first.merge.a_m);

  k.turn_index = 2;
  auto second = model.forward(k, bank);
  REQUIRE(second.memory);
  CHECK(second.memory->slots.size() == 1);
  CHECK(second.merge.a_m);

  bank.update(2, Tensor::full({1, 8}, 2), {1});
  CHECK_THROWS_AS(model.forward(k, bank), ContractError);
}

TEST_CASE("ablation switches remove their branch") {
  NoGradGuard guard;
  const auto& units = fixture().units;

  auto no_memory = tiny_config();
  no_memory.use_memory = false;
  auto m1 = model_with(no_memory);
  fusion::MemoryBank bank("c");
  bank.update(1, Tensor::full({1, 8}, 1), {0});
  auto k = m1.prepare(pipeline::TurnRequest::from_unit(units[1]));
  k.turn_index = 2;
  auto f1 = m1.forward(k, bank);
  CHECK_FALSE(f1.memory);
  CHECK_FALSE(f1.merge.a_m);

  auto no_first = tiny_config();
  no_first.use_first_hop = false;
  auto m2 = model_with(no_first);
  for (const auto& u : units) {
    auto k2 = m2.prepare(pipeline::TurnRequest::from_unit(u));
    CHECK(k2.retrieval.first_hop.empty());
    CHECK(k2.document_ids.empty());
    k2.turn_index = 1;
    auto f2 = m2.forward(k2, fusion::MemoryBank("c"));
    CHECK(f2.merge.empty_first_hop);
    for (auto v : f2.merge.a_v.data()) CHECK(v == 0);
  }

  auto no_second = tiny_config();
  no_second.use_second_hop = false;
  auto m3 = model_with(no_second);
  for (const auto& u : units) {
    auto k3 = m3.prepare(pipeline::TurnRequest::from_unit(u));
    CHECK(k3.triples.empty());
    k3.turn_index = 1;
    auto f3 = m3.forward(k3, fusion::MemoryBank("c"));
    CHECK_FALSE(f3.encoding);
    auto tf = m3.teacher_forcing(u.gold_response);
    auto mix = m3.decode_teacher_forced(f3, k3, tf.input);
    CHECK(mix.final_dist.data().size() == mix.p_v.data().size());
    bool same = true;
    for (std::size_t i = 0; i < mix.p_v.numel(); ++i) same = same && mix.final_dist[i] == mix.p_v[i];
    CHECK(same);
  }
}

}  // TEST_SUITE
