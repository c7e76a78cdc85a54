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
#include <fstream>

#include "dmkcm/training/trainer.hpp"
#include "support/oracles.hpp"

using namespace dmkcm;
using namespace dmkcm::testing;

namespace {

pipeline::DialogueModel fresh_model(std::uint64_t seed) {
  const auto& f = fixture();
  return pipeline::DialogueModel::initialize(tiny_config(), f.vocab, f.stores, seed);
}

training::TrainConfig short_run(std::size_t steps) {
  training::TrainConfig c;
  c.max_steps = steps;
  c.warmup = 20;
  c.seed = 4;
  return c;
}

bool same_parameters(const ParameterSet& a, const ParameterSet& b) {
  if (a.size() != b.size()) return false;
  for (const auto& [name, t] : a.items()) {
    const auto& u = b.get(name);
    if (t.numel() != u.numel()) return false;
    for (std::size_t i = 0; i < t.numel(); ++i) {
      if (t[i] != u[i]) return false;
    }
  }
  return true;
}

}  // namespace

TEST_SUITE("training") {

TEST_CASE("negative log likelihood of the gold tokens") {
  auto dist = Tensor::matrix({{0.5, 0.3, 0.2}, {0.25, 0.25, 0.5}});
  CHECK(training::nll_loss(dist, {0, 1}).item() ==
        doctest::Approx((std::log(2.0) + std::log(4.0)) / 2).epsilon(1e-12));
  CHECK(training::nll_loss(dist, {0, 1}).item() == doctest::Approx(1.0397).epsilon(1e-4));
  CHECK(training::nll_loss(dist, {0, 1}, {true, false}).item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(training::nll_loss(dist, {0}), DimensionError);
  CHECK_THROWS_AS(training::nll_loss(dist, {0, 3}), ContractError);
  CHECK_THROWS_AS(training::nll_loss(dist, {0, 1}, {false, false}), ContractError);
}

TEST_CASE("warmup schedule peaks at the warmup step") {
  training::AdamConfig c;
  c.warmup = 50;
  c.d_model = 16;
  const double peak = training::learning_rate(50, c);
  CHECK(peak == doctest::Approx(0.25 / std::sqrt(50.0)).epsilon(1e-12));
  for (std::size_t s = 1; s <= 150; ++s) CHECK(training::learning_rate(s, c) <= peak * (1 + 1e-12));
  CHECK(training::learning_rate(10, c) == doctest::Approx(0.25 * 10 * std::pow(50.0, -1.5)).epsilon(1e-12));
  CHECK(training::learning_rate(100, c) == doctest::Approx(0.25 / 10).epsilon(1e-12));
  CHECK_THROWS_AS(training::learning_rate(0, c), ContractError);
}

TEST_CASE("two Adam steps on one scalar follow the hand recurrence") {
  ParameterSet p;
  Tensor x = p.add("x", Tensor::vector({1.0}, true));
  training::AdamConfig c{0.9, 0.98, 1e-9, 1.0, 4, 4};
  training::AdamState state;

  x.mutable_grad()[0] = 0.5;
  const double lr1 = training::adam_warmup_step(p, state, 1, c);
  CHECK(lr1 == doctest::Approx(0.0625).epsilon(1e-12));
  // m = 0.05, v = 0.005; bias-corrected 0.5 and 0.25.
  const double x1 = 1 - 0.0625 * 0.5 / (0.5 + 1e-9);
  CHECK(x[0] == doctest::Approx(x1).epsilon(1e-12));

  x.mutable_grad()[0] = -0.2;
  const double lr2 = training::adam_warmup_step(p, state, 2, c);
  CHECK(lr2 == doctest::Approx(0.125).epsilon(1e-12));
  const double m = 0.025, v = 0.0057;
  const double x2 = x1 - 0.125 * (m / 0.19) / (std::sqrt(v / 0.0396) + 1e-9);
  CHECK(x[0] == doctest::Approx(x2).epsilon(1e-12));
  CHECK(state.step == 2);
  CHECK(state.m.at("x")[0] == doctest::Approx(m).epsilon(1e-12));
  CHECK(state.v.at("x")[0] == doctest::Approx(v).epsilon(1e-12));
}

TEST_CASE("gradient clipping rescales to the global norm") {
  ParameterSet p;
  Tensor a = p.add("a", Tensor::vector({0, 0}, true));
  Tensor b = p.add("b", Tensor::vector({0}, true));
  a.mutable_grad()[0] = 3;
  b.mutable_grad()[0] = 4;
  CHECK(training::gradient_norm(p) == doctest::Approx(5));
  CHECK(training::clip_gradients(p, 1.0) == doctest::Approx(5));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK(b.grad()[0] == doctest::Approx(0.8));
  CHECK(training::clip_gradients(p, 10.0) == doctest::Approx(1));
  CHECK(a.grad()[0] == doctest::Approx(0.6));
  CHECK_THROWS_AS(training::clip_gradients(p, 0), ContractError);
}

TEST_CASE("training is deterministic for a seed") {
  auto m1 = fresh_model(8);
  auto m2 = fresh_model(8);
  training::Trainer t1(m1, fixture().units, short_run(12));
  training::Trainer t2(m2, fixture().units, short_run(12));
  auto r1 = t1.run();
  auto r2 = t2.run();
  REQUIRE(r1.size() == 12);
  for (std::size_t i = 0; i < r1.size(); ++i) CHECK(r1[i].loss == r2[i].loss);
  CHECK(same_parameters(m1.params(), m2.params()));
  CHECK(t1.adam_state() == t2.adam_state());
}

TEST_CASE("resuming from saved state matches an uninterrupted run") {
  auto straight = fresh_model(9);
  training::Trainer full(straight, fixture().units, short_run(10));
  auto all = full.run();

  const auto dir = scratch_dir("resume");
  auto first = fresh_model(9);
  training::Trainer half(first, fixture().units, short_run(5));
  half.run();
  half.save_state(dir);

  auto second = fresh_model(101);
  training::Trainer rest(second, fixture().units, short_run(10));
  rest.load_state(dir);
  CHECK(rest.steps_done() == 5);
  CHECK(rest.cursor() == half.cursor());
  CHECK(rest.bank().turns() == half.bank().turns());
  auto tail = rest.run();
  REQUIRE(tail.size() == 5);
  for (std::size_t i = 0; i < 5; ++i) {
    CHECK(tail[i].step == all[5 + i].step);
    CHECK(tail[i].loss == all[5 + i].loss);
  }
  CHECK(same_parameters(second.params(), straight.params()));
  CHECK(rest.adam_state() == full.adam_state());
}

TEST_CASE("training carries memory within a conversation") {
  auto model = fresh_model(10);
  const auto& units = fixture().units;
  training::Trainer t(model, units, short_run(3));
  for (std::size_t i = 0; i < 3; ++i) {
    t.step();
    CHECK(t.bank().conversation_id() == units[i].conversation_id);
    CHECK(t.bank().turns().back() == units[i].turn_index);
  }
}

TEST_CASE("loss falls when overfitting a few turns") {
  auto model = fresh_model(12);
  std::vector<corpus::DialogueUnit> units(fixture().units.begin(), fixture().units.begin() + 2);
  auto config = short_run(200);
  config.lr_factor = 2.0;
  training::Trainer t(model, units, config);
  auto records = t.run();
  CHECK(records.back().loss < 0.5 * records.front().loss);
  for (const auto& r : records) {
    CHECK(std::isfinite(r.loss));
    CHECK(r.ppl == doctest::Approx(std::exp(r.loss)));
  }
}

TEST_CASE("train and model configs parse and validate") {
  training::TrainConfig c;
  auto rest = c.apply({{"max_steps", "77"}, {"clip_norm", "0.5"}, {"d_model", "32"}});
  CHECK(c.max_steps == 77);
  CHECK(c.clip_norm == 0.5);
  CHECK(rest.size() == 1);
  CHECK(rest.count("d_model") == 1);
  c.batch_size = 2;
  CHECK_THROWS_AS(c.validate(), neural::ConfigError);
  CHECK_THROWS_AS(training::TrainConfig{}.apply({{"warmup", "many"}}), neural::ConfigError);

  neural::ModelConfig m = tiny_config();
  m.vocab_size = 10;
  m.num_relations = 3;
  CHECK(neural::ModelConfig::from_text(m.to_text()) == m);
  auto unknown = m.apply({{"d_model", "16"}, {"colour", "blue"}});
  CHECK(m.d_model == 16);
  CHECK(unknown.count("colour") == 1);
  m.n_heads = 3;
  CHECK_THROWS_AS(m.validate(), neural::ConfigError);
  CHECK_THROWS_AS(neural::parse_key_values("a=1\na=2\n"), neural::ConfigError);
  CHECK(neural::parse_key_values("# note\nb = 2\n").at("b") == "2");
}

TEST_CASE("loss CSV lists every step") {
  const auto dir = scratch_dir("csv");
  training::write_loss_csv(dir / "loss.csv", {{1, 2.0, std::exp(2.0), 0.01, 3.0}, {2, 1.0, std::exp(1.0), 0.02, 1.0}});
  std::ifstream in(dir / "loss.csv");
  std::string header, first, second;
  std::getline(in, header);
  std::getline(in, first);
  std::getline(in, second);
  CHECK(header == "step,loss,ppl,lr");
  CHECK(first.rfind("1,2,", 0) == 0);
  CHECK(second.rfind("2,1,", 0) == 0);
}

}  // TEST_SUITE
