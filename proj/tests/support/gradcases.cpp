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

#include "support/gradcases.hpp"

#include "dmkcm/fusion/fusion.hpp"
#include "dmkcm/neural/layers.hpp"
#include "dmkcm/numerics/ops.hpp"
#include "dmkcm/pipeline/model.hpp"
#include "dmkcm/training/objective.hpp"

namespace dmkcm::testing {

namespace {

constexpr std::size_t kWidth = 8;

Tensor probe(const Tensor& out, std::uint64_t seed) {
  Rng rng(seed);
  return ops::sum(ops::mul(out, random_tensor(rng, {out.rows(), out.cols()})));
}

std::vector<std::string> with_prefix(const ParameterSet& p, const std::vector<std::string>& prefixes) {
  std::vector<std::string> names;
  for (const auto& [name, _] : p.items()) {
    for (const auto& pre : prefixes) {
      if (name.rfind(pre, 0) == 0) {
        names.push_back(name);
        break;
      }
    }
  }
  return names;
}

/// Shifts initial values away from the tiny default range so that
/// saturating nonlinearities and softmaxes see non-trivial inputs.
void widen(ParameterSet& p, Rng& rng, double scale) {
  for (const auto& [name, t] : p.items()) {
    Tensor shared = t;  // copies share storage
    for (auto& v : shared.mutable_data()) v = static_cast<Scalar>(v * scale + rng.uniform(-0.05, 0.05));
  }
}

neural::ModelConfig small_config(std::size_t vocab, std::size_t relations) {
  auto c = tiny_config();
  c.vocab_size = vocab;
  c.num_relations = relations;
  return c;
}

}  // namespace

std::vector<LayerGradCase> layer_grad_cases(std::uint64_t seed) {
  std::vector<LayerGradCase> cases;

  cases.push_back({"multi-head attention", [seed] {
    Rng rng(seed);
    ParameterSet p;
    neural::add_attention_parameters(p, "attn", kWidth, rng);
    widen(p, rng, 6);
    p.add("input.x", random_tensor(rng, {5, kWidth}));
    p.add("input.m", random_tensor(rng, {3, kWidth}));
    auto loss = [&] {
      auto self = neural::multi_head(p.get("input.x"), p.get("input.x"), p.get("input.x"), p, "attn",
                                     2, {true, true, false, true, true}, true);
      auto cross = neural::multi_head(p.get("input.x"), p.get("input.m"), p.get("input.m"), p,
                                      "attn", 2);
      return ops::add(probe(self, seed + 1), probe(cross, seed + 2));
    };
    return grad_check(p, with_prefix(p, {"attn", "input"}), loss);
  }});

  cases.push_back({"encoder block (feedforward, layer norm, embedding)", [seed] {
    Rng rng(seed + 10);
    auto config = small_config(12, 2);
    auto p = neural::init_parameters(config, rng);
    widen(p, rng, 5);
    const corpus::Ids ids{5, 7, 0, 11, 4};
    auto loss = [&] {
      auto out = neural::t_enc(ids, p, config);
      auto mean = neural::t_enc(ids, p, config, neural::Pooling::kMean);
      return ops::add(probe(out.states, seed + 3), probe(mean.pooled, seed + 4));
    };
    return grad_check(p, with_prefix(p, {"embedding", "encoder"}), loss);
  }});

  cases.push_back({"decoder block (causal self and cross attention)", [seed] {
    Rng rng(seed + 20);
    auto config = small_config(12, 2);
    auto p = neural::init_parameters(config, rng);
    widen(p, rng, 5);
    p.add("input.memory", random_tensor(rng, {4, kWidth}));
    const corpus::Ids ids{1, 6, 9, 4};
    auto loss = [&] { return probe(neural::t_dec(ids, p.get("input.memory"), p, config), seed + 5); };
    return grad_check(p, with_prefix(p, {"decoder", "input"}), loss);
  }});

  for (auto comp : {neural::Composition::kSubtraction, neural::Composition::kMultiplication}) {
    const std::string label = comp == neural::Composition::kSubtraction ? "sub" : "mult";
    cases.push_back({"CompGCN (" + label + ")", [seed, comp] {
      Rng rng(seed + 30);
      auto config = small_config(12, 3);
      config.gcn_layers = 2;
      auto p = neural::init_parameters(config, rng);
      widen(p, rng, 6);
      p.add("input.nodes", random_tensor(rng, {5, kWidth}));
      p.add("input.relations", random_tensor(rng, {3, kWidth}));
      p.add("input.loop", random_tensor(rng, {1, kWidth}));
      neural::GcnGraph g{5, {0, 0, 1, 2, 3, 0}, {0, 1, 2, 0, 1, 2}, {1, 2, 2, 3, 1, 4}};
      auto loss = [&] {
        auto out = neural::compgcn_layers(
            g, {p.get("input.nodes"), p.get("input.relations"), p.get("input.loop")}, p, 2, comp);
        return ops::add(probe(out.nodes, seed + 6), probe(out.relations, seed + 7));
      };
      return grad_check(p, with_prefix(p, {"compgcn", "input"}), loss);
    }});
  }

  cases.push_back({"selector gate (W_g) with history", [seed] {
    Rng rng(seed + 40);
    auto config = small_config(12, 2);
    auto p = neural::init_parameters(config, rng);
    widen(p, rng, 6);
    p.add("input.h_e", random_tensor(rng, {4, kWidth}));
    p.add("input.pooled", random_tensor(rng, {1, kWidth}));
    p.add("input.h_v", random_tensor(rng, {3, kWidth}));
    p.add("input.h_m", random_tensor(rng, {5, kWidth}));
    auto loss = [&] {
      auto first = fusion::select_merge(p.get("input.h_e"), p.get("input.pooled"), p.get("input.h_v"),
                                        std::nullopt, p, config, 1, false);
      auto later = fusion::select_merge(p.get("input.h_e"), p.get("input.pooled"), p.get("input.h_v"),
                                        p.get("input.h_m"), p, config, 3, true);
      return ops::add(probe(first.a_merge, seed + 8), probe(later.a_merge, seed + 9));
    };
    return grad_check(p, with_prefix(p, {"selector", "input"}), loss);
  }});

  cases.push_back({"additive memory attention (V_a, W_h)", [seed] {
    Rng rng(seed + 50);
    auto config = small_config(12, 2);
    auto p = neural::init_parameters(config, rng);
    widen(p, rng, 8);
    p.add("input.h_p", random_tensor(rng, {3, kWidth}));
    fusion::MemoryBank bank("c", 4);
    bank.update(1, random_tensor(rng, {2, kWidth}), {0, 1});
    bank.update(2, random_tensor(rng, {3, kWidth}), {2, 3, 4});
    auto loss = [&] {
      auto read = fusion::memory_attend(bank, p.get("input.h_p"), p);
      return ops::add(probe(read.h_m, seed + 10), probe(read.alpha, seed + 11));
    };
    return grad_check(p, with_prefix(p, {"memory", "input"}), loss);
  }});

  cases.push_back({"triple attention and controller (W_k, gate)", [seed] {
    Rng rng(seed + 60);
    auto config = small_config(12, 2);
    auto p = neural::init_parameters(config, rng);
    widen(p, rng, 6);
    p.add("input.heads", random_tensor(rng, {4, kWidth}));
    p.add("input.relations", random_tensor(rng, {4, kWidth}));
    p.add("input.tails", random_tensor(rng, {4, kWidth}));
    p.add("input.pooled", random_tensor(rng, {1, kWidth}));
    p.add("input.h_d", random_tensor(rng, {3, kWidth}));
    const std::vector<std::size_t> tails{5, 9, 5, 11};
    const std::vector<std::size_t> gold{5, 7, 11};
    auto loss = [&] {
      neural::TripleEncoding enc{p.get("input.heads"), p.get("input.relations"), p.get("input.tails")};
      auto att = fusion::triple_attend(enc, p.get("input.pooled"));
      auto out = fusion::controller_mix(p.get("input.h_d"), &att, tails, p);
      return ops::add(training::nll_loss(out.final_dist, gold), probe(att.h_kc, seed + 12));
    };
    return grad_check(p, with_prefix(p, {"controller", "input"}), loss);
  }});

  cases.push_back({"full turn loss at turn 2", [seed] {
    const auto& f = fixture();
    auto config = tiny_config();
    auto model = pipeline::DialogueModel::initialize(config, f.vocab, f.stores, seed + 70);
    Rng rng(seed + 71);
    widen(model.mutable_params(), rng, 4);
    const auto& first = f.units[0];
    const auto& second = f.units[1];
    fusion::MemoryBank bank(first.conversation_id, config.memory_window);
    auto k1 = model.prepare(pipeline::TurnRequest::from_unit(first));
    {
      NoGradGuard guard;
      model.commit(bank, k1, model.forward(k1, bank));
    }
    auto k2 = model.prepare(pipeline::TurnRequest::from_unit(second));
    auto loss = [&] { return model.loss(model.forward(k2, bank), k2, second.gold_response); };
    return grad_check(model.mutable_params(),
                      {"selector.W_g", "selector.b_g", "memory.V_a", "controller.W_k",
                       "controller.w_gate", "controller.b_gate", "ckg.loop_relation",
                       "compgcn.0.w_in", "compgcn.0.w_out", "compgcn.0.w_rel"},
                      loss);
  }});

  return cases;
}

}  // namespace dmkcm::testing
