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

#include "dmkcm/neural/layers.hpp"

#include <cmath>
#include <map>

namespace dmkcm::neural {

namespace {

std::string layer_prefix(const char* stack, std::size_t i) {
  return std::string(stack) + "." + std::to_string(i);
}

void add_linear(ParameterSet& p, const std::string& prefix, std::size_t in, std::size_t out,
                Rng& rng) {
  p.add(prefix + ".w", {in, out}, Init::kUniform, rng);
  p.add(prefix + ".b", {out}, Init::kZeros, rng);
}

void add_norm(ParameterSet& p, const std::string& prefix, std::size_t d, Rng& rng) {
  p.add(prefix + ".gamma", {d}, Init::kOnes, rng);
  p.add(prefix + ".beta", {d}, Init::kZeros, rng);
}

Tensor norm(const Tensor& x, const ParameterSet& p, const std::string& prefix) {
  return ops::layer_norm(x, p.get(prefix + ".gamma"), p.get(prefix + ".beta"));
}

Tensor feedforward(const Tensor& x, const ParameterSet& p, const std::string& prefix) {
  return linear(ops::relu(linear(x, p, prefix + ".ff1")), p, prefix + ".ff2");
}

Tensor attend_projected(const Tensor& q, const Tensor& k, const Tensor& v, const ParameterSet& p,
                        const std::string& prefix, std::size_t heads,
                        const std::vector<bool>& key_valid, bool causal,
                        std::vector<std::vector<Scalar>>* weights_out) {
  ops::AttentionOptions opts;
  opts.heads = heads;
  opts.causal = causal;
  opts.key_valid = key_valid;
  opts.weights_out = weights_out;
  return linear(ops::attention(q, k, v, opts), p, prefix + ".o");
}

Tensor phi(const Tensor& node, const Tensor& relation, Composition c) {
  return c == Composition::kSubtraction ? ops::sub(node, relation) : ops::mul(node, relation);
}

}  // namespace

void add_attention_parameters(ParameterSet& params, const std::string& prefix, std::size_t d,
                              Rng& rng) {
  for (const char* part : {".q", ".k", ".v", ".o"}) add_linear(params, prefix + part, d, d, rng);
}

ParameterSet init_parameters(const ModelConfig& config, Rng& rng) {
  config.validate();
  const std::size_t d = config.d_model;
  ParameterSet p;
  p.add("embedding.token", {config.vocab_size, d}, Init::kUniform, rng);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const auto pre = layer_prefix("encoder", i);
    add_attention_parameters(p, pre + ".self_attn", d, rng);
    add_norm(p, pre + ".ln1", d, rng);
    add_linear(p, pre + ".ff1", d, config.ff_dim, rng);
    add_linear(p, pre + ".ff2", config.ff_dim, d, rng);
    add_norm(p, pre + ".ln2", d, rng);
  }
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    const auto pre = layer_prefix("decoder", i);
    add_attention_parameters(p, pre + ".self_attn", d, rng);
    add_norm(p, pre + ".ln1", d, rng);
    add_attention_parameters(p, pre + ".cross_attn", d, rng);
    add_norm(p, pre + ".ln2", d, rng);
    add_linear(p, pre + ".ff1", d, config.ff_dim, rng);
    add_linear(p, pre + ".ff2", config.ff_dim, d, rng);
    add_norm(p, pre + ".ln3", d, rng);
  }
  // History-knowledge additive attention.
  p.add("memory.W_h", {2 * d, d}, Init::kUniform, rng);
  p.add("memory.V_a", {d}, Init::kUniform, rng);
  // Gated selector.
  add_attention_parameters(p, "selector.attn_v", d, rng);
  add_attention_parameters(p, "selector.attn_m", d, rng);
  p.add("selector.W_g", {d, 1}, Init::kUniform, rng);
  p.add("selector.b_g", {1}, Init::kZeros, rng);
  // Triple encoder.
  p.add("ckg.relation", {config.num_relations, d}, Init::kUniform, rng);
  p.add("ckg.loop_relation", {1, d}, Init::kUniform, rng);
  for (std::size_t l = 0; l < config.gcn_layers; ++l) {
    const auto pre = layer_prefix("compgcn", l);
    for (const char* w : {".w_in", ".w_out", ".w_self", ".w_rel"}) {
      p.add(pre + w, {d, d}, Init::kUniform, rng);
    }
  }
  // Controller.
  p.add("controller.W_v", {d, config.vocab_size}, Init::kUniform, rng);
  p.add("controller.b_v", {config.vocab_size}, Init::kZeros, rng);
  p.add("controller.W_k", {d, d}, Init::kUniform, rng);
  p.add("controller.w_gate", {d, 1}, Init::kUniform, rng);
  p.add("controller.b_gate", {1}, Init::kZeros, rng);
  return p;
}

Tensor linear(const Tensor& x, const ParameterSet& params, const std::string& prefix) {
  return ops::add_row(ops::matmul(x, params.get(prefix + ".w")), params.get(prefix + ".b"));
}

Tensor sinusoidal_positions(std::size_t length, std::size_t d_model) {
  std::vector<Scalar> values(length * d_model);
  for (std::size_t pos = 0; pos < length; ++pos) {
    for (std::size_t i = 0; i < d_model; ++i) {
      const double exponent = static_cast<double>(2 * (i / 2)) / static_cast<double>(d_model);
      const double angle = static_cast<double>(pos) / std::pow(10000.0, exponent);
      values[pos * d_model + i] = static_cast<Scalar>(i % 2 == 0 ? std::sin(angle) : std::cos(angle));
    }
  }
  return Tensor::from({length, d_model}, std::move(values));
}

Tensor embed(const corpus::Ids& ids, const ParameterSet& params, const ModelConfig& config,
             std::size_t first_position) {
  const std::size_t d = config.d_model;
  auto tokens = ops::gather_rows(params.get("embedding.token"), ids);
  auto scaled = ops::affine(tokens, static_cast<Scalar>(std::sqrt(static_cast<double>(d))), 0);
  auto table = sinusoidal_positions(first_position + ids.size(), d);
  return ops::add(scaled, ops::slice_rows(table, first_position, first_position + ids.size()));
}

Tensor multi_head(const Tensor& query, const Tensor& key, const Tensor& value,
                  const ParameterSet& params, const std::string& prefix, std::size_t heads,
                  const std::vector<bool>& key_valid, bool causal,
                  std::vector<std::vector<Scalar>>* weights_out) {
  if (key.rows() != value.rows()) {
    throw ContractError("multi_head: key length " + std::to_string(key.rows()) +
                        " differs from value length " + std::to_string(value.rows()));
  }
  return attend_projected(linear(query, params, prefix + ".q"), linear(key, params, prefix + ".k"),
                          linear(value, params, prefix + ".v"), params, prefix, heads, key_valid,
                          causal, weights_out);
}

corpus::Ids truncate_head(const corpus::Ids& ids, std::size_t max_length) {
  if (ids.size() <= max_length) return ids;
  return corpus::Ids(ids.end() - static_cast<std::ptrdiff_t>(max_length), ids.end());
}

EncoderOutput t_enc(const corpus::Ids& raw_ids, const ParameterSet& params,
                    const ModelConfig& config, Pooling pooling) {
  if (raw_ids.empty()) throw ContractError("t_enc: empty input");
  const auto ids = truncate_head(raw_ids, config.max_length);
  EncoderOutput out;
  out.valid.resize(ids.size());
  bool any = false;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] >= config.vocab_size) {
      throw ContractError("t_enc: token id " + std::to_string(ids[i]) + " outside vocabulary");
    }
    out.valid[i] = ids[i] != corpus::Vocab::kPad;
    if (out.valid[i]) {
      out.last_valid = i;
      any = true;
    }
  }
  if (!any) throw ContractError("t_enc: input has no non-pad token");
  Tensor x = embed(ids, params, config);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto pre = layer_prefix("encoder", l);
    auto a = multi_head(x, x, x, params, pre + ".self_attn", config.n_heads, out.valid);
    x = norm(ops::add(x, a), params, pre + ".ln1");
    x = norm(ops::add(x, feedforward(x, params, pre)), params, pre + ".ln2");
  }
  out.states = x;
  if (pooling == Pooling::kLastToken) {
    out.pooled = ops::slice_rows(x, out.last_valid, out.last_valid + 1);
  } else {
    std::size_t n = 0;
    for (bool v : out.valid) n += v;
    std::vector<Scalar> w(ids.size());
    for (std::size_t i = 0; i < ids.size(); ++i) w[i] = out.valid[i] ? Scalar{1} / n : Scalar{0};
    out.pooled = ops::matmul(Tensor::from({1, ids.size()}, std::move(w)), x);
  }
  return out;
}

Tensor t_dec(const corpus::Ids& input_ids, const Tensor& memory, const ParameterSet& params,
             const ModelConfig& config) {
  if (input_ids.empty()) throw ContractError("t_dec: empty input");
  Tensor x = embed(input_ids, params, config);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto pre = layer_prefix("decoder", l);
    auto a = multi_head(x, x, x, params, pre + ".self_attn", config.n_heads, {}, true);
    x = norm(ops::add(x, a), params, pre + ".ln1");
    auto c = multi_head(x, memory, memory, params, pre + ".cross_attn", config.n_heads);
    x = norm(ops::add(x, c), params, pre + ".ln2");
    x = norm(ops::add(x, feedforward(x, params, pre)), params, pre + ".ln3");
  }
  return x;
}

DecoderCache::DecoderCache(const Tensor& memory, const ParameterSet& params,
                           const ModelConfig& config)
    : memory_id_(memory.id()) {
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto pre = layer_prefix("decoder", l) + ".cross_attn";
    cross_keys.push_back(linear(memory, params, pre + ".k"));
    cross_values.push_back(linear(memory, params, pre + ".v"));
  }
  self_keys.resize(config.n_layers);
  self_values.resize(config.n_layers);
}

Tensor t_dec_step(std::size_t prev_token, const Tensor& memory, DecoderCache& cache,
                  const ParameterSet& params, const ModelConfig& config) {
  if (memory.id() != cache.memory_id_ || cache.cross_keys.size() != config.n_layers) {
    throw ContractError("t_dec_step: cache was built for a different turn memory");
  }
  const corpus::Ids ids{prev_token};
  Tensor x = embed(ids, params, config, cache.position_);
  for (std::size_t l = 0; l < config.n_layers; ++l) {
    const auto pre = layer_prefix("decoder", l);
    const auto sa = pre + ".self_attn";
    auto k = linear(x, params, sa + ".k");
    auto v = linear(x, params, sa + ".v");
    cache.self_keys[l] = cache.position_ == 0 ? k : ops::concat_rows({cache.self_keys[l], k});
    cache.self_values[l] =
        cache.position_ == 0 ? v : ops::concat_rows({cache.self_values[l], v});
    auto a = attend_projected(linear(x, params, sa + ".q"), cache.self_keys[l],
                              cache.self_values[l], params, sa, config.n_heads, {}, false, nullptr);
    x = norm(ops::add(x, a), params, pre + ".ln1");
    const auto ca = pre + ".cross_attn";
    auto c = attend_projected(linear(x, params, ca + ".q"), cache.cross_keys[l],
                              cache.cross_values[l], params, ca, config.n_heads, {}, false, nullptr);
    x = norm(ops::add(x, c), params, pre + ".ln2");
    x = norm(ops::add(x, feedforward(x, params, pre)), params, pre + ".ln3");
  }
  ++cache.position_;
  return x;
}

GcnState compgcn_layers(const GcnGraph& graph, GcnState state, const ParameterSet& params,
                        std::size_t layers, Composition composition) {
  const std::size_t n = graph.num_nodes;
  const std::size_t e = graph.src.size();
  if (graph.rel.size() != e || graph.dst.size() != e) {
    throw DimensionError("compgcn: edge lists differ in length");
  }
  if (state.nodes.rows() != n) throw DimensionError("compgcn: node table does not match graph");
  std::vector<Scalar> in_w(e), out_w(e);
  {
    std::vector<std::size_t> indeg(n, 0), outdeg(n, 0);
    for (std::size_t i = 0; i < e; ++i) {
      ++indeg[graph.dst[i]];
      ++outdeg[graph.src[i]];
    }
    for (std::size_t i = 0; i < e; ++i) {
      in_w[i] = Scalar{1} / static_cast<Scalar>(indeg[graph.dst[i]]);
      out_w[i] = Scalar{1} / static_cast<Scalar>(outdeg[graph.src[i]]);
    }
  }
  const std::vector<std::size_t> loop_index(n, 0);
  for (std::size_t l = 0; l < layers; ++l) {
    const auto pre = layer_prefix("compgcn", l);
    const auto& x = state.nodes;
    const auto& z = state.relations;
    auto total = ops::matmul(phi(x, ops::gather_rows(state.loop, loop_index), composition),
                             params.get(pre + ".w_self"));
    if (e > 0) {
      auto rel = ops::gather_rows(z, graph.rel);
      auto along = ops::matmul(phi(ops::gather_rows(x, graph.src), rel, composition),
                               params.get(pre + ".w_in"));
      auto against = ops::matmul(phi(ops::gather_rows(x, graph.dst), rel, composition),
                                 params.get(pre + ".w_out"));
      total = ops::add(total, ops::scatter_add_rows(along, graph.dst, n, in_w));
      total = ops::add(total, ops::scatter_add_rows(against, graph.src, n, out_w));
    }
    GcnState next;
    next.nodes = ops::tanh(total);
    next.relations = ops::matmul(z, params.get(pre + ".w_rel"));
    next.loop = ops::matmul(state.loop, params.get(pre + ".w_rel"));
    state = std::move(next);
  }
  return state;
}

std::optional<TripleEncoding> compgcn_encode(const ckg::TripleBatch& batch,
                                             const ParameterSet& params,
                                             const ModelConfig& config) {
  if (batch.empty()) return std::nullopt;
  std::map<std::string, std::size_t> node_of;
  std::vector<std::size_t> node_token;
  std::map<std::size_t, std::size_t> rel_of;
  std::vector<std::size_t> rel_global;
  auto node = [&](const std::string& name, std::size_t token) {
    auto [it, inserted] = node_of.emplace(name, node_token.size());
    if (inserted) node_token.push_back(token);
    return it->second;
  };
  GcnGraph g;
  std::vector<std::size_t> head_nodes, tail_nodes, rel_local;
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto h = node(batch.triples[i].head, batch.head_ids[i]);
    const auto t = node(batch.triples[i].tail, batch.tail_ids[i]);
    if (batch.relation_ids[i] >= config.num_relations) {
      throw ContractError("compgcn_encode: relation id outside the relation table");
    }
    auto [it, inserted] = rel_of.emplace(batch.relation_ids[i], rel_global.size());
    if (inserted) rel_global.push_back(batch.relation_ids[i]);
    g.src.push_back(h);
    g.rel.push_back(it->second);
    g.dst.push_back(t);
    head_nodes.push_back(h);
    tail_nodes.push_back(t);
    rel_local.push_back(it->second);
  }
  g.num_nodes = node_token.size();
  GcnState init;
  init.nodes = ops::gather_rows(params.get("embedding.token"), node_token);
  init.relations = ops::gather_rows(params.get("ckg.relation"), rel_global);
  init.loop = params.get("ckg.loop_relation");
  auto out = compgcn_layers(g, std::move(init), params, config.gcn_layers, config.composition);
  return TripleEncoding{ops::gather_rows(out.nodes, head_nodes),
                        ops::gather_rows(out.relations, rel_local),
                        ops::gather_rows(out.nodes, tail_nodes)};
}

}  // namespace dmkcm::neural
