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

#include <optional>
#include <string>
#include <vector>

#include "dmkcm/ckg/ckg.hpp"
#include "dmkcm/corpus/corpus.hpp"
#include "dmkcm/neural/config.hpp"
#include "dmkcm/numerics/ops.hpp"
#include "dmkcm/numerics/parameters.hpp"

namespace dmkcm::neural {

/// Creates every trainable tensor of the model under its fixed name.
ParameterSet init_parameters(const ModelConfig& config, Rng& rng);

/// Multi-head attention parameters: prefix.{q,k,v,o}.{w,b}, each w is d x d.
void add_attention_parameters(ParameterSet& params, const std::string& prefix, std::size_t d,
                              Rng& rng);

/// x * W + b with W named prefix + ".w" (in x out) and b prefix + ".b".
Tensor linear(const Tensor& x, const ParameterSet& params, const std::string& prefix);

/// Fixed sinusoidal position table, rows [0, length).
Tensor sinusoidal_positions(std::size_t length, std::size_t d_model);

Tensor embed(const corpus::Ids& ids, const ParameterSet& params, const ModelConfig& config,
             std::size_t first_position = 0);

/// Projects queries, keys and values, attends, and applies the output
/// projection. key_valid marks usable keys (empty = all).
Tensor multi_head(const Tensor& query, const Tensor& key, const Tensor& value,
                  const ParameterSet& params, const std::string& prefix, std::size_t heads,
                  const std::vector<bool>& key_valid = {}, bool causal = false,
                  std::vector<std::vector<Scalar>>* weights_out = nullptr);

struct EncoderOutput {
  Tensor states;            // (len, d)
  std::vector<bool> valid;  // false at PAD positions
  std::size_t last_valid = 0;
  Tensor pooled;            // (1, d)
};

/// Keeps the last max_length ids (head truncation).
corpus::Ids truncate_head(const corpus::Ids& ids, std::size_t max_length);

/// Token + position embeddings through n_layers post-norm encoder blocks.
EncoderOutput t_enc(const corpus::Ids& ids, const ParameterSet& params, const ModelConfig& config,
                    Pooling pooling = Pooling::kLastToken);

/// Teacher-forced decoder over the whole input with a causal mask.
Tensor t_dec(const corpus::Ids& input_ids, const Tensor& memory, const ParameterSet& params,
             const ModelConfig& config);

/// Self-attention keys/values for the generated prefix plus the fixed
/// cross-attention projections of one turn's memory.
class DecoderCache {
 public:
  DecoderCache(const Tensor& memory, const ParameterSet& params, const ModelConfig& config);

  std::size_t position() const { return position_; }
  const detail::Node* memory_id() const { return memory_id_; }

 private:
  friend Tensor t_dec_step(std::size_t, const Tensor&, DecoderCache&, const ParameterSet&,
                           const ModelConfig&);
  const detail::Node* memory_id_;
  std::size_t position_ = 0;
  std::vector<Tensor> self_keys, self_values, cross_keys, cross_values;
};

/// One incremental decoding step; returns the new position's final state (1, d).
Tensor t_dec_step(std::size_t prev_token, const Tensor& memory, DecoderCache& cache,
                  const ParameterSet& params, const ModelConfig& config);

/// Local graph for CompGCN: edge e goes src[e] --rel[e]--> dst[e].
struct GcnGraph {
  std::size_t num_nodes = 0;
  std::vector<std::size_t> src, rel, dst;
};

struct GcnState {
  Tensor nodes;      // (num_nodes, d)
  Tensor relations;  // (num local relations, d)
  Tensor loop;       // (1, d) self-loop relation
};

/// Runs `layers` CompGCN layers: per node, the self-loop message plus
/// degree-normalised incoming (W_in) and outgoing (W_out) messages of
/// phi(neighbour, relation), then tanh; relations go through W_rel.
GcnState compgcn_layers(const GcnGraph& graph, GcnState state, const ParameterSet& params,
                        std::size_t layers, Composition composition);

struct TripleEncoding {
  Tensor heads, relations, tails;  // (k, d) each, aligned with the batch
};

/// Builds the batch subgraph, seeds nodes with token embeddings and
/// relations with the relation table, and encodes. Empty batch -> nullopt.
std::optional<TripleEncoding> compgcn_encode(const ckg::TripleBatch& batch,
                                             const ParameterSet& params,
                                             const ModelConfig& config);

}  // namespace dmkcm::neural
