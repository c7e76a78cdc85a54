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

#include <deque>
#include <optional>
#include <string>
#include <vector>

#include "dmkcm/neural/layers.hpp"
#include "dmkcm/vkb/vkb.hpp"

// Knowledge fusion: the history memory with delayed update, the gated
// selector, triple attention and the vocabulary/entity controller.
namespace dmkcm::fusion {

struct MemoryEntry {
  std::size_t turn_index = 0;
  Tensor h_v;  // (T, d), detached; zero rows when retrieval found nothing
  std::vector<vkb::DocId> doc_ids;
};

/// Slot k of the flattened memory: which stored turn and document it came from.
struct SlotLabel {
  std::size_t turn_index;
  vkb::DocId doc_id;
};

/// Per-conversation store of earlier first-hop encodings. A turn's H_V is
/// added only after that turn's selector ran, so turn n reads 1..n-1.
class MemoryBank {
 public:
  explicit MemoryBank(std::string conversation_id = {}, std::size_t window = 8);

  /// Appends turn n. Turn indices must strictly increase; the oldest
  /// entries beyond the window are evicted.
  void update(std::size_t turn_index, const Tensor& h_v, std::vector<vkb::DocId> doc_ids);
  void clear();

  const std::string& conversation_id() const { return conversation_id_; }
  std::size_t window() const { return window_; }
  const std::deque<MemoryEntry>& entries() const { return entries_; }
  std::vector<std::size_t> turns() const;
  std::size_t slot_count() const;
  std::vector<SlotLabel> slots() const;
  /// All stored rows stacked in turn order, (slot_count, d).
  Tensor flattened() const;

 private:
  std::string conversation_id_;
  std::size_t window_;
  std::deque<MemoryEntry> entries_;
};

struct MemoryRead {
  Tensor h_m;                                 // (len(h_p), d)
  Tensor alpha;                               // (len(h_p), slots), rows sum to 1
  std::vector<SlotLabel> slots;
};

/// Additive attention from every token of h_p over every stored slot,
/// normalised across all slots of all stored turns.
MemoryRead memory_attend(const MemoryBank& bank, const Tensor& h_p, const ParameterSet& params);

struct MergeOutput {
  Tensor a_v;
  std::optional<Tensor> a_m;
  Tensor mu;  // (1, 1)
  Tensor a_merge;
  bool empty_first_hop = false;
};

struct MergeOptions {
  /// Replaces the learned gate with a constant (tests and inspection).
  std::optional<Scalar> mu_override;
};

/// mu * A_V + h_e without history, mu * A_V + (1 - mu) * A_M + h_e with it.
Tensor merge_gate(const Tensor& mu, const Tensor& a_v, const std::optional<Tensor>& a_m,
                  const Tensor& h_e);

/// Attends h_e over H_V (and over h_m from turn 2 on), computes the scalar
/// gate from pooled_e and merges. `history` selects the second branch; at
/// turn 1 it must be false. With history but no h_m, A_M is a zero sequence.
MergeOutput select_merge(const Tensor& h_e, const Tensor& pooled_e, const Tensor& h_v,
                         const std::optional<Tensor>& h_m, const ParameterSet& params,
                         const neural::ModelConfig& config, std::size_t turn_index, bool history,
                         const MergeOptions& options = {});

struct TripleAttention {
  Tensor beta;      // (1, k)
  Tensor h_kc;      // (1, d) = sum_i beta_i h_kt_i
  Tensor weighted;  // (k, d), row i = beta_i h_kt_i
};

TripleAttention triple_attend(const neural::TripleEncoding& encoding, const Tensor& pooled_e);

struct ControllerOutput {
  Tensor final_dist;            // (steps, V)
  Tensor p_v;                   // (steps, V)
  std::optional<Tensor> gamma;  // (steps, k)
  Tensor gate;                  // (steps, 1)
};

struct ControllerOptions {
  std::optional<Scalar> force_gate;
};

/// Mixes softmax(h_d W_v + b_v) with the entity distribution gamma scattered
/// onto the tail tokens. Without triples the output is P_v and the gate is 1.
ControllerOutput controller_mix(const Tensor& h_d, const TripleAttention* triples,
                                const std::vector<std::size_t>& tail_ids,
                                const ParameterSet& params, const ControllerOptions& options = {});

}  // namespace dmkcm::fusion
