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

#include "dmkcm/fusion/fusion.hpp"

namespace dmkcm::fusion {

MemoryBank::MemoryBank(std::string conversation_id, std::size_t window)
    : conversation_id_(std::move(conversation_id)), window_(window) {
  if (window_ == 0) throw ContractError("MemoryBank: window must be >= 1");
}

void MemoryBank::update(std::size_t turn_index, const Tensor& h_v,
                        std::vector<vkb::DocId> doc_ids) {
  if (turn_index == 0) throw ContractError("MemoryBank: turn indices are 1-based");
  if (!entries_.empty() && turn_index <= entries_.back().turn_index) {
    throw ContractError("MemoryBank: turn " + std::to_string(turn_index) +
                        " is not after stored turn " +
                        std::to_string(entries_.back().turn_index));
  }
  if (h_v.rows() != doc_ids.size()) {
    throw ContractError("MemoryBank: " + std::to_string(h_v.rows()) + " rows for " +
                        std::to_string(doc_ids.size()) + " documents");
  }
  entries_.push_back(MemoryEntry{turn_index, h_v.detach(), std::move(doc_ids)});
  while (entries_.size() > window_) entries_.pop_front();
}

void MemoryBank::clear() { entries_.clear(); }

std::vector<std::size_t> MemoryBank::turns() const {
  std::vector<std::size_t> out;
  for (const auto& e : entries_) out.push_back(e.turn_index);
  return out;
}

std::size_t MemoryBank::slot_count() const {
  std::size_t n = 0;
  for (const auto& e : entries_) n += e.doc_ids.size();
  return n;
}

std::vector<SlotLabel> MemoryBank::slots() const {
  std::vector<SlotLabel> out;
  for (const auto& e : entries_) {
    for (auto id : e.doc_ids) out.push_back({e.turn_index, id});
  }
  return out;
}

Tensor MemoryBank::flattened() const {
  std::vector<Tensor> parts;
  for (const auto& e : entries_) {
    if (!e.doc_ids.empty()) parts.push_back(e.h_v);
  }
  if (parts.empty()) throw ContractError("MemoryBank: no stored slots");
  return parts.size() == 1 ? parts.front() : ops::concat_rows(parts);
}

MemoryRead memory_attend(const MemoryBank& bank, const Tensor& h_p, const ParameterSet& params) {
  if (bank.slot_count() == 0) {
    throw ContractError("memory_attend: memory holds no earlier turn; use the first-turn merge");
  }
  const auto& w_h = params.get("memory.W_h");
  const std::size_t d = h_p.cols();
  if (w_h.rows() != 2 * d) throw DimensionError("memory_attend: W_h does not match state width");
  auto memory = bank.flattened();
  auto p = ops::matmul(h_p, ops::slice_rows(w_h, 0, d));
  auto q = ops::matmul(memory, ops::slice_rows(w_h, d, 2 * d));
  auto alpha = ops::softmax(ops::additive_scores(p, q, params.get("memory.V_a")), 1);
  return MemoryRead{ops::matmul(alpha, memory), alpha, bank.slots()};
}

Tensor merge_gate(const Tensor& mu, const Tensor& a_v, const std::optional<Tensor>& a_m,
                  const Tensor& h_e) {
  auto current = ops::scale_by(a_v, mu);
  if (!a_m) return ops::add(current, h_e);
  auto history = ops::scale_by(*a_m, ops::affine(mu, Scalar{-1}, Scalar{1}));
  return ops::add(ops::add(current, history), h_e);
}

MergeOutput select_merge(const Tensor& h_e, const Tensor& pooled_e, const Tensor& h_v,
                         const std::optional<Tensor>& h_m, const ParameterSet& params,
                         const neural::ModelConfig& config, std::size_t turn_index, bool history,
                         const MergeOptions& options) {
  if (turn_index == 0) throw ContractError("select_merge: turn indices are 1-based");
  if (turn_index == 1 && (h_m || history)) {
    throw ContractError("select_merge: the first turn has no history to merge");
  }
  if (h_m && !history) throw ContractError("select_merge: h_m given without the history branch");
  MergeOutput out;
  out.empty_first_hop = !h_v.defined() || h_v.rows() == 0;
  out.a_v = out.empty_first_hop
                ? Tensor::zeros({h_e.rows(), h_e.cols()})
                : neural::multi_head(h_e, h_v, h_v, params, "selector.attn_v", config.n_heads);
  if (history) {
    out.a_m = h_m ? neural::multi_head(h_e, *h_m, *h_m, params, "selector.attn_m", config.n_heads)
                  : Tensor::zeros({h_e.rows(), h_e.cols()});
  }
  out.mu = options.mu_override
               ? Tensor::full({1, 1}, *options.mu_override)
               : ops::sigmoid(ops::add_row(ops::matmul(pooled_e, params.get("selector.W_g")),
                                           params.get("selector.b_g")));
  out.a_merge = merge_gate(out.mu, out.a_v, out.a_m, h_e);
  return out;
}

TripleAttention triple_attend(const neural::TripleEncoding& encoding, const Tensor& pooled_e) {
  if (encoding.heads.rows() == 0) throw ContractError("triple_attend: no triples");
  auto scores = ops::matmul_nt(pooled_e, ops::add(encoding.heads, encoding.relations));
  auto beta = ops::softmax(scores, 1);
  return TripleAttention{beta, ops::matmul(beta, encoding.tails),
                         ops::scale_rows(encoding.tails, beta)};
}

ControllerOutput controller_mix(const Tensor& h_d, const TripleAttention* triples,
                                const std::vector<std::size_t>& tail_ids,
                                const ParameterSet& params, const ControllerOptions& options) {
  ControllerOutput out;
  const auto& w_v = params.get("controller.W_v");
  const std::size_t vocab = w_v.cols();
  out.p_v = ops::softmax(ops::add_row(ops::matmul(h_d, w_v), params.get("controller.b_v")), 1);
  if (triples == nullptr || tail_ids.empty()) {
    out.final_dist = out.p_v;
    out.gate = Tensor::full({h_d.rows(), 1}, Scalar{1});
    return out;
  }
  if (tail_ids.size() != triples->weighted.rows()) {
    throw ContractError("controller_mix: tail ids do not align with the triples");
  }
  for (auto id : tail_ids) {
    if (id >= vocab) throw ContractError("controller_mix: tail id outside the vocabulary");
  }
  auto keys = ops::matmul(h_d, params.get("controller.W_k"));
  out.gamma = ops::softmax(ops::matmul_nt(keys, triples->weighted), 1);
  auto copy = ops::scatter_add_cols(*out.gamma, tail_ids, vocab);
  if (options.force_gate) {
    out.gate = Tensor::full({h_d.rows(), 1}, *options.force_gate);
  } else {
    out.gate = ops::sigmoid(ops::add_row(ops::matmul(h_d, params.get("controller.w_gate")),
                                         params.get("controller.b_gate")));
  }
  out.final_dist = ops::add(ops::scale_rows(out.p_v, out.gate),
                            ops::scale_rows(copy, ops::affine(out.gate, Scalar{-1}, Scalar{1})));
  return out;
}

}  // namespace dmkcm::fusion
