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

#include "dmkcm/pipeline/model.hpp"

#include <algorithm>
#include <map>
#include <numeric>

#include "dmkcm/training/objective.hpp"

namespace dmkcm::pipeline {

namespace {

constexpr std::size_t kTraceTop = 3;

std::vector<double> row_values(const Tensor& t, std::size_t r) {
  std::vector<double> out(t.cols());
  for (std::size_t c = 0; c < t.cols(); ++c) out[c] = t.at(r, c);
  return out;
}

// Indices of the largest values, ties to the lower index.
std::vector<std::size_t> top_indices(const std::vector<double>& values, std::size_t k) {
  std::vector<std::size_t> idx(values.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::min(k, idx.size());
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::size_t a, std::size_t b) {
                      return values[a] != values[b] ? values[a] > values[b] : a < b;
                    });
  idx.resize(k);
  return idx;
}

bool selectable(std::size_t id) { return id != corpus::Vocab::kPad && id != corpus::Vocab::kBos; }

}  // namespace

std::shared_ptr<const KnowledgeStores> KnowledgeStores::load(const std::filesystem::path& vkb_dir,
                                                             const std::filesystem::path& ckg_dir) {
  return std::make_shared<const KnowledgeStores>(KnowledgeStores{
      vkb::VkbIndex::load(vkb_dir / "vkb.bin"), ckg::load_graph(ckg_dir / "graph.tsv")});
}

corpus::Vocab build_vocab(const std::vector<corpus::Conversation>& conversations,
                          const KnowledgeStores& stores, std::size_t min_count,
                          bool include_persona) {
  auto sequences = corpus::conversation_token_sequences(conversations, include_persona);
  for (const auto& doc : stores.index.docs()) sequences.push_back(doc.body_tokens);
  return corpus::Vocab::build(sequences, min_count);
}

TurnRequest TurnRequest::from_unit(const corpus::DialogueUnit& unit) {
  return TurnRequest{unit.turn_index, unit.context_turns, unit.user_utterance};
}

DialogueModel::DialogueModel(neural::ModelConfig config, ParameterSet params, corpus::Vocab vocab,
                             std::shared_ptr<const KnowledgeStores> stores)
    : config_(std::move(config)),
      params_(std::move(params)),
      vocab_(std::move(vocab)),
      stores_(std::move(stores)) {
  if (!stores_) throw ContractError("DialogueModel: knowledge stores are required");
  config_.validate();
  if (config_.vocab_size != vocab_.size()) {
    throw ContractError("DialogueModel: config vocab_size " + std::to_string(config_.vocab_size) +
                        " differs from vocabulary size " + std::to_string(vocab_.size()));
  }
  if (config_.num_relations != stores_->graph.relations().size()) {
    throw ContractError("DialogueModel: config num_relations " +
                        std::to_string(config_.num_relations) + " differs from graph's " +
                        std::to_string(stores_->graph.relations().size()));
  }
}

DialogueModel DialogueModel::initialize(neural::ModelConfig config, corpus::Vocab vocab,
                                        std::shared_ptr<const KnowledgeStores> stores,
                                        std::uint64_t seed) {
  if (!stores) throw ContractError("DialogueModel: knowledge stores are required");
  if (stores->graph.relations().empty()) {
    throw ContractError("DialogueModel: the commonsense graph has no relations");
  }
  config.vocab_size = vocab.size();
  config.num_relations = stores->graph.relations().size();
  Rng rng(seed);
  auto params = neural::init_parameters(config, rng);
  return DialogueModel(config, std::move(params), std::move(vocab), std::move(stores));
}

TurnKnowledge DialogueModel::prepare(const TurnRequest& request) const {
  if (request.turn_index == 0) throw ContractError("prepare: turn indices are 1-based");
  TurnKnowledge k;
  k.turn_index = request.turn_index;
  k.post_tokens = corpus::tokenize(request.user_utterance);
  if (k.post_tokens.empty()) throw ContractError("prepare: empty user utterance");
  for (const auto& turn : request.context_turns) {
    auto t = corpus::tokenize(turn);
    k.context_tokens.insert(k.context_tokens.end(), t.begin(), t.end());
  }
  k.post_ids = neural::truncate_head(vocab_.encode(k.post_tokens), config_.max_length);
  auto dialogue = vocab_.encode(k.context_tokens);
  auto post = vocab_.encode(k.post_tokens);
  dialogue.insert(dialogue.end(), post.begin(), post.end());
  k.dialogue_ids = neural::truncate_head(dialogue, config_.max_length);

  const auto& index = stores_->index;
  const auto& stopwords = stores_->stopwords();
  k.retrieval.query = k.post_tokens;
  corpus::Tokens first_hop_tokens;
  if (config_.use_first_hop) {
    k.retrieval.candidates = index.retrieve_candidates(k.post_tokens, config_.candidate_cap);
    auto expanded = ckg::expand_related_words(stores_->graph, k.post_tokens, stopwords);
    k.retrieval.first_hop = vkb::filter_candidates(
        index, k.retrieval.candidates, expanded, config_.filtered_docs,
        config_.distinct_type_filter ? vkb::FilterMode::kDistinctTypes
                                     : vkb::FilterMode::kOccurrences);
    for (const auto& d : k.retrieval.first_hop) {
      const auto& body = index.doc(d.doc_id).body_tokens;
      auto ids = vocab_.encode(body);
      if (ids.size() > config_.max_length) ids.resize(config_.max_length);
      k.document_ids.push_back(std::move(ids));
      first_hop_tokens.insert(first_hop_tokens.end(), body.begin(), body.end());
    }
  }
  if (config_.use_second_hop) {
    ckg::ExpansionSources sources{k.post_tokens, k.context_tokens, first_hop_tokens};
    k.triples = ckg::expand_triples(stores_->graph, sources, vocab_,
                                    {config_.top_neighbors, config_.triple_cap}, stopwords);
  }
  return k;
}

TurnForward DialogueModel::forward(const TurnKnowledge& knowledge, const fusion::MemoryBank& bank,
                                   const fusion::MergeOptions& merge) const {
  TurnForward f;
  f.post = neural::t_enc(knowledge.post_ids, params_, config_);
  f.dialogue = neural::t_enc(knowledge.dialogue_ids, params_, config_);
  if (knowledge.document_ids.empty()) {
    f.h_v = Tensor::zeros({0, config_.d_model});
  } else {
    std::vector<Tensor> rows;
    for (const auto& ids : knowledge.document_ids) {
      if (ids.empty()) throw ContractError("forward: empty first-hop document");
      rows.push_back(neural::t_enc(ids, params_, config_, config_.doc_pooling).pooled);
    }
    f.h_v = rows.size() == 1 ? rows.front() : ops::concat_rows(rows);
  }
  const std::size_t n = knowledge.turn_index;
  const bool history = n > 1 && config_.use_memory;
  if (history) {
    if (!bank.entries().empty() && bank.entries().back().turn_index >= n) {
      throw ContractError("forward: memory already holds turn " +
                          std::to_string(bank.entries().back().turn_index) + " while reading turn " +
                          std::to_string(n));
    }
    if (bank.slot_count() > 0) f.memory = fusion::memory_attend(bank, f.post.states, params_);
  }
  std::optional<Tensor> h_m;
  if (f.memory) h_m = f.memory->h_m;
  f.merge = fusion::select_merge(f.dialogue.states, f.dialogue.pooled, f.h_v, h_m, params_, config_,
                                 n, history, merge);
  f.encoding = neural::compgcn_encode(knowledge.triples, params_, config_);
  if (f.encoding) f.attention = fusion::triple_attend(*f.encoding, f.dialogue.pooled);
  return f;
}

TeacherForcing DialogueModel::teacher_forcing(const std::string& response) const {
  auto ids = vocab_.encode(corpus::tokenize(response));
  if (ids.size() + 1 > config_.max_length) ids.resize(config_.max_length - 1);
  TeacherForcing tf;
  tf.input.push_back(corpus::Vocab::kBos);
  tf.input.insert(tf.input.end(), ids.begin(), ids.end());
  tf.target = ids;
  tf.target.push_back(corpus::Vocab::kEos);
  return tf;
}

fusion::ControllerOutput DialogueModel::decode_teacher_forced(
    const TurnForward& forward, const TurnKnowledge& knowledge, const corpus::Ids& decoder_input,
    const fusion::ControllerOptions& options) const {
  auto h_d = neural::t_dec(decoder_input, forward.merge.a_merge, params_, config_);
  return fusion::controller_mix(h_d, forward.attention ? &*forward.attention : nullptr,
                                knowledge.triples.tail_ids, params_, options);
}

Tensor DialogueModel::loss(const TurnForward& forward, const TurnKnowledge& knowledge,
                           const std::string& gold_response) const {
  auto tf = teacher_forcing(gold_response);
  auto out = decode_teacher_forced(forward, knowledge, tf.input);
  return training::nll_loss(out.final_dist, tf.target);
}

void DialogueModel::commit(fusion::MemoryBank& bank, const TurnKnowledge& knowledge,
                           const TurnForward& forward) const {
  std::vector<vkb::DocId> ids;
  for (const auto& d : knowledge.retrieval.first_hop) ids.push_back(d.doc_id);
  bank.update(knowledge.turn_index, forward.h_v, std::move(ids));
}

IntrospectionTrace DialogueModel::make_trace(const TurnKnowledge& knowledge,
                                             const TurnForward& forward) const {
  const auto& index = stores_->index;
  IntrospectionTrace t;
  t.turn_index = knowledge.turn_index;
  for (const auto& c : knowledge.retrieval.candidates) {
    t.candidates.push_back({c.doc_id, index.doc(c.doc_id).title, c.score});
  }
  for (const auto& d : knowledge.retrieval.first_hop) {
    t.first_hop.push_back({d.doc_id, index.doc(d.doc_id).title, d.filtering_score,
                           d.retrieval_rank, d.retrieval_score});
  }
  t.first_hop_empty = forward.merge.empty_first_hop;
  if (forward.memory) {
    MemoryAttentionTrace m;
    m.query_tokens = vocab_.decode(knowledge.post_ids);
    for (const auto& s : forward.memory->slots) {
      m.slots.push_back({s.turn_index, s.doc_id, index.doc(s.doc_id).title});
    }
    for (std::size_t r = 0; r < forward.memory->alpha.rows(); ++r) {
      m.weights.push_back(row_values(forward.memory->alpha, r));
    }
    t.memory_attention = std::move(m);
  }
  t.mu = forward.merge.mu.item();
  t.dropped_multiword_tails = knowledge.triples.dropped_multiword;
  if (forward.attention) t.beta = row_values(forward.attention->beta, 0);
  for (std::size_t i = 0; i < knowledge.triples.size(); ++i) {
    const auto& tr = knowledge.triples.triples[i];
    t.second_hop.push_back({tr.head, tr.relation, tr.tail,
                            ckg::source_name(knowledge.triples.sources[i]),
                            t.beta.empty() ? 0.0 : t.beta[i]});
  }
  return t;
}

TurnResult DialogueModel::generate(const TurnKnowledge& knowledge, const TurnForward& forward,
                                   const DecodeSettings& settings) const {
  NoGradGuard no_grad;
  TurnResult result;
  result.trace = make_trace(knowledge, forward);
  const auto& memory = forward.merge.a_merge;
  neural::DecoderCache cache(memory, params_, config_);
  Rng rng(settings.seed ^ (0x9e3779b97f4a7c15ULL * knowledge.turn_index));
  std::size_t prev = corpus::Vocab::kBos;
  const auto* attention = forward.attention ? &*forward.attention : nullptr;
  const auto& tails = knowledge.triples.tail_ids;
  fusion::ControllerOptions copts{settings.force_gate};
  for (std::size_t step = 0; step < settings.max_tokens; ++step) {
    auto h_d = neural::t_dec_step(prev, memory, cache, params_, config_);
    auto out = fusion::controller_mix(h_d, attention, tails, params_, copts);
    const auto final_dist = row_values(out.final_dist, 0);
    std::size_t chosen = 0;
    if (settings.top_k == 0) {
      double best = -1;
      for (std::size_t w = 0; w < final_dist.size(); ++w) {
        if (selectable(w) && final_dist[w] > best) {
          best = final_dist[w];
          chosen = w;
        }
      }
    } else {
      std::vector<double> masked = final_dist;
      for (std::size_t w = 0; w < masked.size(); ++w) {
        if (!selectable(w)) masked[w] = 0;
      }
      auto top = top_indices(masked, settings.top_k);
      while (!top.empty() && masked[top.back()] <= 0) top.pop_back();
      if (top.empty()) throw NumericError("generate: no token has positive probability");
      double total = 0;
      for (auto w : top) total += masked[w];
      double u = rng.uniform01() * total;
      chosen = top.back();
      for (auto w : top) {
        if (u < masked[w]) {
          chosen = w;
          break;
        }
        u -= masked[w];
      }
    }
    const double g = out.gate.item();
    result.trace.g_t.push_back(g);
    StepTrace st;
    st.token = vocab_.token(chosen);
    st.g_t = g;
    st.p_final = final_dist[chosen];
    const auto p_v = row_values(out.p_v, 0);
    for (auto w : top_indices(p_v, kTraceTop)) st.top_vocab.push_back({vocab_.token(w), p_v[w]});
    double entity_mass = 0;
    if (out.gamma) {
      const auto gamma = row_values(*out.gamma, 0);
      result.trace.gamma.push_back(gamma);
      std::map<std::size_t, double> per_tail;
      for (std::size_t i = 0; i < gamma.size(); ++i) per_tail[tails[i]] += gamma[i];
      std::vector<std::pair<std::size_t, double>> ranked(per_tail.begin(), per_tail.end());
      std::stable_sort(ranked.begin(), ranked.end(),
                       [](const auto& a, const auto& b) { return a.second > b.second; });
      for (std::size_t i = 0; i < std::min(kTraceTop, ranked.size()); ++i) {
        st.top_entities.push_back({vocab_.token(ranked[i].first), ranked[i].second});
      }
      if (auto it = per_tail.find(chosen); it != per_tail.end()) entity_mass = it->second;
    } else {
      result.trace.gamma.emplace_back();
    }
    st.source = (1 - g) * entity_mass > g * p_v[chosen] ? "entity" : "vocab";
    result.trace.steps.push_back(std::move(st));
    if (chosen == corpus::Vocab::kEos) break;
    result.response_tokens.push_back(vocab_.token(chosen));
    prev = chosen;
  }
  for (std::size_t i = 0; i < result.response_tokens.size(); ++i) {
    if (i > 0) result.response += ' ';
    result.response += result.response_tokens[i];
  }
  result.trace.response = result.response;
  return result;
}

TurnResult DialogueModel::respond(const TurnRequest& request, fusion::MemoryBank& bank,
                                  const DecodeSettings& settings) const {
  NoGradGuard no_grad;
  auto knowledge = prepare(request);
  auto fwd = forward(knowledge, bank, fusion::MergeOptions{settings.mu_override});
  auto result = generate(knowledge, fwd, settings);
  result.trace.user_utterance = request.user_utterance;
  commit(bank, knowledge, fwd);
  return result;
}

void DialogueModel::save(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  save_parameters(dir / "model.ckpt", params_);
  config_.save(dir / "model.config");
  vocab_.save(dir / "vocab.txt");
}

DialogueModel DialogueModel::load(const std::filesystem::path& checkpoint,
                                  std::shared_ptr<const KnowledgeStores> stores) {
  const auto dir = checkpoint.parent_path();
  neural::ModelConfig config;
  try {
    config = neural::ModelConfig::load(dir / "model.config");
  } catch (const neural::ConfigError& e) {
    throw CheckpointError(std::string("checkpoint config: ") + e.what());
  }
  auto vocab = corpus::Vocab::load(dir / "vocab.txt");
  if (vocab.size() != config.vocab_size) {
    throw CheckpointError("checkpoint: vocab.txt has " + std::to_string(vocab.size()) +
                          " entries, config expects " + std::to_string(config.vocab_size));
  }
  if (stores && stores->graph.relations().size() != config.num_relations) {
    throw CheckpointError("checkpoint: graph has " +
                          std::to_string(stores->graph.relations().size()) +
                          " relations, config expects " + std::to_string(config.num_relations));
  }
  Rng rng(0);
  auto params = neural::init_parameters(config, rng);
  load_parameters(checkpoint, params);
  return DialogueModel(config, std::move(params), std::move(vocab), std::move(stores));
}

}  // namespace dmkcm::pipeline
