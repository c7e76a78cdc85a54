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

#include <json.hpp>

namespace dmkcm::pipeline {

struct CandidateEntry {
  std::uint32_t doc_id;
  std::string title;
  double score;
};

struct FirstHopEntry {
  std::uint32_t doc_id;
  std::string title;
  std::size_t filtering_score;
  std::size_t retrieval_rank;
  double retrieval_score;
};

struct MemorySlotEntry {
  std::size_t turn_index;
  std::uint32_t doc_id;
  std::string title;
};

/// Attention of every user-utterance token over every stored memory slot.
struct MemoryAttentionTrace {
  std::vector<std::string> query_tokens;
  std::vector<MemorySlotEntry> slots;
  std::vector<std::vector<double>> weights;  // query_tokens x slots
};

struct SecondHopEntry {
  std::string head;
  std::string relation;
  std::string tail;
  std::string source;  // "X", "C" or "K_V"
  double beta;
};

struct ScoredToken {
  std::string token;
  double p;
};

struct StepTrace {
  std::string token;
  double g_t;
  std::string source;  // "vocab" or "entity"
  double p_final;
  std::vector<ScoredToken> top_vocab;
  std::vector<ScoredToken> top_entities;
};

/// Per-turn introspection record exposed by the CLI and the service.
struct IntrospectionTrace {
  std::size_t turn_index = 1;
  std::string user_utterance;
  std::string response;
  std::vector<CandidateEntry> candidates;
  std::vector<FirstHopEntry> first_hop;
  bool first_hop_empty = false;
  std::optional<MemoryAttentionTrace> memory_attention;
  double mu = 0;
  std::vector<SecondHopEntry> second_hop;
  std::size_t dropped_multiword_tails = 0;
  std::vector<double> beta;
  std::vector<std::vector<double>> gamma;  // per decode step, over triples
  std::vector<double> g_t;
  std::vector<StepTrace> steps;
};

nlohmann::json to_json(const IntrospectionTrace& trace);

/// One-paragraph human-readable summary for the terminal chat.
std::string summarize(const IntrospectionTrace& trace);

}  // namespace dmkcm::pipeline
