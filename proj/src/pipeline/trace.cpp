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

#include "dmkcm/pipeline/trace.hpp"

#include <algorithm>
#include <cstdio>
#include <sstream>

namespace dmkcm::pipeline {

namespace {

nlohmann::json scored(const std::vector<ScoredToken>& list) {
  auto out = nlohmann::json::array();
  for (const auto& s : list) out.push_back({{"token", s.token}, {"p", s.p}});
  return out;
}

std::string fixed3(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.3f", v);
  return buf;
}

}  // namespace

nlohmann::json to_json(const IntrospectionTrace& trace) {
  nlohmann::json j;
  j["turn_index"] = trace.turn_index;
  j["user_utterance"] = trace.user_utterance;
  j["response"] = trace.response;
  auto candidates = nlohmann::json::array();
  for (const auto& c : trace.candidates) {
    candidates.push_back({{"doc_id", c.doc_id}, {"title", c.title}, {"score", c.score}});
  }
  j["candidates"] = candidates;
  auto first_hop = nlohmann::json::array();
  for (const auto& d : trace.first_hop) {
    first_hop.push_back({{"doc_id", d.doc_id},
                         {"title", d.title},
                         {"filtering_score", d.filtering_score},
                         {"retrieval_rank", d.retrieval_rank},
                         {"retrieval_score", d.retrieval_score}});
  }
  j["first_hop"] = first_hop;
  j["first_hop_empty"] = trace.first_hop_empty;
  if (trace.memory_attention) {
    const auto& m = *trace.memory_attention;
    auto slots = nlohmann::json::array();
    for (const auto& s : m.slots) {
      slots.push_back({{"turn_index", s.turn_index}, {"doc_id", s.doc_id}, {"title", s.title}});
    }
    j["memory_attention"] = {
        {"query_tokens", m.query_tokens}, {"slots", slots}, {"weights", m.weights}};
  }
  j["mu"] = trace.mu;
  auto second_hop = nlohmann::json::array();
  for (const auto& t : trace.second_hop) {
    second_hop.push_back({{"head", t.head},
                          {"relation", t.relation},
                          {"tail", t.tail},
                          {"source", t.source},
                          {"beta", t.beta}});
  }
  j["second_hop"] = second_hop;
  j["dropped_multiword_tails"] = trace.dropped_multiword_tails;
  j["beta"] = trace.beta;
  j["gamma"] = trace.gamma;
  j["g_t"] = trace.g_t;
  auto steps = nlohmann::json::array();
  for (const auto& s : trace.steps) {
    steps.push_back({{"token", s.token},
                     {"g_t", s.g_t},
                     {"source", s.source},
                     {"p_final", s.p_final},
                     {"top_vocab", scored(s.top_vocab)},
                     {"top_entities", scored(s.top_entities)}});
  }
  j["steps"] = steps;
  return j;
}

std::string summarize(const IntrospectionTrace& trace) {
  std::ostringstream out;
  out << "[turn " << trace.turn_index << "] mu=" << fixed3(trace.mu) << '\n';
  out << "  1st hop:";
  if (trace.first_hop.empty()) out << " (none)";
  for (const auto& d : trace.first_hop) out << " \"" << d.title << "\"(" << d.filtering_score << ')';
  out << '\n';
  if (trace.memory_attention) {
    out << "  memory: " << trace.memory_attention->slots.size() << " slots from earlier turns\n";
  } else {
    out << "  memory: no history yet\n";
  }
  out << "  2nd hop:";
  const std::size_t shown = std::min<std::size_t>(trace.second_hop.size(), 5);
  if (shown == 0) out << " (none)";
  for (std::size_t i = 0; i < shown; ++i) {
    const auto& t = trace.second_hop[i];
    out << ' ' << t.head << " -" << t.relation << "-> " << t.tail << " (" << fixed3(t.beta) << ')';
  }
  if (trace.second_hop.size() > shown) out << " ... +" << trace.second_hop.size() - shown;
  out << "\n  gates:";
  for (const auto& s : trace.steps) {
    out << ' ' << s.token << '[' << fixed3(s.g_t) << (s.source == "entity" ? ",K" : "") << ']';
  }
  out << '\n';
  return out.str();
}

}  // namespace dmkcm::pipeline
