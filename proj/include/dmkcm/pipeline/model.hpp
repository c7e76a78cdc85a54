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

#include <cstdint>
#include <filesystem>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "dmkcm/ckg/ckg.hpp"
#include "dmkcm/corpus/corpus.hpp"
#include "dmkcm/fusion/fusion.hpp"
#include "dmkcm/neural/config.hpp"
#include "dmkcm/neural/layers.hpp"
#include "dmkcm/pipeline/trace.hpp"
#include "dmkcm/vkb/vkb.hpp"

// The full turn pipeline: retrieval and expansion, encoding, memory read,
// gated merge, triple encoding, decoding with the controller, and the
// delayed memory write.
namespace dmkcm::pipeline {

struct KnowledgeStores {
  vkb::VkbIndex index;
  ckg::ConceptGraph graph;

  const corpus::StopwordSet& stopwords() const { return index.stopwords(); }

  /// Reads `<vkb_dir>/vkb.bin` and `<ckg_dir>/graph.tsv`.
  static std::shared_ptr<const KnowledgeStores> load(const std::filesystem::path& vkb_dir,
                                                     const std::filesystem::path& ckg_dir);
};

/// Shared vocabulary over dialogue turns and story bodies.
corpus::Vocab build_vocab(const std::vector<corpus::Conversation>& conversations,
                          const KnowledgeStores& stores, std::size_t min_count = 2,
                          bool include_persona = false);

struct TurnRequest {
  std::size_t turn_index = 1;
  std::vector<std::string> context_turns;
  std::string user_utterance;

  static TurnRequest from_unit(const corpus::DialogueUnit& unit);
};

/// Everything about a turn that does not depend on trainable parameters.
struct TurnKnowledge {
  std::size_t turn_index = 1;
  corpus::Tokens post_tokens;
  corpus::Tokens context_tokens;
  corpus::Ids post_ids;      // X
  corpus::Ids dialogue_ids;  // [C, X], head-truncated
  vkb::CandidateSet retrieval;
  std::vector<corpus::Ids> document_ids;  // one per first-hop document
  ckg::TripleBatch triples;
};

/// Differentiable state of one turn up to the decoder memory.
struct TurnForward {
  neural::EncoderOutput post;
  neural::EncoderOutput dialogue;
  Tensor h_v;  // (|K_V|, d), possibly zero rows
  std::optional<fusion::MemoryRead> memory;
  fusion::MergeOutput merge;
  std::optional<neural::TripleEncoding> encoding;
  std::optional<fusion::TripleAttention> attention;
};

struct DecodeSettings {
  std::size_t max_tokens = 32;
  std::size_t top_k = 0;  // 0 = greedy
  std::uint64_t seed = 7;
  std::optional<Scalar> force_gate;
  std::optional<Scalar> mu_override;
};

struct TurnResult {
  corpus::Tokens response_tokens;
  std::string response;
  IntrospectionTrace trace;
};

/// Teacher-forced decoder input [BOS, y...] and targets [y..., EOS].
struct TeacherForcing {
  corpus::Ids input;
  corpus::Ids target;
};

class DialogueModel {
 public:
  DialogueModel(neural::ModelConfig config, ParameterSet params, corpus::Vocab vocab,
                std::shared_ptr<const KnowledgeStores> stores);

  /// Fresh parameters for a vocabulary and stores; num_relations and
  /// vocab_size are taken from them.
  static DialogueModel initialize(neural::ModelConfig config, corpus::Vocab vocab,
                                  std::shared_ptr<const KnowledgeStores> stores,
                                  std::uint64_t seed);

  const neural::ModelConfig& config() const { return config_; }
  const corpus::Vocab& vocab() const { return vocab_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& mutable_params() { return params_; }
  const KnowledgeStores& stores() const { return *stores_; }
  std::shared_ptr<const KnowledgeStores> shared_stores() const { return stores_; }

  TurnKnowledge prepare(const TurnRequest& request) const;

  /// Runs encoders, memory read (turn > 1 and memory enabled), selector and
  /// triple encoding. The bank is never read at turn 1.
  TurnForward forward(const TurnKnowledge& knowledge, const fusion::MemoryBank& bank,
                      const fusion::MergeOptions& merge = {}) const;

  TeacherForcing teacher_forcing(const std::string& response) const;

  /// Controller distributions for every teacher-forced step.
  fusion::ControllerOutput decode_teacher_forced(const TurnForward& forward,
                                                 const TurnKnowledge& knowledge,
                                                 const corpus::Ids& decoder_input,
                                                 const fusion::ControllerOptions& options = {}) const;

  /// Mean token NLL of the gold response.
  Tensor loss(const TurnForward& forward, const TurnKnowledge& knowledge,
              const std::string& gold_response) const;

  /// Writes this turn's H_V into the bank (after the selector ran).
  void commit(fusion::MemoryBank& bank, const TurnKnowledge& knowledge,
              const TurnForward& forward) const;

  /// Decodes a response for an already computed forward pass.
  TurnResult generate(const TurnKnowledge& knowledge, const TurnForward& forward,
                      const DecodeSettings& settings) const;

  /// prepare, forward, generate and commit, without recording gradients.
  TurnResult respond(const TurnRequest& request, fusion::MemoryBank& bank,
                     const DecodeSettings& settings = {}) const;

  /// Writes model.ckpt, model.config and vocab.txt into dir.
  void save(const std::filesystem::path& dir) const;
  /// Loads from a checkpoint file whose directory holds model.config and
  /// vocab.txt. Shape or name mismatches raise CheckpointError.
  static DialogueModel load(const std::filesystem::path& checkpoint,
                            std::shared_ptr<const KnowledgeStores> stores);

 private:
  IntrospectionTrace make_trace(const TurnKnowledge& knowledge, const TurnForward& forward) const;

  neural::ModelConfig config_;
  ParameterSet params_;
  corpus::Vocab vocab_;
  std::shared_ptr<const KnowledgeStores> stores_;
};

}  // namespace dmkcm::pipeline
