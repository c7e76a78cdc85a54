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

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "dmkcm/corpus/corpus.hpp"
#include "dmkcm/pipeline/model.hpp"

namespace dmkcm::eval {

/// BLEU of one candidate against one reference (uniform weights over
/// 1..n-grams, brevity penalty, no smoothing). Empty candidate -> 0.
double bleu_n(const corpus::Tokens& candidate, const corpus::Tokens& reference, std::size_t n);

/// Corpus-level BLEU: clipped counts and lengths summed over all pairs
/// before the precisions and brevity penalty are formed.
double corpus_bleu(const std::vector<corpus::Tokens>& candidates,
                   const std::vector<corpus::Tokens>& references, std::size_t n);

/// Distinct n-grams over total n-grams, pooled across responses; 0 when
/// there are no n-grams.
double distinct_n(const std::vector<corpus::Tokens>& responses, std::size_t n);

/// exp of the mean of per-token negative log-likelihoods.
double perplexity_from_nll(double total_nll, std::size_t tokens);

struct EvalReport {
  double ppl = 0;
  std::array<double, 4> bleu{};
  double dist1 = 0;
  double dist2 = 0;
  std::size_t n_samples = 0;
  std::size_t n_tokens = 0;
  pipeline::DecodeSettings decode;
  std::vector<std::string> predictions;

  nlohmann::json to_json() const;
};

/// Teacher-forced perplexity over the units, memory carried per
/// conversation in file order.
double perplexity(const pipeline::DialogueModel& model,
                  const std::vector<corpus::DialogueUnit>& units);

/// Decodes every unit with the full pipeline and scores against the gold
/// responses; perplexity is computed in the same pass.
EvalReport run_eval(const pipeline::DialogueModel& model,
                    const std::vector<corpus::DialogueUnit>& units,
                    const pipeline::DecodeSettings& settings = {});

void write_report(const std::filesystem::path& path, const EvalReport& report);

}  // namespace dmkcm::eval
