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

#include "dmkcm/eval/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>

namespace dmkcm::eval {

namespace {

using Gram = std::vector<std::string>;

std::map<Gram, std::size_t> ngram_counts(const corpus::Tokens& tokens, std::size_t m) {
  std::map<Gram, std::size_t> out;
  if (tokens.size() < m) return out;
  for (std::size_t i = 0; i + m <= tokens.size(); ++i) {
    ++out[Gram(tokens.begin() + static_cast<std::ptrdiff_t>(i),
               tokens.begin() + static_cast<std::ptrdiff_t>(i + m))];
  }
  return out;
}

void check_order(std::size_t n) {
  if (n < 1 || n > 4) throw ContractError("bleu: n must be in 1..4, got " + std::to_string(n));
}

struct BleuStats {
  std::array<std::size_t, 4> matched{};
  std::array<std::size_t, 4> total{};
  std::size_t candidate_length = 0;
  std::size_t reference_length = 0;

  void add(const corpus::Tokens& cand, const corpus::Tokens& ref, std::size_t n) {
    candidate_length += cand.size();
    reference_length += ref.size();
    for (std::size_t m = 1; m <= n; ++m) {
      auto c = ngram_counts(cand, m);
      auto r = ngram_counts(ref, m);
      for (const auto& [gram, count] : c) {
        auto it = r.find(gram);
        matched[m - 1] += std::min(count, it == r.end() ? std::size_t{0} : it->second);
        total[m - 1] += count;
      }
    }
  }

  double score(std::size_t n) const {
    if (candidate_length == 0) return 0.0;
    double log_sum = 0;
    for (std::size_t m = 0; m < n; ++m) {
      if (matched[m] == 0 || total[m] == 0) return 0.0;
      log_sum += std::log(static_cast<double>(matched[m]) / static_cast<double>(total[m]));
    }
    const double c = static_cast<double>(candidate_length);
    const double r = static_cast<double>(reference_length);
    const double bp = c >= r ? 1.0 : std::exp(1.0 - r / c);
    return bp * std::exp(log_sum / static_cast<double>(n));
  }
};

corpus::Tokens tokens_of(const std::string& text) { return corpus::tokenize(text); }

}  // namespace

double bleu_n(const corpus::Tokens& candidate, const corpus::Tokens& reference, std::size_t n) {
  check_order(n);
  BleuStats s;
  s.add(candidate, reference, n);
  return s.score(n);
}

double corpus_bleu(const std::vector<corpus::Tokens>& candidates,
                   const std::vector<corpus::Tokens>& references, std::size_t n) {
  check_order(n);
  if (candidates.size() != references.size()) {
    throw ContractError("corpus_bleu: candidate and reference counts differ");
  }
  BleuStats s;
  for (std::size_t i = 0; i < candidates.size(); ++i) s.add(candidates[i], references[i], n);
  return s.score(n);
}

double distinct_n(const std::vector<corpus::Tokens>& responses, std::size_t n) {
  if (n < 1) throw ContractError("distinct_n: n must be >= 1");
  std::set<Gram> distinct;
  std::size_t total = 0;
  for (const auto& r : responses) {
    for (const auto& [gram, count] : ngram_counts(r, n)) {
      distinct.insert(gram);
      total += count;
    }
  }
  return total == 0 ? 0.0 : static_cast<double>(distinct.size()) / static_cast<double>(total);
}

double perplexity_from_nll(double total_nll, std::size_t tokens) {
  if (tokens == 0) throw ContractError("perplexity: no tokens");
  return std::exp(total_nll / static_cast<double>(tokens));
}

nlohmann::json EvalReport::to_json() const {
  nlohmann::json j;
  j["ppl"] = ppl;
  j["bleu"] = {{"1", bleu[0]}, {"2", bleu[1]}, {"3", bleu[2]}, {"4", bleu[3]}};
  j["dist1"] = dist1;
  j["dist2"] = dist2;
  j["n_samples"] = n_samples;
  j["n_tokens"] = n_tokens;
  j["decode"] = {{"strategy", decode.top_k == 0 ? "greedy" : "top_k"},
                 {"top_k", decode.top_k},
                 {"max_tokens", decode.max_tokens},
                 {"seed", decode.seed}};
  j["predictions"] = predictions;
  return j;
}

namespace {

struct Pass {
  double total_nll = 0;
  std::size_t tokens = 0;
  std::vector<corpus::Tokens> predictions;
};

Pass evaluate_pass(const pipeline::DialogueModel& model,
                   const std::vector<corpus::DialogueUnit>& units,
                   const pipeline::DecodeSettings* settings) {
  if (units.empty()) throw ContractError("evaluation: empty unit set");
  NoGradGuard no_grad;
  Pass pass;
  fusion::MemoryBank bank({}, model.config().memory_window);
  for (const auto& unit : units) {
    if (unit.turn_index == 1 || bank.conversation_id() != unit.conversation_id) {
      bank = fusion::MemoryBank(unit.conversation_id, model.config().memory_window);
    }
    auto knowledge = model.prepare(pipeline::TurnRequest::from_unit(unit));
    auto fwd = model.forward(knowledge, bank);
    auto tf = model.teacher_forcing(unit.gold_response);
    auto loss = model.loss(fwd, knowledge, unit.gold_response);
    pass.total_nll += loss.item() * static_cast<double>(tf.target.size());
    pass.tokens += tf.target.size();
    if (settings) pass.predictions.push_back(model.generate(knowledge, fwd, *settings).response_tokens);
    model.commit(bank, knowledge, fwd);
  }
  return pass;
}

}  // namespace

double perplexity(const pipeline::DialogueModel& model,
                  const std::vector<corpus::DialogueUnit>& units) {
  auto pass = evaluate_pass(model, units, nullptr);
  return perplexity_from_nll(pass.total_nll, pass.tokens);
}

EvalReport run_eval(const pipeline::DialogueModel& model,
                    const std::vector<corpus::DialogueUnit>& units,
                    const pipeline::DecodeSettings& settings) {
  auto pass = evaluate_pass(model, units, &settings);
  EvalReport report;
  report.ppl = perplexity_from_nll(pass.total_nll, pass.tokens);
  std::vector<corpus::Tokens> references;
  for (const auto& u : units) references.push_back(tokens_of(u.gold_response));
  for (std::size_t n = 1; n <= 4; ++n) report.bleu[n - 1] = corpus_bleu(pass.predictions, references, n);
  report.dist1 = distinct_n(pass.predictions, 1);
  report.dist2 = distinct_n(pass.predictions, 2);
  report.n_samples = units.size();
  report.n_tokens = pass.tokens;
  report.decode = settings;
  for (const auto& p : pass.predictions) {
    std::string s;
    for (std::size_t i = 0; i < p.size(); ++i) s += (i ? " " : "") + p[i];
    report.predictions.push_back(s);
  }
  return report;
}

void write_report(const std::filesystem::path& path, const EvalReport& report) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << report.to_json().dump(2) << '\n';
}

}  // namespace dmkcm::eval
