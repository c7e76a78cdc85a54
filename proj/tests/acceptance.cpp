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

// Acceptance report: one PASS/FAIL line per criterion. Exits 0 only when
// every criterion passes.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

#include "dmkcm/api/session.hpp"
#include "dmkcm/eval/metrics.hpp"
#include "dmkcm/training/trainer.hpp"
#include "support/gradcases.hpp"
#include "support/oracles.hpp"
#include "support/sweeps.hpp"

using namespace dmkcm;
using namespace dmkcm::testing;

namespace {

// Tolerances and budgets.
constexpr double kGradTolerance = 1e-4;
constexpr double kGradBudgetSeconds = 60;
constexpr std::size_t kSchedules = 1000;
constexpr double kMuOneTolerance = 1e-12;
constexpr std::size_t kMixtureCalls = 10000;
constexpr double kSumTolerance = 1e-6;
constexpr double kSoftmaxTolerance = 1e-12;
constexpr std::size_t kRetrievalCorpora = 300;
constexpr double kBleuTolerance = 1e-4;
constexpr double kDistinctTolerance = 1e-9;
constexpr double kUniformPplTolerance = 1e-9;
constexpr std::size_t kOverfitSteps = 2000;
constexpr double kOverfitBudgetSeconds = 600;
constexpr double kOverfitMaxPpl = 1.3;
constexpr double kOverfitMinBleu1 = 0.95;
constexpr std::size_t kDeterminismSteps = 200;

using Seconds = std::chrono::duration<double>;

struct Line {
  std::string name;
  bool pass;
  std::string detail;
};

std::string fmt(const char* spec, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, spec, v);
  return buf;
}

struct DeskSetup {
  neural::ModelConfig model;
  training::TrainConfig train;
};

DeskSetup desk_setup() {
  DeskSetup s;
  auto kv = neural::parse_key_values(neural::read_text_file(fixture_dir() / "train.config"));
  s.model.apply(s.train.apply(kv));
  return s;
}

struct Run {
  std::unique_ptr<pipeline::DialogueModel> model;
  std::vector<training::StepRecord> records;
  double seconds = 0;
  bool finite = true;
};

Run train_desk(const std::function<void(neural::ModelConfig&)>& modify, std::size_t steps) {
  const auto& f = fixture();
  auto setup = desk_setup();
  modify(setup.model);
  setup.train.max_steps = steps;
  Run run;
  const auto start = std::chrono::steady_clock::now();
  run.model = std::make_unique<pipeline::DialogueModel>(
      pipeline::DialogueModel::initialize(setup.model, f.vocab, f.stores, setup.train.seed));
  training::Trainer trainer(*run.model, f.units, setup.train);
  run.records = trainer.run();
  run.seconds = Seconds(std::chrono::steady_clock::now() - start).count();
  for (const auto& r : run.records) run.finite = run.finite && std::isfinite(r.loss);
  return run;
}

/// Mean loss over the last pass through the units (one step per unit).
double last_pass_mean(const Run& run, std::size_t units) {
  const std::size_t n = std::min(units, run.records.size());
  double total = 0;
  for (std::size_t i = run.records.size() - n; i < run.records.size(); ++i) total += run.records[i].loss;
  return total / static_cast<double>(n);
}

Line gradient_criterion() {
#ifdef DMKCM_FLOAT32
  return {"gradient suite", false, "requires a 64-bit build"};
#else
  const auto start = std::chrono::steady_clock::now();
  double worst = 0;
  std::string worst_layer;
  std::size_t checked = 0;
  for (const auto& c : layer_grad_cases(2026)) {
    auto r = c.run();
    checked += r.checked;
    if (r.max_relative_error >= worst) {
      worst = r.max_relative_error;
      worst_layer = c.layer + " / " + r.worst;
    }
  }
  const double seconds = Seconds(std::chrono::steady_clock::now() - start).count();
  return {"gradient suite", worst < kGradTolerance && seconds < kGradBudgetSeconds,
          std::to_string(checked) + " parameters, max relative error " + fmt("%.2e", worst) + " (" +
              worst_layer + "), " + fmt("%.2f", seconds) + " s"};
#endif
}

Line schedule_criterion() {
  auto s = algorithm1_sweep(kSchedules, 7);
  return {"memory schedule oracle", s.mismatches == 0 && s.schedules == kSchedules,
          std::to_string(s.schedules) + " schedules, " + std::to_string(s.turns) + " turns, " +
              std::to_string(s.mismatches) + " mismatches" +
              (s.first_mismatch.empty() ? "" : " (" + s.first_mismatch + ")")};
}

Line branch_criterion() {
  auto b = merge_branch_check(7);
  return {"merge branches",
          b.first_turn_bitwise_invariant && b.zeroed_history_changes_output &&
              b.max_change_at_mu_one <= kMuOneTolerance,
          std::string("turn 1 bitwise invariant over ") + std::to_string(b.first_turn_trials) +
              " memories: " + (b.first_turn_bitwise_invariant ? "yes" : "no") +
              "; zeroed A_M changes output: " + (b.zeroed_history_changes_output ? "yes" : "no") +
              "; change at mu=1: " + fmt("%.1e", b.max_change_at_mu_one)};
}

Line distribution_criterion() {
  auto m = mixture_sweep(kMixtureCalls, 7);
  const bool pass = m.calls == kMixtureCalls && m.max_sum_error <= kSumTolerance &&
                    m.min_probability >= 0 && m.min_gate > 0 && m.max_gate < 1 && m.min_mu > 0 &&
                    m.max_mu < 1;
  return {"distribution validity", pass,
          std::to_string(m.calls) + " calls, max |sum-1| " + fmt("%.1e", m.max_sum_error) +
              ", min p " + fmt("%.1e", m.min_probability) + ", g in [" + fmt("%.4f", m.min_gate) +
              ", " + fmt("%.4f", m.max_gate) + "], mu in [" + fmt("%.4f", m.min_mu) + ", " +
              fmt("%.4f", m.max_mu) + "]"};
}

Line endpoint_criterion() {
  auto e = copy_endpoint_check(7);
  return {"copy endpoints",
          e.tokens_at_zero > 0 && e.non_tail_tokens_at_zero == 0 && e.gate_one_bitwise_p_v &&
              e.gate_one_max_diff_vs_softmax <= kSoftmaxTolerance,
          "g=0: " + std::to_string(e.non_tail_tokens_at_zero) + " of " +
              std::to_string(e.tokens_at_zero) + " tokens outside the tails; g=1: final == P_v " +
              (e.gate_one_bitwise_p_v ? "bitwise" : "NOT bitwise") + ", max diff vs softmax " +
              fmt("%.1e", e.gate_one_max_diff_vs_softmax)};
}

Line retrieval_criterion() {
  auto r = retrieval_sweep(kRetrievalCorpora, 7);
  return {"retrieval oracle",
          r.ranking_mismatches == 0 && r.filter_mismatches == 0 && r.size_violations == 0,
          std::to_string(r.corpora) + " corpora: " + std::to_string(r.ranking_mismatches) +
              " ranking, " + std::to_string(r.filter_mismatches) + " filter, " +
              std::to_string(r.size_violations) + " size mismatches" +
              (r.first_mismatch.empty() ? "" : " (" + r.first_mismatch + ")")};
}

Line metric_criterion() {
  const double bleu = eval::bleu_n({"a", "b", "c"}, {"a", "b", "d"}, 2);
  const double dist = eval::distinct_n({{"a", "a", "a"}}, 1);
  const auto& f = fixture();
  auto config = tiny_config();
  config.use_second_hop = false;
  auto model = pipeline::DialogueModel::initialize(config, f.vocab, f.stores, 1);
  for (const char* name : {"controller.W_v", "controller.b_v"}) {
    for (auto& v : model.mutable_params().get(name).mutable_data()) v = 0;
  }
  const double ppl = eval::perplexity(model, f.units);
  const double vocab = static_cast<double>(f.vocab.size());
  const bool pass = std::abs(bleu - 0.5774) <= kBleuTolerance &&
                    std::abs(dist - 1.0 / 3.0) <= kDistinctTolerance &&
                    std::abs(ppl - vocab) <= kUniformPplTolerance;
  return {"metric fixtures", pass,
          "BLEU-2 " + fmt("%.6f", bleu) + ", Distinct-1 " + fmt("%.10f", dist) + ", uniform PPL " +
              fmt("%.9f", ppl) + " for V=" + fmt("%.0f", vocab)};
}

}  // namespace

int main() {
  std::vector<Line> lines;
  auto emit = [&](Line l) {
    std::cout << (l.pass ? "[PASS] " : "[FAIL] ") << l.name << ": " << l.detail << std::endl;
    lines.push_back(std::move(l));
  };

  emit(gradient_criterion());
  emit(schedule_criterion());
  emit(branch_criterion());
  emit(distribution_criterion());
  emit(endpoint_criterion());
  emit(retrieval_criterion());
  emit(metric_criterion());

  const auto& f = fixture();
  auto full = train_desk([](neural::ModelConfig&) {}, kOverfitSteps);
  {
    const auto start = std::chrono::steady_clock::now();
    auto report = eval::run_eval(*full.model, f.units);
    const double seconds = full.seconds + Seconds(std::chrono::steady_clock::now() - start).count();
    emit({"overfit run",
          full.finite && seconds < kOverfitBudgetSeconds && report.ppl < kOverfitMaxPpl &&
              report.bleu[0] > kOverfitMinBleu1 && f.conversations.size() == 8,
          std::to_string(f.conversations.size()) + " dialogues, " + std::to_string(f.units.size()) +
              " units, d_model " + std::to_string(full.model->config().d_model) + ", " +
              std::to_string(full.records.size()) + " steps in " + fmt("%.1f", seconds) +
              " s: PPL " + fmt("%.4f", report.ppl) + ", BLEU-1 " + fmt("%.4f", report.bleu[0])});
  }

  {
    struct Ablation {
      const char* name;
      std::function<void(neural::ModelConfig&)> modify;
    };
    const std::vector<Ablation> ablations{
        {"-2Hop", [](neural::ModelConfig& c) { c.use_second_hop = false; }},
        {"-Mem", [](neural::ModelConfig& c) { c.use_memory = false; }},
        {"-1Hop", [](neural::ModelConfig& c) { c.use_first_hop = false; }},
    };
    const double full_loss = full.records.back().loss;
    bool pass = full.finite;
    std::string detail = "loss at step " + std::to_string(full.records.back().step) + ": full " +
                         fmt("%.3e", full_loss);
    std::string means = "; last-pass means: full " + fmt("%.3e", last_pass_mean(full, f.units.size()));
    for (const auto& a : ablations) {
      auto run = train_desk(a.modify, kOverfitSteps);
      const double loss = run.records.back().loss;
      const bool ok = run.finite && run.records.size() == kOverfitSteps && full_loss <= loss;
      pass = pass && ok;
      detail += std::string(", ") + a.name + " " + fmt("%.3e", loss) + (ok ? "" : " (full is higher)");
      means += std::string(", ") + a.name + " " + fmt("%.3e", last_pass_mean(run, f.units.size()));
    }
    emit({"ablation ordering", pass, detail + means});
  }

  {
    auto a = train_desk([](neural::ModelConfig&) {}, kDeterminismSteps);
    auto b = train_desk([](neural::ModelConfig&) {}, kDeterminismSteps);
    bool curves = a.records.size() == b.records.size();
    for (std::size_t i = 0; curves && i < a.records.size(); ++i) {
      curves = a.records[i].loss == b.records[i].loss && a.records[i].loss == full.records[i].loss;
    }
    std::vector<corpus::DialogueUnit> sample(f.units.begin(), f.units.begin() + 4);
    const bool reports =
        eval::run_eval(*a.model, sample).to_json() == eval::run_eval(*b.model, sample).to_json();
    auto traces = [&](const Run& r) {
      api::SessionManager sessions(std::shared_ptr<const pipeline::DialogueModel>(
          r.model.get(), [](const pipeline::DialogueModel*) {}));
      auto id = sessions.create();
      std::string all;
      for (std::size_t i = 0; i < 3; ++i) {
        all += pipeline::to_json(sessions.post_utterance(id, f.units[i].user_utterance).result.trace).dump();
      }
      return all;
    };
    const bool service = traces(a) == traces(b);
    emit({"determinism", curves && reports && service,
          std::string("loss curves ") + (curves ? "identical" : "differ") + ", eval reports " +
              (reports ? "identical" : "differ") + ", service traces " +
              (service ? "identical" : "differ")});
  }

  std::size_t failed = 0;
  for (const auto& l : lines) failed += l.pass ? 0 : 1;
  std::cout << lines.size() << " criteria evaluated, " << lines.size() - failed << " passed, "
            << failed << " failed" << std::endl;
  return failed == 0 ? 0 : 1;
}
