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
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "dmkcm/pipeline/model.hpp"
#include "dmkcm/training/objective.hpp"

namespace dmkcm::training {

struct TrainConfig {
  std::size_t batch_size = 1;
  std::size_t max_steps = 2000;
  std::size_t warmup = 400;
  double lr_factor = 1.0;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double clip_norm = 1.0;
  std::uint64_t seed = 13;
  std::size_t checkpoint_every = 0;  // 0 = only the final checkpoint
  std::size_t min_count = 2;
  bool include_persona = false;

  void validate() const;
  /// Applies recognised keys; returns the rest.
  std::map<std::string, std::string> apply(const std::map<std::string, std::string>& values);
  AdamConfig adam(std::size_t d_model) const;
};

struct StepRecord {
  std::size_t step;
  double loss;
  double ppl;
  double lr;
  double grad_norm;  // before clipping
};

/// Sequential teacher-forced training over units in file order, one unit per
/// step, carrying a memory bank per conversation exactly as at inference.
class Trainer {
 public:
  Trainer(pipeline::DialogueModel& model, std::vector<corpus::DialogueUnit> units,
          TrainConfig config);

  StepRecord step();
  /// Runs until `max_steps` total steps; calls on_step after each.
  std::vector<StepRecord> run(const std::function<void(const StepRecord&)>& on_step = {});

  std::size_t steps_done() const { return step_; }
  std::size_t cursor() const { return cursor_; }
  const fusion::MemoryBank& bank() const { return bank_; }
  const AdamState& adam_state() const { return adam_; }

  /// Parameters plus optimizer moments, step, cursor and memory bank.
  void save_state(const std::filesystem::path& dir) const;
  void load_state(const std::filesystem::path& dir);

 private:
  pipeline::DialogueModel& model_;
  std::vector<corpus::DialogueUnit> units_;
  std::vector<pipeline::TurnKnowledge> knowledge_;
  TrainConfig config_;
  AdamConfig adam_config_;
  AdamState adam_;
  std::size_t step_ = 0;
  std::size_t cursor_ = 0;
  fusion::MemoryBank bank_;
};

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records);

}  // namespace dmkcm::training
