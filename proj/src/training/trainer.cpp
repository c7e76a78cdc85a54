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

#include "dmkcm/training/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "dmkcm/neural/config.hpp"

namespace dmkcm::training {

namespace {

std::size_t to_size(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    auto out = std::stoull(v, &pos);
    if (pos != v.size() || v.front() == '-') throw std::invalid_argument(v);
    return static_cast<std::size_t>(out);
  } catch (const std::exception&) {
    throw neural::ConfigError("train config key " + key + ": expected a non-negative integer, got '" +
                              v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw neural::ConfigError("train config key " + key + ": expected a number, got '" + v + "'");
  }
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_size != 1) throw neural::ConfigError("train config: only batch_size=1 is supported");
  if (warmup < 1) throw neural::ConfigError("train config: warmup must be >= 1");
  if (!(clip_norm > 0)) throw neural::ConfigError("train config: clip_norm must be > 0");
  if (!(lr_factor > 0)) throw neural::ConfigError("train config: lr_factor must be > 0");
}

std::map<std::string, std::string> TrainConfig::apply(
    const std::map<std::string, std::string>& values) {
  std::map<std::string, std::string> rest;
  for (const auto& [k, v] : values) {
    if (k == "batch_size") batch_size = to_size(k, v);
    else if (k == "max_steps") max_steps = to_size(k, v);
    else if (k == "warmup") warmup = to_size(k, v);
    else if (k == "lr_factor") lr_factor = to_double(k, v);
    else if (k == "beta1") beta1 = to_double(k, v);
    else if (k == "beta2") beta2 = to_double(k, v);
    else if (k == "eps") eps = to_double(k, v);
    else if (k == "clip_norm") clip_norm = to_double(k, v);
    else if (k == "seed") seed = to_size(k, v);
    else if (k == "checkpoint_every") checkpoint_every = to_size(k, v);
    else if (k == "min_count") min_count = to_size(k, v);
    else if (k == "include_persona") include_persona = (v == "true" || v == "1");
    else rest.emplace(k, v);
  }
  return rest;
}

AdamConfig TrainConfig::adam(std::size_t d_model) const {
  return AdamConfig{beta1, beta2, eps, lr_factor, warmup, d_model};
}

Trainer::Trainer(pipeline::DialogueModel& model, std::vector<corpus::DialogueUnit> units,
                 TrainConfig config)
    : model_(model),
      units_(std::move(units)),
      config_(config),
      adam_config_(config.adam(model.config().d_model)),
      bank_({}, model.config().memory_window) {
  config_.validate();
  if (units_.empty()) throw ContractError("Trainer: no training units");
  knowledge_.reserve(units_.size());
  for (const auto& u : units_) {
    knowledge_.push_back(model_.prepare(pipeline::TurnRequest::from_unit(u)));
  }
}

StepRecord Trainer::step() {
  const auto& unit = units_[cursor_];
  const auto& knowledge = knowledge_[cursor_];
  if (unit.turn_index == 1 || bank_.conversation_id() != unit.conversation_id) {
    bank_ = fusion::MemoryBank(unit.conversation_id, model_.config().memory_window);
  }
  auto& params = model_.mutable_params();
  params.zero_grad();
  auto fwd = model_.forward(knowledge, bank_);
  auto loss = model_.loss(fwd, knowledge, unit.gold_response);
  const double loss_value = loss.item();
  if (!std::isfinite(loss_value)) throw NumericError("Trainer: non-finite loss");
  backward(loss);
  const double norm = clip_gradients(params, config_.clip_norm);
  ++step_;
  const double lr = adam_warmup_step(params, adam_, step_, adam_config_);
  model_.commit(bank_, knowledge, fwd);
  cursor_ = (cursor_ + 1) % units_.size();
  return StepRecord{step_, loss_value, std::exp(loss_value), lr, norm};
}

std::vector<StepRecord> Trainer::run(const std::function<void(const StepRecord&)>& on_step) {
  std::vector<StepRecord> records;
  while (step_ < config_.max_steps) {
    records.push_back(step());
    if (on_step) on_step(records.back());
  }
  return records;
}

void Trainer::save_state(const std::filesystem::path& dir) const {
  std::filesystem::create_directories(dir);
  model_.save(dir);
  std::map<std::string, Tensor> tensors;
  for (const auto& [name, m] : adam_.m) tensors.emplace("adam.m/" + name, Tensor::from({m.size()}, m));
  for (const auto& [name, v] : adam_.v) tensors.emplace("adam.v/" + name, Tensor::from({v.size()}, v));
  std::ostringstream meta;
  meta << "step=" << step_ << "\ncursor=" << cursor_ << "\nadam_step=" << adam_.step
       << "\nbank_conversation=" << bank_.conversation_id()
       << "\nbank_entries=" << bank_.entries().size() << '\n';
  for (std::size_t i = 0; i < bank_.entries().size(); ++i) {
    const auto& e = bank_.entries()[i];
    char key[32];
    std::snprintf(key, sizeof key, "bank.%04zu", i);
    tensors.emplace(key, e.h_v);
    meta << "bank_turn_" << i << '=' << e.turn_index << "\nbank_docs_" << i << '=';
    for (std::size_t j = 0; j < e.doc_ids.size(); ++j) meta << (j ? "," : "") << e.doc_ids[j];
    meta << '\n';
  }
  save_tensors(dir / "trainer.bin", tensors);
  std::ofstream(dir / "trainer.state", std::ios::trunc) << meta.str();
}

void Trainer::load_state(const std::filesystem::path& dir) {
  load_parameters(dir / "model.ckpt", model_.mutable_params());
  auto meta = neural::parse_key_values(neural::read_text_file(dir / "trainer.state"));
  auto tensors = load_tensors(dir / "trainer.bin");
  auto get = [&](const std::string& k) {
    auto it = meta.find(k);
    if (it == meta.end()) throw CheckpointError("trainer.state: missing key " + k);
    return it->second;
  };
  step_ = to_size("step", get("step"));
  cursor_ = to_size("cursor", get("cursor"));
  if (cursor_ >= units_.size()) throw CheckpointError("trainer.state: cursor beyond the unit list");
  adam_ = AdamState{};
  adam_.step = to_size("adam_step", get("adam_step"));
  bank_ = fusion::MemoryBank(meta.count("bank_conversation") ? meta.at("bank_conversation") : "",
                             model_.config().memory_window);
  for (const auto& [name, t] : tensors) {
    auto data = t.data();
    if (name.rfind("adam.m/", 0) == 0) adam_.m[name.substr(7)].assign(data.begin(), data.end());
    if (name.rfind("adam.v/", 0) == 0) adam_.v[name.substr(7)].assign(data.begin(), data.end());
  }
  const std::size_t entries = to_size("bank_entries", get("bank_entries"));
  for (std::size_t i = 0; i < entries; ++i) {
    char key[32];
    std::snprintf(key, sizeof key, "bank.%04zu", i);
    auto it = tensors.find(key);
    if (it == tensors.end()) throw CheckpointError("trainer.bin: missing " + std::string(key));
    std::vector<vkb::DocId> docs;
    std::stringstream ss(meta.count("bank_docs_" + std::to_string(i))
                             ? meta.at("bank_docs_" + std::to_string(i))
                             : std::string());
    std::string item;
    while (std::getline(ss, item, ',')) {
      if (!item.empty()) docs.push_back(static_cast<vkb::DocId>(to_size("bank_docs", item)));
    }
    Tensor h_v = it->second;
    if (h_v.shape().size() != 2) {
      h_v = Tensor::zeros({0, model_.config().d_model});
    }
    bank_.update(to_size("bank_turn", get("bank_turn_" + std::to_string(i))), h_v, std::move(docs));
  }
}

void write_loss_csv(const std::filesystem::path& path, const std::vector<StepRecord>& records) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "step,loss,ppl,lr\n";
  char line[128];
  for (const auto& r : records) {
    std::snprintf(line, sizeof line, "%zu,%.17g,%.17g,%.17g\n", r.step, r.loss, r.ppl, r.lr);
    out << line;
  }
}

}  // namespace dmkcm::training
