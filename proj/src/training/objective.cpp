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

#include "dmkcm/training/objective.hpp"

#include <algorithm>
#include <cmath>

namespace dmkcm::training {

Tensor nll_loss(const Tensor& dist, const std::vector<std::size_t>& gold,
                const std::vector<bool>& valid) {
  if (gold.size() != dist.rows()) {
    throw DimensionError("nll_loss: " + std::to_string(gold.size()) + " targets for " +
                         std::to_string(dist.rows()) + " distributions");
  }
  if (!valid.empty() && valid.size() != gold.size()) {
    throw DimensionError("nll_loss: mask length differs from target length");
  }
  std::size_t count = 0;
  for (std::size_t t = 0; t < gold.size(); ++t) {
    if (valid.empty() || valid[t]) ++count;
    if (gold[t] >= dist.cols()) throw ContractError("nll_loss: gold id outside the vocabulary");
  }
  if (count == 0) throw ContractError("nll_loss: every target position is padding");
  std::vector<Scalar> weights(gold.size());
  for (std::size_t t = 0; t < gold.size(); ++t) {
    weights[t] = (valid.empty() || valid[t]) ? Scalar{-1} / static_cast<Scalar>(count) : Scalar{0};
  }
  auto logs = ops::log(ops::pick(dist, gold));
  return ops::matmul(Tensor::from({1, gold.size()}, std::move(weights)), logs);
}

double learning_rate(std::size_t step, const AdamConfig& config) {
  if (step == 0) throw ContractError("learning_rate: steps are 1-based");
  if (config.warmup == 0) throw ContractError("learning_rate: warmup must be >= 1");
  const double s = static_cast<double>(step);
  const double w = static_cast<double>(config.warmup);
  return config.factor / std::sqrt(static_cast<double>(config.d_model)) *
         std::min(1.0 / std::sqrt(s), s * std::pow(w, -1.5));
}

double adam_warmup_step(ParameterSet& params, AdamState& state, std::size_t step,
                        const AdamConfig& config) {
  if (step == 0) throw ContractError("adam_warmup_step: steps are 1-based");
  const double lr = learning_rate(step, config);
  const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(step));
  for (const auto& [name, tensor] : params.items()) {
    Tensor t = tensor;
    auto& m = state.m[name];
    auto& v = state.v[name];
    const std::size_t n = t.numel();
    if (m.size() != n) m.assign(n, Scalar{0});
    if (v.size() != n) v.assign(n, Scalar{0});
    const bool has = t.has_grad();
    auto g = has ? t.grad() : std::span<const Scalar>{};
    auto x = t.mutable_data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = has ? g[i] : 0.0;
      m[i] = static_cast<Scalar>(config.beta1 * m[i] + (1.0 - config.beta1) * gi);
      v[i] = static_cast<Scalar>(config.beta2 * v[i] + (1.0 - config.beta2) * gi * gi);
      const double mhat = m[i] / c1;
      const double vhat = v[i] / c2;
      x[i] = static_cast<Scalar>(x[i] - lr * mhat / (std::sqrt(vhat) + config.eps));
    }
  }
  state.step = step;
  return lr;
}

double gradient_norm(const ParameterSet& params) {
  double sq = 0;
  for (const auto& [name, t] : params.items()) {
    if (!t.has_grad()) continue;
    for (auto g : t.grad()) sq += static_cast<double>(g) * g;
  }
  return std::sqrt(sq);
}

double clip_gradients(ParameterSet& params, double max_norm) {
  if (!(max_norm > 0)) throw ContractError("clip_gradients: max_norm must be positive");
  const double norm = gradient_norm(params);
  if (norm > max_norm) {
    const double scale = max_norm / norm;
    for (const auto& [name, tensor] : params.items()) {
      Tensor t = tensor;
      if (!t.has_grad()) continue;
      for (auto& g : t.mutable_grad()) g = static_cast<Scalar>(g * scale);
    }
  }
  return norm;
}

}  // namespace dmkcm::training
