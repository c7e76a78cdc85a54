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

#include <map>
#include <string>
#include <vector>

#include "dmkcm/numerics/ops.hpp"
#include "dmkcm/numerics/parameters.hpp"

namespace dmkcm::training {

/// Mean of -log dist[t, gold[t]] over positions with valid[t] (empty mask =
/// all valid). The log is floored at 1e-12.
Tensor nll_loss(const Tensor& dist, const std::vector<std::size_t>& gold,
                const std::vector<bool>& valid = {});

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
  double factor = 1.0;
  std::size_t warmup = 400;
  std::size_t d_model = 64;
};

/// factor * d^-0.5 * min(step^-0.5, step * warmup^-1.5); step is 1-based.
double learning_rate(std::size_t step, const AdamConfig& config);

struct AdamState {
  std::map<std::string, std::vector<Scalar>> m, v;
  std::size_t step = 0;

  bool operator==(const AdamState&) const = default;
};

/// One bias-corrected Adam update at `step` using the gradients held by
/// params. Parameters without a gradient are treated as having zero
/// gradient. Returns the learning rate used.
double adam_warmup_step(ParameterSet& params, AdamState& state, std::size_t step,
                        const AdamConfig& config);

/// Global L2 norm of all gradients.
double gradient_norm(const ParameterSet& params);

/// Rescales gradients so the global norm is at most max_norm; returns the
/// norm before clipping.
double clip_gradients(ParameterSet& params, double max_norm);

}  // namespace dmkcm::training
