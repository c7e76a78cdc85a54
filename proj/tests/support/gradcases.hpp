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

#include <functional>
#include <string>
#include <vector>

#include "support/oracles.hpp"

namespace dmkcm::testing {

/// One differentiable layer checked against finite differences on random
/// inputs of width at most 8.
struct LayerGradCase {
  std::string layer;
  std::function<GradCheckResult()> run;
};

std::vector<LayerGradCase> layer_grad_cases(std::uint64_t seed);

}  // namespace dmkcm::testing
