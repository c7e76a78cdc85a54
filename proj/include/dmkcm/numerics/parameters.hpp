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
#include <map>
#include <random>
#include <string>
#include <vector>

#include "dmkcm/numerics/tensor.hpp"

namespace dmkcm {

/// Seeded generator threaded explicitly through every initializer.
/// Uniform draws use a fixed 53-bit mapping so results do not depend on the
/// standard library's distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform01(); }
  /// Integer in [0, n).
  std::size_t below(std::size_t n);
  std::uint64_t next() { return engine_(); }

 private:
  std::mt19937_64 engine_;
};

enum class Init { kUniform, kZeros, kOnes };

/// Named trainable tensors, iterated in lexicographic name order.
class ParameterSet {
 public:
  static constexpr double kInitRange = 0.08;

  Tensor& add(const std::string& name, Shape shape, Init init, Rng& rng);
  /// Registers an existing tensor; it becomes trainable.
  Tensor& add(const std::string& name, Tensor value);

  bool contains(const std::string& name) const { return params_.count(name) > 0; }
  const Tensor& get(const std::string& name) const;
  Tensor& get(const std::string& name);

  std::size_t size() const { return params_.size(); }
  std::size_t scalar_count() const;
  const std::map<std::string, Tensor>& items() const { return params_; }

  void zero_grad();
  /// Deep copy: independent values, trainable, no gradients.
  ParameterSet clone() const;

 private:
  std::map<std::string, Tensor> params_;
};

/// Raised on malformed or mismatched checkpoint files.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

inline constexpr char kCheckpointMagic[4] = {'D', 'M', 'K', 'C'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Writes "DMKC", u32 version, then per tensor: u32 name length, name bytes,
/// u32 rank, u64 dims, float64 payload. All integers and floats little-endian.
void save_tensors(const std::filesystem::path& path, const std::map<std::string, Tensor>& tensors);
std::map<std::string, Tensor> load_tensors(const std::filesystem::path& path);

void save_parameters(const std::filesystem::path& path, const ParameterSet& params);
/// Loads values into an existing set; names and shapes must match exactly.
void load_parameters(const std::filesystem::path& path, ParameterSet& params);

}  // namespace dmkcm
