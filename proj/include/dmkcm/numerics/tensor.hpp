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

#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmkcm {

#ifdef DMKCM_FLOAT32
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<std::size_t>;

std::string shape_to_string(const Shape& shape);
std::size_t shape_numel(const Shape& shape);

/// Raised when operand shapes are incompatible.
class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Raised when a caller violates an operation's precondition.
class ContractError : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// Raised on NaN or other non-finite input where finite input is required.
class NumericError : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

namespace detail {

struct Node {
  Shape shape;
  std::vector<Scalar> value;
  std::vector<Scalar> grad;  // empty until first accumulation
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward;

  void ensure_grad() {
    if (grad.size() != value.size()) grad.assign(value.size(), Scalar{0});
  }
};

}  // namespace detail

/// Dense rank-0/1/2 tensor participating in a reverse-mode autograd graph.
///
/// Copies share the underlying node; use detach() or clone() for an
/// independent value. Rank-1 tensors of length n behave as 1 x n rows in
/// matrix operations.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, Scalar value, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<Scalar> values,
                     bool requires_grad = false);
  static Tensor matrix(std::initializer_list<std::initializer_list<Scalar>> rows,
                       bool requires_grad = false);
  static Tensor vector(std::initializer_list<Scalar> values,
                       bool requires_grad = false);
  static Tensor scalar(Scalar value, bool requires_grad = false);

  bool defined() const { return static_cast<bool>(node_); }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t numel() const;
  /// Matrix view: rank 0 -> 1x1, rank 1 (n) -> 1xn, rank 2 (r,c) -> rxc.
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<const Scalar> data() const;
  std::span<Scalar> mutable_data();
  Scalar item() const;
  Scalar at(std::size_t r, std::size_t c) const;
  Scalar operator[](std::size_t i) const { return data()[i]; }

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const Scalar> grad() const;
  std::span<Scalar> mutable_grad();
  void zero_grad();

  /// Same values, no history, no gradient requirement.
  Tensor detach() const;
  /// Same values and requires_grad flag, fresh leaf.
  Tensor clone() const;

  const detail::Node* id() const { return node_.get(); }
  const std::shared_ptr<detail::Node>& node() const { return node_; }

  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

/// Thread-local switch controlling graph recording.
class GradMode {
 public:
  static bool enabled();
  static void set_enabled(bool enabled);
};

/// Disables graph recording for the current thread within its scope.
class NoGradGuard {
 public:
  NoGradGuard() : previous_(GradMode::enabled()) { GradMode::set_enabled(false); }
  ~NoGradGuard() { GradMode::set_enabled(previous_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

struct BackwardOptions {
  bool retain_graph = false;
};

/// Reverse-mode sweep from a scalar loss. Gradients accumulate into every
/// reachable tensor that requires them.
void backward(const Tensor& loss, BackwardOptions options = {});

}  // namespace dmkcm
