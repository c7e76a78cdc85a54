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

#include "dmkcm/numerics/tensor.hpp"

#include <unordered_set>
#include <utility>

namespace dmkcm {

std::string shape_to_string(const Shape& shape) {
  std::string out = "(";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + ")";
}

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

namespace {

thread_local bool grad_mode_enabled = true;

std::shared_ptr<detail::Node> make_leaf(Shape shape, std::vector<Scalar> values,
                                        bool requires_grad) {
  if (shape.size() > 2) {
    throw DimensionError("tensor rank above 2 is unsupported: " + shape_to_string(shape));
  }
  if (shape_numel(shape) != values.size()) {
    throw DimensionError("shape " + shape_to_string(shape) + " does not match " +
                         std::to_string(values.size()) + " values");
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("use of undefined tensor");
  return *node;
}

}  // namespace

bool GradMode::enabled() { return grad_mode_enabled; }
void GradMode::set_enabled(bool enabled) { grad_mode_enabled = enabled; }

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<Scalar>(n, Scalar{0}), requires_grad));
}

Tensor Tensor::full(Shape shape, Scalar value, bool requires_grad) {
  auto n = shape_numel(shape);
  return Tensor(make_leaf(std::move(shape), std::vector<Scalar>(n, value), requires_grad));
}

Tensor Tensor::from(Shape shape, std::vector<Scalar> values, bool requires_grad) {
  return Tensor(make_leaf(std::move(shape), std::move(values), requires_grad));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<Scalar>> rows,
                      bool requires_grad) {
  std::vector<Scalar> values;
  std::size_t cols = rows.size() ? rows.begin()->size() : 0;
  for (const auto& row : rows) {
    if (row.size() != cols) throw DimensionError("ragged matrix literal");
    values.insert(values.end(), row.begin(), row.end());
  }
  return from({rows.size(), cols}, std::move(values), requires_grad);
}

Tensor Tensor::vector(std::initializer_list<Scalar> values, bool requires_grad) {
  return from({values.size()}, std::vector<Scalar>(values), requires_grad);
}

Tensor Tensor::scalar(Scalar value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

const Shape& Tensor::shape() const { return checked(node_).shape; }
std::size_t Tensor::numel() const { return checked(node_).value.size(); }

std::size_t Tensor::rows() const {
  const auto& s = shape();
  return s.size() == 2 ? s[0] : 1;
}

std::size_t Tensor::cols() const {
  const auto& s = shape();
  if (s.empty()) return 1;
  return s.size() == 2 ? s[1] : s[0];
}

std::span<const Scalar> Tensor::data() const { return checked(node_).value; }
std::span<Scalar> Tensor::mutable_data() {
  checked(node_);
  return node_->value;
}

Scalar Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on tensor of shape " + shape_to_string(shape()));
  }
  return node_->value[0];
}

Scalar Tensor::at(std::size_t r, std::size_t c) const {
  if (r >= rows() || c >= cols()) throw ContractError("tensor index out of range");
  return node_->value[r * cols() + c];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }
void Tensor::set_requires_grad(bool flag) {
  checked(node_);
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const {
  const auto& n = checked(node_);
  return !n.grad.empty() || n.value.empty();
}

std::span<const Scalar> Tensor::grad() const { return checked(node_).grad; }
std::span<Scalar> Tensor::mutable_grad() {
  checked(node_);
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
}

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(make_leaf(n.shape, n.value, false));
}

Tensor Tensor::clone() const {
  const auto& n = checked(node_);
  return Tensor(make_leaf(n.shape, n.value, n.requires_grad));
}

void backward(const Tensor& loss, BackwardOptions options) {
  if (!loss.defined()) throw ContractError("backward on undefined tensor");
  if (loss.numel() != 1) {
    throw ContractError("backward requires a scalar loss, got shape " +
                        shape_to_string(loss.shape()));
  }
  auto* root = loss.node().get();
  if (!root->requires_grad) return;

  // Iterative post-order DFS gives a topological order without recursion.
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> visited;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root, 0);
  visited.insert(root);
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      auto* parent = node->parents[next++].get();
      if (parent->requires_grad && visited.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  root->ensure_grad();
  root->grad[0] += Scalar{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    detail::Node* node = *it;
    if (node->backward && !node->grad.empty()) node->backward(*node);
  }
  if (!options.retain_graph) {
    for (auto* node : order) {
      if (node->backward) {
        node->backward = nullptr;
        node->parents.clear();
      }
    }
  }
}

}  // namespace dmkcm
