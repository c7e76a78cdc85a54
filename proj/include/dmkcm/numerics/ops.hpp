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
#include <span>
#include <vector>

#include "dmkcm/numerics/tensor.hpp"

// Differentiable operations. All operate on the matrix view of their
// operands (see Tensor::rows/cols) and return rank-2 results unless noted.
namespace dmkcm::ops {

Tensor matmul(const Tensor& a, const Tensor& b);
/// a * b^T without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& x);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
/// Adds a 1 x c row to every row of x.
Tensor add_row(const Tensor& x, const Tensor& row);
/// Multiplies every row i of x by s[i]; s has x.rows() elements.
Tensor scale_rows(const Tensor& x, const Tensor& s);
/// Multiplies all of x by the single-element tensor s.
Tensor scale_by(const Tensor& x, const Tensor& s);
/// a * x + b elementwise with constants.
Tensor affine(const Tensor& x, Scalar a, Scalar b);

Tensor sigmoid(const Tensor& x);
Tensor tanh(const Tensor& x);
Tensor relu(const Tensor& x);
/// log(max(x, floor)); gradient is zero where the floor is active.
Tensor log(const Tensor& x, Scalar floor = Scalar{1e-12});

/// Softmax along axis 0 (columns) or 1 / -1 (rows), max-subtracted.
Tensor softmax(const Tensor& x, int axis = -1);
/// Row-wise layer norm followed by gamma * xhat + beta.
Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  Scalar eps = Scalar{1e-5});
/// Row-wise layer norm without affine parameters.
Tensor layer_norm(const Tensor& x, Scalar eps = Scalar{1e-5});

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

/// Rows of table selected by index (embedding lookup).
Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index);
/// out[index[i]] += weight[i] * src[i]; out has n_rows rows.
Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> index,
                        std::size_t n_rows, std::span<const Scalar> weight = {});
/// out[r, index[j]] += x[r, j]; out has n_cols columns.
Tensor scatter_add_cols(const Tensor& x, std::span<const std::size_t> index,
                        std::size_t n_cols);
/// x[i, index[i]] for each row, as an n x 1 column.
Tensor pick(const Tensor& x, std::span<const std::size_t> index);

Tensor concat_rows(const std::vector<Tensor>& parts);
Tensor concat_cols(const std::vector<Tensor>& parts);
Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end);

struct AttentionOptions {
  std::size_t heads = 1;
  bool causal = false;
  /// One flag per key; false keys receive zero weight. Empty = all valid.
  std::vector<bool> key_valid;
  /// When set, receives per-head weights as heads x (queries x keys).
  std::vector<std::vector<Scalar>>* weights_out = nullptr;
};

/// Scaled dot-product attention with the model dimension split into heads.
/// q is (L, d), k and v are (S, d). Returns (L, d) before output projection.
Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionOptions& options);

/// Additive scores: out[w, s] = sum_j va[j] * tanh(p[w, j] + q[s, j]).
Tensor additive_scores(const Tensor& p, const Tensor& q, const Tensor& va);

}  // namespace dmkcm::ops
