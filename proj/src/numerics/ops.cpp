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

#include "dmkcm/numerics/ops.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <string>
#include <utility>

#include "dmkcm/numerics/kernels.hpp"

namespace dmkcm::ops {

namespace {

using detail::Node;
using BackwardFn = std::function<void(Node&)>;

Tensor make_op(Shape shape, std::vector<Scalar> value,
               std::initializer_list<const Tensor*> parents, BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const Tensor* p : parents) needs = needs || p->requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const Tensor* p : parents) node->parents.push_back(p->node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor make_op_n(Shape shape, std::vector<Scalar> value, const std::vector<Tensor>& parents,
                 BackwardFn fn) {
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(value);
  bool needs = false;
  if (GradMode::enabled()) {
    for (const auto& p : parents) needs = needs || p.requires_grad();
  }
  if (needs) {
    node->requires_grad = true;
    for (const auto& p : parents) node->parents.push_back(p.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

// Gradient buffer of parent i, or nullptr when that parent needs none.
Scalar* grad_of(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

const Scalar* value_of(Node& self, std::size_t i) { return self.parents[i]->value.data(); }

Shape mat(std::size_t r, std::size_t c) { return {r, c}; }

void require_same(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw DimensionError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) +
                         " vs " + shape_to_string(b.shape()));
  }
}

void check_nan(std::span<const Scalar> values, const char* op) {
  for (Scalar v : values) {
    if (std::isnan(v)) throw NumericError(std::string(op) + ": NaN input");
  }
}

template <typename F, typename D>
Tensor unary(const Tensor& x, F forward, D derivative_from_output) {
  auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = forward(in[i]);
  return make_op(x.shape(), std::move(out), {&x}, [derivative_from_output](Node& self) {
    Scalar* gx = grad_of(self, 0);
    if (!gx) return;
    const Scalar* xin = value_of(self, 0);
    for (std::size_t i = 0; i < self.value.size(); ++i) {
      gx[i] += self.grad[i] * derivative_from_output(xin[i], self.value[i]);
    }
  });
}

}  // namespace

Tensor matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions disagree for " + shape_to_string(a.shape()) +
                         " x " + shape_to_string(b.shape()));
  }
  std::vector<Scalar> out(m * n, Scalar{0});
  kernels::gemm_nn(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op(mat(m, n), std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const Scalar* g = self.grad.data();
    if (Scalar* ga = grad_of(self, 0)) kernels::gemm_nt(g, value_of(self, 1), ga, m, n, k);
    if (Scalar* gb = grad_of(self, 1)) kernels::gemm_tn(value_of(self, 0), g, gb, k, m, n);
  });
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.rows(), k = a.cols(), n = b.rows();
  if (b.cols() != k) {
    throw DimensionError("matmul_nt: inner dimensions disagree for " +
                         shape_to_string(a.shape()) + " x " + shape_to_string(b.shape()) + "^T");
  }
  std::vector<Scalar> out(m * n, Scalar{0});
  kernels::gemm_nt(a.data().data(), b.data().data(), out.data(), m, k, n);
  return make_op(mat(m, n), std::move(out), {&a, &b}, [m, k, n](Node& self) {
    const Scalar* g = self.grad.data();
    if (Scalar* ga = grad_of(self, 0)) kernels::gemm_nn(g, value_of(self, 1), ga, m, n, k);
    if (Scalar* gb = grad_of(self, 1)) kernels::gemm_tn(g, value_of(self, 0), gb, n, m, k);
  });
}

Tensor transpose(const Tensor& x) {
  const std::size_t r = x.rows(), c = x.cols();
  auto in = x.data();
  std::vector<Scalar> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = in[i * c + j];
  return make_op(mat(c, r), std::move(out), {&x}, [r, c](Node& self) {
    Scalar* gx = grad_of(self, 0);
    if (!gx) return;
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < c; ++j) gx[i * c + j] += self.grad[j * r + i];
  });
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same(a, b, "add");
  auto x = a.data(), y = b.data();
  std::vector<Scalar> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] + y[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (Scalar* g = grad_of(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same(a, b, "sub");
  auto x = a.data(), y = b.data();
  std::vector<Scalar> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - y[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    if (Scalar* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (Scalar* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  require_same(a, b, "mul");
  auto x = a.data(), y = b.data();
  std::vector<Scalar> out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] * y[i];
  return make_op(a.shape(), std::move(out), {&a, &b}, [](Node& self) {
    const Scalar* x = value_of(self, 0);
    const Scalar* y = value_of(self, 1);
    if (Scalar* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * y[i];
    }
    if (Scalar* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * x[i];
    }
  });
}

Tensor add_row(const Tensor& x, const Tensor& row) {
  const std::size_t r = x.rows(), c = x.cols();
  if (row.numel() != c) {
    throw DimensionError("add_row: row " + shape_to_string(row.shape()) +
                         " does not match columns of " + shape_to_string(x.shape()));
  }
  auto in = x.data(), b = row.data();
  std::vector<Scalar> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = in[i * c + j] + b[j];
  return make_op(x.shape(), std::move(out), {&x, &row}, [r, c](Node& self) {
    if (Scalar* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < r * c; ++i) g[i] += self.grad[i];
    }
    if (Scalar* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[j] += self.grad[i * c + j];
    }
  });
}

Tensor scale_rows(const Tensor& x, const Tensor& s) {
  const std::size_t r = x.rows(), c = x.cols();
  if (s.numel() != r) {
    throw DimensionError("scale_rows: scale " + shape_to_string(s.shape()) +
                         " does not match rows of " + shape_to_string(x.shape()));
  }
  auto in = x.data(), f = s.data();
  std::vector<Scalar> out(r * c);
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) out[i * c + j] = in[i * c + j] * f[i];
  return make_op(x.shape(), std::move(out), {&x, &s}, [r, c](Node& self) {
    const Scalar* xin = value_of(self, 0);
    const Scalar* f = value_of(self, 1);
    if (Scalar* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) g[i * c + j] += self.grad[i * c + j] * f[i];
    }
    if (Scalar* g = grad_of(self, 1)) {
      for (std::size_t i = 0; i < r; ++i) {
        Scalar acc = 0;
        for (std::size_t j = 0; j < c; ++j) acc += self.grad[i * c + j] * xin[i * c + j];
        g[i] += acc;
      }
    }
  });
}

Tensor scale_by(const Tensor& x, const Tensor& s) {
  if (s.numel() != 1) {
    throw DimensionError("scale_by: expected single-element scale, got " +
                         shape_to_string(s.shape()));
  }
  const Scalar f = s.data()[0];
  auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t i = 0; i < in.size(); ++i) out[i] = in[i] * f;
  return make_op(x.shape(), std::move(out), {&x, &s}, [](Node& self) {
    const Scalar* xin = value_of(self, 0);
    const Scalar f = value_of(self, 1)[0];
    if (Scalar* g = grad_of(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * f;
    }
    if (Scalar* g = grad_of(self, 1)) {
      Scalar acc = 0;
      for (std::size_t i = 0; i < self.grad.size(); ++i) acc += self.grad[i] * xin[i];
      g[0] += acc;
    }
  });
}

Tensor affine(const Tensor& x, Scalar a, Scalar b) {
  return unary(
      x, [a, b](Scalar v) { return a * v + b; }, [a](Scalar, Scalar) { return a; });
}

Tensor sigmoid(const Tensor& x) {
  return unary(
      x,
      [](Scalar v) {
        if (v >= 0) return Scalar{1} / (Scalar{1} + std::exp(-v));
        const Scalar e = std::exp(v);
        return e / (Scalar{1} + e);
      },
      [](Scalar, Scalar y) { return y * (Scalar{1} - y); });
}

Tensor tanh(const Tensor& x) {
  return unary(
      x, [](Scalar v) { return std::tanh(v); },
      [](Scalar, Scalar y) { return Scalar{1} - y * y; });
}

Tensor relu(const Tensor& x) {
  return unary(
      x, [](Scalar v) { return v > 0 ? v : Scalar{0}; },
      [](Scalar v, Scalar) { return v > 0 ? Scalar{1} : Scalar{0}; });
}

Tensor log(const Tensor& x, Scalar floor) {
  return unary(
      x, [floor](Scalar v) { return std::log(std::max(v, floor)); },
      [floor](Scalar v, Scalar) { return v > floor ? Scalar{1} / v : Scalar{0}; });
}

Tensor softmax(const Tensor& x, int axis) {
  if (axis != 0 && axis != 1 && axis != -1) {
    throw ContractError("softmax: axis must be 0, 1 or -1, got " + std::to_string(axis));
  }
  check_nan(x.data(), "softmax");
  const std::size_t r = x.rows(), c = x.cols();
  // Row-wise over a (outer x inner) layout with a stride between elements.
  const bool rowwise = axis != 0;
  const std::size_t outer = rowwise ? r : c;
  const std::size_t inner = rowwise ? c : r;
  const std::size_t stride = rowwise ? 1 : c;
  const std::size_t step = rowwise ? c : 1;
  auto in = x.data();
  std::vector<Scalar> out(in.size());
  for (std::size_t o = 0; o < outer; ++o) {
    const std::size_t base = o * step;
    Scalar mx = -std::numeric_limits<Scalar>::infinity();
    for (std::size_t i = 0; i < inner; ++i) mx = std::max(mx, in[base + i * stride]);
    if (!std::isfinite(mx)) throw NumericError("softmax: non-finite maximum");
    Scalar total = 0;
    for (std::size_t i = 0; i < inner; ++i) {
      const Scalar e = std::exp(in[base + i * stride] - mx);
      out[base + i * stride] = e;
      total += e;
    }
    for (std::size_t i = 0; i < inner; ++i) out[base + i * stride] /= total;
  }
  return make_op(x.shape(), std::move(out), {&x}, [outer, inner, stride, step](Node& self) {
    Scalar* gx = grad_of(self, 0);
    if (!gx) return;
    const Scalar* y = self.value.data();
    const Scalar* g = self.grad.data();
    for (std::size_t o = 0; o < outer; ++o) {
      const std::size_t base = o * step;
      Scalar dot = 0;
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = base + i * stride;
        dot += g[k] * y[k];
      }
      for (std::size_t i = 0; i < inner; ++i) {
        const std::size_t k = base + i * stride;
        gx[k] += y[k] * (g[k] - dot);
      }
    }
  });
}

namespace {

Tensor layer_norm_impl(const Tensor& x, const Tensor* gamma, const Tensor* beta, Scalar eps) {
  const std::size_t r = x.rows(), c = x.cols();
  if (gamma && (gamma->numel() != c || beta->numel() != c)) {
    throw DimensionError("layer_norm: affine parameters do not match " +
                         shape_to_string(x.shape()));
  }
  auto in = x.data();
  auto xhat = std::make_shared<std::vector<Scalar>>(r * c);
  auto inv_std = std::make_shared<std::vector<Scalar>>(r);
  std::vector<Scalar> out(r * c);
  const Scalar* gm = gamma ? gamma->data().data() : nullptr;
  const Scalar* bt = beta ? beta->data().data() : nullptr;
  for (std::size_t i = 0; i < r; ++i) {
    const Scalar* row = in.data() + i * c;
    Scalar mu = 0;
    for (std::size_t j = 0; j < c; ++j) mu += row[j];
    mu /= static_cast<Scalar>(c);
    Scalar var = 0;
    for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<Scalar>(c);
    const Scalar is = Scalar{1} / std::sqrt(var + eps);
    (*inv_std)[i] = is;
    for (std::size_t j = 0; j < c; ++j) {
      const Scalar h = (row[j] - mu) * is;
      (*xhat)[i * c + j] = h;
      out[i * c + j] = gm ? gm[j] * h + bt[j] : h;
    }
  }
  auto fn = [r, c, xhat, inv_std, affine = gamma != nullptr](Node& self) {
    const Scalar* g = self.grad.data();
    const Scalar* gm = affine ? value_of(self, 1) : nullptr;
    if (Scalar* gx = grad_of(self, 0)) {
      std::vector<Scalar> dh(c);
      for (std::size_t i = 0; i < r; ++i) {
        Scalar mean_dh = 0, mean_dh_h = 0;
        for (std::size_t j = 0; j < c; ++j) {
          dh[j] = g[i * c + j] * (gm ? gm[j] : Scalar{1});
          mean_dh += dh[j];
          mean_dh_h += dh[j] * (*xhat)[i * c + j];
        }
        mean_dh /= static_cast<Scalar>(c);
        mean_dh_h /= static_cast<Scalar>(c);
        for (std::size_t j = 0; j < c; ++j) {
          gx[i * c + j] +=
              (*inv_std)[i] * (dh[j] - mean_dh - (*xhat)[i * c + j] * mean_dh_h);
        }
      }
    }
    if (!affine) return;
    if (Scalar* gg = grad_of(self, 1)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gg[j] += g[i * c + j] * (*xhat)[i * c + j];
    }
    if (Scalar* gb = grad_of(self, 2)) {
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) gb[j] += g[i * c + j];
    }
  };
  if (gamma) return make_op(x.shape(), std::move(out), {&x, gamma, beta}, fn);
  return make_op(x.shape(), std::move(out), {&x}, fn);
}

}  // namespace

Tensor layer_norm(const Tensor& x, const Tensor& gamma, const Tensor& beta, Scalar eps) {
  return layer_norm_impl(x, &gamma, &beta, eps);
}

Tensor layer_norm(const Tensor& x, Scalar eps) { return layer_norm_impl(x, nullptr, nullptr, eps); }

Tensor sum(const Tensor& x) {
  Scalar total = 0;
  for (Scalar v : x.data()) total += v;
  return make_op({}, {total}, {&x}, [](Node& self) {
    Scalar* g = grad_of(self, 0);
    if (!g) return;
    const std::size_t n = self.parents[0]->value.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[0];
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean of empty tensor");
  const Scalar n = static_cast<Scalar>(x.numel());
  Scalar total = 0;
  for (Scalar v : x.data()) total += v;
  return make_op({}, {total / n}, {&x}, [n](Node& self) {
    Scalar* g = grad_of(self, 0);
    if (!g) return;
    const std::size_t count = self.parents[0]->value.size();
    for (std::size_t i = 0; i < count; ++i) g[i] += self.grad[0] / n;
  });
}

Tensor gather_rows(const Tensor& table, std::span<const std::size_t> index) {
  const std::size_t c = table.cols(), n_rows = table.rows();
  auto in = table.data();
  std::vector<Scalar> out(index.size() * c);
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n_rows) {
      throw ContractError("gather_rows: index " + std::to_string(index[i]) +
                          " out of range for " + std::to_string(n_rows) + " rows");
    }
    std::copy_n(in.data() + index[i] * c, c, out.data() + i * c);
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op(mat(index.size(), c), std::move(out), {&table},
                 [c, idx = std::move(idx)](Node& self) {
                   Scalar* g = grad_of(self, 0);
                   if (!g) return;
                   for (std::size_t i = 0; i < idx.size(); ++i)
                     for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += self.grad[i * c + j];
                 });
}

Tensor scatter_add_rows(const Tensor& src, std::span<const std::size_t> index,
                        std::size_t n_rows, std::span<const Scalar> weight) {
  const std::size_t c = src.cols();
  if (index.size() != src.rows()) {
    throw DimensionError("scatter_add_rows: " + std::to_string(index.size()) +
                         " indices for " + shape_to_string(src.shape()));
  }
  if (!weight.empty() && weight.size() != index.size()) {
    throw DimensionError("scatter_add_rows: weight count mismatch");
  }
  auto in = src.data();
  std::vector<Scalar> out(n_rows * c, Scalar{0});
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] >= n_rows) throw ContractError("scatter_add_rows: index out of range");
    const Scalar w = weight.empty() ? Scalar{1} : weight[i];
    for (std::size_t j = 0; j < c; ++j) out[index[i] * c + j] += w * in[i * c + j];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  std::vector<Scalar> wts(weight.begin(), weight.end());
  return make_op(mat(n_rows, c), std::move(out), {&src},
                 [c, idx = std::move(idx), wts = std::move(wts)](Node& self) {
                   Scalar* g = grad_of(self, 0);
                   if (!g) return;
                   for (std::size_t i = 0; i < idx.size(); ++i) {
                     const Scalar w = wts.empty() ? Scalar{1} : wts[i];
                     for (std::size_t j = 0; j < c; ++j) g[i * c + j] += w * self.grad[idx[i] * c + j];
                   }
                 });
}

Tensor scatter_add_cols(const Tensor& x, std::span<const std::size_t> index, std::size_t n_cols) {
  const std::size_t r = x.rows(), k = x.cols();
  if (index.size() != k) {
    throw DimensionError("scatter_add_cols: " + std::to_string(index.size()) +
                         " indices for " + shape_to_string(x.shape()));
  }
  auto in = x.data();
  std::vector<Scalar> out(r * n_cols, Scalar{0});
  for (std::size_t j = 0; j < k; ++j) {
    if (index[j] >= n_cols) throw ContractError("scatter_add_cols: index out of range");
  }
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < k; ++j) out[i * n_cols + index[j]] += in[i * k + j];
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op(mat(r, n_cols), std::move(out), {&x},
                 [r, k, n_cols, idx = std::move(idx)](Node& self) {
                   Scalar* g = grad_of(self, 0);
                   if (!g) return;
                   for (std::size_t i = 0; i < r; ++i)
                     for (std::size_t j = 0; j < k; ++j) g[i * k + j] += self.grad[i * n_cols + idx[j]];
                 });
}

Tensor pick(const Tensor& x, std::span<const std::size_t> index) {
  const std::size_t r = x.rows(), c = x.cols();
  if (index.size() != r) throw DimensionError("pick: one index per row required");
  auto in = x.data();
  std::vector<Scalar> out(r);
  for (std::size_t i = 0; i < r; ++i) {
    if (index[i] >= c) throw ContractError("pick: column index out of range");
    out[i] = in[i * c + index[i]];
  }
  std::vector<std::size_t> idx(index.begin(), index.end());
  return make_op(mat(r, 1), std::move(out), {&x}, [c, idx = std::move(idx)](Node& self) {
    Scalar* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < idx.size(); ++i) g[i * c + idx[i]] += self.grad[i];
  });
}

Tensor concat_rows(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_rows: no parts");
  const std::size_t c = parts.front().cols();
  std::size_t total = 0;
  std::vector<std::size_t> offsets;
  for (const auto& p : parts) {
    if (p.cols() != c) {
      throw DimensionError("concat_rows: column mismatch " + shape_to_string(p.shape()) +
                           " vs width " + std::to_string(c));
    }
    offsets.push_back(total);
    total += p.rows();
  }
  std::vector<Scalar> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return make_op_n(mat(total, c), std::move(out), parts, [c, offsets](Node& self) {
    for (std::size_t p = 0; p < offsets.size(); ++p) {
      Scalar* g = grad_of(self, p);
      if (!g) continue;
      const std::size_t n = self.parents[p]->value.size();
      for (std::size_t i = 0; i < n; ++i) g[i] += self.grad[offsets[p] * c + i];
    }
  });
}

Tensor concat_cols(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw ContractError("concat_cols: no parts");
  const std::size_t r = parts.front().rows();
  std::size_t total = 0;
  std::vector<std::size_t> offsets, widths;
  for (const auto& p : parts) {
    if (p.rows() != r) {
      throw DimensionError("concat_cols: row mismatch " + shape_to_string(p.shape()));
    }
    offsets.push_back(total);
    widths.push_back(p.cols());
    total += p.cols();
  }
  std::vector<Scalar> out(r * total);
  for (std::size_t p = 0; p < parts.size(); ++p) {
    auto in = parts[p].data();
    for (std::size_t i = 0; i < r; ++i)
      std::copy_n(in.data() + i * widths[p], widths[p], out.data() + i * total + offsets[p]);
  }
  return make_op_n(mat(r, total), std::move(out), parts, [r, total, offsets, widths](Node& self) {
    for (std::size_t p = 0; p < offsets.size(); ++p) {
      Scalar* g = grad_of(self, p);
      if (!g) continue;
      for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < widths[p]; ++j)
          g[i * widths[p] + j] += self.grad[i * total + offsets[p] + j];
    }
  });
}

Tensor slice_rows(const Tensor& x, std::size_t begin, std::size_t end) {
  const std::size_t c = x.cols();
  if (begin > end || end > x.rows()) {
    throw ContractError("slice_rows: range [" + std::to_string(begin) + ", " +
                        std::to_string(end) + ") outside " + shape_to_string(x.shape()));
  }
  auto in = x.data();
  std::vector<Scalar> out(in.begin() + begin * c, in.begin() + end * c);
  return make_op(mat(end - begin, c), std::move(out), {&x}, [begin, c](Node& self) {
    Scalar* g = grad_of(self, 0);
    if (!g) return;
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[begin * c + i] += self.grad[i];
  });
}

Tensor attention(const Tensor& q, const Tensor& k, const Tensor& v,
                 const AttentionOptions& options) {
  const std::size_t L = q.rows(), S = k.rows(), d = q.cols(), H = options.heads;
  if (k.rows() != v.rows()) {
    throw ContractError("attention: key length " + std::to_string(k.rows()) +
                        " differs from value length " + std::to_string(v.rows()));
  }
  if (k.cols() != d || v.cols() != d) {
    throw DimensionError("attention: width mismatch among " + shape_to_string(q.shape()) + ", " +
                         shape_to_string(k.shape()) + ", " + shape_to_string(v.shape()));
  }
  if (H == 0 || d % H != 0) {
    throw DimensionError("attention: width " + std::to_string(d) + " not divisible into " +
                         std::to_string(H) + " heads");
  }
  if (!options.key_valid.empty() && options.key_valid.size() != S) {
    throw DimensionError("attention: key mask length mismatch");
  }
  if (options.causal && L > S) throw ContractError("attention: causal with more queries than keys");
  const std::size_t dh = d / H;
  const Scalar scale = Scalar{1} / std::sqrt(static_cast<Scalar>(dh));
  const std::size_t offset = S - L;  // query i sits at key position i + offset

  auto weights = std::make_shared<std::vector<Scalar>>(H * L * S, Scalar{0});
  std::vector<Scalar> out(L * d, Scalar{0});
  const Scalar* Q = q.data().data();
  const Scalar* K = k.data().data();
  const Scalar* V = v.data().data();
  std::vector<Scalar> row(S);
  for (std::size_t h = 0; h < H; ++h) {
    const std::size_t c0 = h * dh;
    for (std::size_t i = 0; i < L; ++i) {
      Scalar mx = -std::numeric_limits<Scalar>::infinity();
      for (std::size_t s = 0; s < S; ++s) {
        const bool ok = (options.key_valid.empty() || options.key_valid[s]) &&
                        (!options.causal || s <= i + offset);
        if (!ok) {
          row[s] = -std::numeric_limits<Scalar>::infinity();
          continue;
        }
        Scalar dot = 0;
        for (std::size_t j = 0; j < dh; ++j) dot += Q[i * d + c0 + j] * K[s * d + c0 + j];
        row[s] = dot * scale;
        mx = std::max(mx, row[s]);
      }
      if (std::isnan(mx)) throw NumericError("attention: NaN score");
      Scalar* w = weights->data() + (h * L + i) * S;
      if (!std::isfinite(mx)) continue;  // every key masked: zero output row
      Scalar total = 0;
      for (std::size_t s = 0; s < S; ++s) {
        w[s] = std::isfinite(row[s]) ? std::exp(row[s] - mx) : Scalar{0};
        total += w[s];
      }
      for (std::size_t s = 0; s < S; ++s) w[s] /= total;
      for (std::size_t s = 0; s < S; ++s) {
        if (w[s] == 0) continue;
        for (std::size_t j = 0; j < dh; ++j) out[i * d + c0 + j] += w[s] * V[s * d + c0 + j];
      }
    }
  }
  if (options.weights_out) {
    options.weights_out->assign(H, {});
    for (std::size_t h = 0; h < H; ++h) {
      (*options.weights_out)[h].assign(weights->begin() + h * L * S,
                                       weights->begin() + (h + 1) * L * S);
    }
  }
  return make_op(mat(L, d), std::move(out), {&q, &k, &v},
                 [L, S, d, H, dh, scale, weights](Node& self) {
                   const Scalar* Q = value_of(self, 0);
                   const Scalar* K = value_of(self, 1);
                   const Scalar* V = value_of(self, 2);
                   Scalar* gq = grad_of(self, 0);
                   Scalar* gk = grad_of(self, 1);
                   Scalar* gv = grad_of(self, 2);
                   const Scalar* g = self.grad.data();
                   std::vector<Scalar> dw(S);
                   for (std::size_t h = 0; h < H; ++h) {
                     const std::size_t c0 = h * dh;
                     for (std::size_t i = 0; i < L; ++i) {
                       const Scalar* w = weights->data() + (h * L + i) * S;
                       Scalar dot = 0;
                       for (std::size_t s = 0; s < S; ++s) {
                         Scalar acc = 0;
                         for (std::size_t j = 0; j < dh; ++j) acc += g[i * d + c0 + j] * V[s * d + c0 + j];
                         dw[s] = acc;
                         dot += acc * w[s];
                         if (gv && w[s] != 0) {
                           for (std::size_t j = 0; j < dh; ++j) gv[s * d + c0 + j] += w[s] * g[i * d + c0 + j];
                         }
                       }
                       for (std::size_t s = 0; s < S; ++s) {
                         if (w[s] == 0) continue;
                         const Scalar ds = w[s] * (dw[s] - dot) * scale;
                         if (gq) {
                           for (std::size_t j = 0; j < dh; ++j) gq[i * d + c0 + j] += ds * K[s * d + c0 + j];
                         }
                         if (gk) {
                           for (std::size_t j = 0; j < dh; ++j) gk[s * d + c0 + j] += ds * Q[i * d + c0 + j];
                         }
                       }
                     }
                   }
                 });
}

Tensor additive_scores(const Tensor& p, const Tensor& q, const Tensor& va) {
  const std::size_t L = p.rows(), S = q.rows(), D = p.cols();
  if (q.cols() != D || va.numel() != D) {
    throw DimensionError("additive_scores: width mismatch among " + shape_to_string(p.shape()) +
                         ", " + shape_to_string(q.shape()) + ", " + shape_to_string(va.shape()));
  }
  auto t = std::make_shared<std::vector<Scalar>>(L * S * D);
  std::vector<Scalar> out(L * S, Scalar{0});
  const Scalar* P = p.data().data();
  const Scalar* Qm = q.data().data();
  const Scalar* A = va.data().data();
  for (std::size_t w = 0; w < L; ++w) {
    for (std::size_t s = 0; s < S; ++s) {
      Scalar* tt = t->data() + (w * S + s) * D;
      Scalar acc = 0;
      for (std::size_t j = 0; j < D; ++j) {
        tt[j] = std::tanh(P[w * D + j] + Qm[s * D + j]);
        acc += A[j] * tt[j];
      }
      out[w * S + s] = acc;
    }
  }
  return make_op(mat(L, S), std::move(out), {&p, &q, &va}, [L, S, D, t](Node& self) {
    const Scalar* A = value_of(self, 2);
    Scalar* gp = grad_of(self, 0);
    Scalar* gq = grad_of(self, 1);
    Scalar* ga = grad_of(self, 2);
    for (std::size_t w = 0; w < L; ++w) {
      for (std::size_t s = 0; s < S; ++s) {
        const Scalar g = self.grad[w * S + s];
        const Scalar* tt = t->data() + (w * S + s) * D;
        for (std::size_t j = 0; j < D; ++j) {
          if (ga) ga[j] += g * tt[j];
          const Scalar dz = g * A[j] * (Scalar{1} - tt[j] * tt[j]);
          if (gp) gp[w * D + j] += dz;
          if (gq) gq[s * D + j] += dz;
        }
      }
    }
  });
}

}  // namespace dmkcm::ops
