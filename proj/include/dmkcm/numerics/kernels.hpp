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

#include "dmkcm/numerics/tensor.hpp"

// Row-major accumulate-into GEMM kernels. Each output element is summed over
// the inner index in ascending order regardless of how many rows are
// computed, so a single-row product matches the corresponding row of a
// full product bit for bit.
namespace dmkcm::kernels {

/// C(m,n) += A(m,k) * B(k,n)
inline void gemm_nn(const Scalar* a, const Scalar* b, Scalar* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    Scalar* ci = c + i * n;
    const Scalar* ai = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      const Scalar av = ai[p];
      const Scalar* bp = b + p * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

/// C(m,n) += A(m,k) * B(n,k)^T
inline void gemm_nt(const Scalar* a, const Scalar* b, Scalar* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    const Scalar* ai = a + i * k;
    for (std::size_t j = 0; j < n; ++j) {
      const Scalar* bj = b + j * k;
      Scalar acc = 0;
      for (std::size_t p = 0; p < k; ++p) acc += ai[p] * bj[p];
      c[i * n + j] += acc;
    }
  }
}

/// C(m,n) += A(k,m)^T * B(k,n)
inline void gemm_tn(const Scalar* a, const Scalar* b, Scalar* c, std::size_t m, std::size_t k,
                    std::size_t n) {
  for (std::size_t p = 0; p < k; ++p) {
    const Scalar* ap = a + p * m;
    const Scalar* bp = b + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const Scalar av = ap[i];
      if (av == Scalar{0}) continue;
      Scalar* ci = c + i * n;
      for (std::size_t j = 0; j < n; ++j) ci[j] += av * bp[j];
    }
  }
}

}  // namespace dmkcm::kernels
