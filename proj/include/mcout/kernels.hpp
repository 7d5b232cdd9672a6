/*
 *   Copyright 2026 The mcout Authors
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
#include <span>

// Dense row-major kernels used by the autodiff engine. Every kernel exists
// twice: the OpenMP version in `mcout::kernels` and a plain loop version in
// `mcout::kernels::serial`. Both compute each output element with the same
// summation order, so their results agree bit for bit; the serial versions
// are kept for tests and for the benchmark.

namespace mcout::kernels {

/// Batched C[b] (+)= A[b] * B[b] with A: m x k, B: k x n, C: m x n.
/// A stride of zero broadcasts that operand across the batch.
struct GemmShape {
  std::size_t batch = 1;
  std::size_t m = 0;
  std::size_t k = 0;
  std::size_t n = 0;
  std::size_t stride_a = 0;
  std::size_t stride_b = 0;
  std::size_t stride_c = 0;
};

void gemm_nn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate);
/// C[b] (+)= A[b] * B[b]^T with A: m x k, B: n x k.
void gemm_nt(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate);
/// C[b] (+)= A[b]^T * B[b] with A: k x m, B: k x n.
void gemm_tn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate);

/// Row-wise max-shifted softmax over `rows` rows of length `n`.
void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t rows, std::size_t n);

/// Row-wise layer normalization. Writes the normalized rows before the
/// affine map to `xhat` and the reciprocal standard deviation to `rstd`.
void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> xhat, std::span<double> rstd,
                     std::size_t rows, std::size_t dim, double eps);

namespace serial {

void gemm_nn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_nt(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate);
void gemm_tn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate);
void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t rows, std::size_t n);
void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> xhat, std::span<double> rstd,
                     std::size_t rows, std::size_t dim, double eps);

}  // namespace serial

}  // namespace mcout::kernels
