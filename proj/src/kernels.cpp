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

#include "mcout/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <vector>

namespace mcout::kernels {

namespace {

// Below this many multiply-adds a parallel region costs more than it saves.
constexpr std::size_t kParallelWork = 1u << 15;

// Reference rows: one output row at a time, summing over p in ascending order.
inline void row_nn(const double* a_row, const double* b, double* c_row,
                   std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a_row[p];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

inline void row_nt(const double* a_row, const double* b, double* c_row,
                   std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* b_row = b + j * k;
    double acc = 0.0;
    for (std::size_t p = 0; p < k; ++p) acc += a_row[p] * b_row[p];
    c_row[j] = accumulate ? c_row[j] + acc : acc;
  }
}

// Row i of A^T * B: sum over p of A[p][i] * B[p][:].
inline void row_tn(const double* a, std::size_t i, std::size_t m,
                   const double* b, double* c_row, std::size_t k,
                   std::size_t n, bool accumulate) {
  if (!accumulate) std::fill(c_row, c_row + n, 0.0);
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p * m + i];
    const double* b_row = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c_row[j] += av * b_row[j];
  }
}

// Register tiles for the parallel kernels. Each output element still sees
// the same additions in the same order as in the reference rows above.

// Four doubles; lowered to whatever vector width the target has. Lanes are
// independent, so every element still gets its additions in order.
using Vec4 = double __attribute__((vector_size(32)));

inline Vec4 load4(const double* p) {
  Vec4 v;
  std::memcpy(&v, p, sizeof v);
  return v;
}

inline void store4(double* p, Vec4 v) { std::memcpy(p, &v, sizeof v); }

// 4 x 8 tile of C = A * B at (i, j). A(r, p) = a[r * a_row + p * a_col], B
// rows are contiguous with stride n. With AddAfter the sum starts from zero
// and is added to C at the end (the A * B^T reference order); otherwise it
// starts from C when accumulating.
template <bool AddAfter>
inline void tile4x8(const double* a, std::size_t a_row, std::size_t a_col, const double* b,
                    double* c, std::size_t j, std::size_t k, std::size_t n,
                    bool accumulate) {
  Vec4 acc[4][2];
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t h = 0; h < 2; ++h)
      acc[r][h] = accumulate && !AddAfter ? load4(c + r * n + j + 4 * h) : Vec4{};
  for (std::size_t p = 0; p < k; ++p) {
    const Vec4 b0 = load4(b + p * n + j);
    const Vec4 b1 = load4(b + p * n + j + 4);
    for (std::size_t r = 0; r < 4; ++r) {
      const double av = a[r * a_row + p * a_col];
      acc[r][0] += av * b0;
      acc[r][1] += av * b1;
    }
  }
  for (std::size_t r = 0; r < 4; ++r)
    for (std::size_t h = 0; h < 2; ++h) {
      double* dst = c + r * n + j + 4 * h;
      store4(dst, accumulate && AddAfter ? load4(dst) + acc[r][h] : acc[r][h]);
    }
}

// One element, same conventions.
template <bool AddAfter>
inline void tile1(const double* a, std::size_t a_col, const double* b, double* c,
                  std::size_t j, std::size_t k, std::size_t n, bool accumulate) {
  double acc = accumulate && !AddAfter ? c[j] : 0.0;
  for (std::size_t p = 0; p < k; ++p) acc += a[p * a_col] * b[p * n + j];
  c[j] = accumulate && AddAfter ? c[j] + acc : acc;
}

constexpr std::size_t kTileRows = 4;
constexpr std::size_t kTileCols = 8;

// Column sweep over one block of `rows` <= kTileRows output rows: full
// tiles where possible, single elements elsewhere.
template <typename Block, typename Single>
inline void tiled_rows(std::size_t rows, std::size_t n, std::size_t width, Block block,
                       Single single) {
  std::size_t j = 0;
  if (rows == kTileRows)
    for (; j + width <= n; j += width) block(j);
  for (; j < n; ++j)
    for (std::size_t r = 0; r < rows; ++r) single(r, j);
}

inline void softmax_row(const double* x, double* y, std::size_t n) {
  double mx = x[0];
  for (std::size_t j = 1; j < n; ++j) mx = std::max(mx, x[j]);
  double total = 0.0;
  for (std::size_t j = 0; j < n; ++j) {
    y[j] = std::exp(x[j] - mx);
    total += y[j];
  }
  const double inv = 1.0 / total;
  for (std::size_t j = 0; j < n; ++j) y[j] *= inv;
}

inline void layer_norm_row(const double* x, const double* gain,
                           const double* bias, double* y, double* xhat,
                           double* rstd, std::size_t dim, double eps) {
  double mean = 0.0;
  for (std::size_t j = 0; j < dim; ++j) mean += x[j];
  mean /= static_cast<double>(dim);
  double var = 0.0;
  for (std::size_t j = 0; j < dim; ++j) {
    const double d = x[j] - mean;
    var += d * d;
  }
  var /= static_cast<double>(dim);
  const double r = 1.0 / std::sqrt(var + eps);
  *rstd = r;
  for (std::size_t j = 0; j < dim; ++j) {
    xhat[j] = (x[j] - mean) * r;
    y[j] = xhat[j] * gain[j] + bias[j];
  }
}

}  // namespace

void gemm_nn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate) {
  const std::size_t blocks = (s.m + kTileRows - 1) / kTileRows;
  const bool par = s.batch * s.m * s.k * s.n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(s.batch * blocks); ++t) {
    const std::size_t bi = static_cast<std::size_t>(t) / blocks;
    const std::size_t i = static_cast<std::size_t>(t) % blocks * kTileRows;
    const double* ab = a + bi * s.stride_a;
    const double* bb = b + bi * s.stride_b;
    double* cb = c + bi * s.stride_c;
    const std::size_t rows = std::min(kTileRows, s.m - i);
    tiled_rows(
        rows, s.n, kTileCols,
        [&](std::size_t j) {
          tile4x8<false>(ab + i * s.k, s.k, 1, bb, cb + i * s.n, j, s.k, s.n, accumulate);
        },
        [&](std::size_t r, std::size_t j) {
          tile1<false>(ab + (i + r) * s.k, 1, bb, cb + (i + r) * s.n, j, s.k, s.n, accumulate);
        });
  }
}

void gemm_nt(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate) {
  // Transposing B first lets the contiguous A * B tiles do the work.
  const std::size_t b_count = s.stride_b == 0 ? 1 : s.batch;
  std::vector<double> bt(b_count * s.k * s.n);
  const bool par = s.batch * s.m * s.k * s.n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(b_count * s.n); ++t) {
    const std::size_t bi = static_cast<std::size_t>(t) / s.n;
    const std::size_t j = static_cast<std::size_t>(t) % s.n;
    const double* src = b + bi * s.stride_b + j * s.k;
    double* dst = bt.data() + bi * s.k * s.n + j;
    for (std::size_t p = 0; p < s.k; ++p) dst[p * s.n] = src[p];
  }
  const std::size_t blocks = (s.m + kTileRows - 1) / kTileRows;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(s.batch * blocks); ++t) {
    const std::size_t bi = static_cast<std::size_t>(t) / blocks;
    const std::size_t i = static_cast<std::size_t>(t) % blocks * kTileRows;
    const double* ab = a + bi * s.stride_a;
    const double* bb = bt.data() + (s.stride_b == 0 ? 0 : bi * s.k * s.n);
    double* cb = c + bi * s.stride_c;
    const std::size_t rows = std::min(kTileRows, s.m - i);
    tiled_rows(
        rows, s.n, kTileCols,
        [&](std::size_t j) {
          tile4x8<true>(ab + i * s.k, s.k, 1, bb, cb + i * s.n, j, s.k, s.n, accumulate);
        },
        [&](std::size_t r, std::size_t j) {
          tile1<true>(ab + (i + r) * s.k, 1, bb, cb + (i + r) * s.n, j, s.k, s.n, accumulate);
        });
  }
}

void gemm_tn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate) {
  const std::size_t blocks = (s.m + kTileRows - 1) / kTileRows;
  const bool par = s.batch * s.m * s.k * s.n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t t = 0; t < static_cast<std::int64_t>(s.batch * blocks); ++t) {
    const std::size_t bi = static_cast<std::size_t>(t) / blocks;
    const std::size_t i = static_cast<std::size_t>(t) % blocks * kTileRows;
    const double* ab = a + bi * s.stride_a;
    const double* bb = b + bi * s.stride_b;
    double* cb = c + bi * s.stride_c;
    const std::size_t rows = std::min(kTileRows, s.m - i);
    tiled_rows(
        rows, s.n, kTileCols,
        [&](std::size_t j) {
          tile4x8<false>(ab + i, 1, s.m, bb, cb + i * s.n, j, s.k, s.n, accumulate);
        },
        [&](std::size_t r, std::size_t j) {
          tile1<false>(ab + i + r, s.m, bb, cb + (i + r) * s.n, j, s.k, s.n, accumulate);
        });
  }
}

void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t rows, std::size_t n) {
  const bool par = rows * n >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const auto off = static_cast<std::size_t>(r) * n;
    softmax_row(x.data() + off, y.data() + off, n);
  }
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> xhat, std::span<double> rstd,
                     std::size_t rows, std::size_t dim, double eps) {
  const bool par = rows * dim >= kParallelWork;
#pragma omp parallel for schedule(static) if (par)
  for (std::int64_t r = 0; r < static_cast<std::int64_t>(rows); ++r) {
    const auto ri = static_cast<std::size_t>(r);
    const auto off = ri * dim;
    layer_norm_row(x.data() + off, gain.data(), bias.data(), y.data() + off,
                   xhat.data() + off, rstd.data() + ri, dim, eps);
  }
}

namespace serial {

void gemm_nn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t bi = 0; bi < s.batch; ++bi)
    for (std::size_t i = 0; i < s.m; ++i)
      row_nn(a + bi * s.stride_a + i * s.k, b + bi * s.stride_b,
             c + bi * s.stride_c + i * s.n, s.k, s.n, accumulate);
}

void gemm_nt(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t bi = 0; bi < s.batch; ++bi)
    for (std::size_t i = 0; i < s.m; ++i)
      row_nt(a + bi * s.stride_a + i * s.k, b + bi * s.stride_b,
             c + bi * s.stride_c + i * s.n, s.k, s.n, accumulate);
}

void gemm_tn(const GemmShape& s, const double* a, const double* b, double* c,
             bool accumulate) {
  for (std::size_t bi = 0; bi < s.batch; ++bi)
    for (std::size_t i = 0; i < s.m; ++i)
      row_tn(a + bi * s.stride_a, i, s.m, b + bi * s.stride_b,
             c + bi * s.stride_c + i * s.n, s.k, s.n, accumulate);
}

void softmax_rows(std::span<const double> x, std::span<double> y,
                  std::size_t rows, std::size_t n) {
  for (std::size_t r = 0; r < rows; ++r)
    softmax_row(x.data() + r * n, y.data() + r * n, n);
}

void layer_norm_rows(std::span<const double> x, std::span<const double> gain,
                     std::span<const double> bias, std::span<double> y,
                     std::span<double> xhat, std::span<double> rstd,
                     std::size_t rows, std::size_t dim, double eps) {
  for (std::size_t r = 0; r < rows; ++r)
    layer_norm_row(x.data() + r * dim, gain.data(), bias.data(),
                   y.data() + r * dim, xhat.data() + r * dim, rstd.data() + r,
                   dim, eps);
}

}  // namespace serial

}  // namespace mcout::kernels
