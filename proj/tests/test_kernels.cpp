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

#include <doctest.h>

#include <cstring>
#include <vector>

#include "mcout/kernels.hpp"
#include "mcout/random.hpp"

using namespace mcout;

namespace {

std::vector<double> random_values(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = standard_normal(rng);
  return v;
}

bool same_bits(const std::vector<double>& x, const std::vector<double>& y) {
  return x.size() == y.size() && std::memcmp(x.data(), y.data(), x.size() * sizeof(double)) == 0;
}

// Textbook triple loop, summing over p in ascending order.
double naive(const std::vector<double>& a, const std::vector<double>& b, std::size_t i,
             std::size_t j, std::size_t k, std::size_t m, std::size_t n, char kind) {
  double acc = 0.0;
  for (std::size_t p = 0; p < k; ++p) {
    const double av = kind == 't' ? a[p * m + i] : a[i * k + p];
    const double bv = kind == 'T' ? b[j * k + p] : b[p * n + j];
    acc += av * bv;
  }
  return acc;
}

}  // namespace

TEST_CASE("parallel gemm variants match the serial reference bit for bit") {
  // Shapes straddle the tile sizes and the parallel threshold.
  const std::size_t dims[][4] = {{1, 1, 1, 1},   {3, 5, 7, 9},    {2, 4, 8, 8},
                                 {4, 13, 64, 17}, {8, 64, 64, 64}, {1, 130, 33, 70}};
  for (const auto& d : dims) {
    const std::size_t batch = d[0], m = d[1], k = d[2], n = d[3];
    for (bool broadcast_b : {false, true}) {
      kernels::GemmShape s{batch, m, k, n, m * k, broadcast_b ? 0 : k * n, m * n};
      const auto a = random_values(batch * m * k, 1);
      const auto b = random_values(batch * k * n, 2);
      const auto c0 = random_values(batch * m * n, 3);
      for (bool acc : {false, true}) {
        auto c1 = c0, c2 = c0;
        kernels::gemm_nn(s, a.data(), b.data(), c1.data(), acc);
        kernels::serial::gemm_nn(s, a.data(), b.data(), c2.data(), acc);
        CHECK(same_bits(c1, c2));

        c1 = c0, c2 = c0;
        kernels::gemm_nt(s, a.data(), b.data(), c1.data(), acc);
        kernels::serial::gemm_nt(s, a.data(), b.data(), c2.data(), acc);
        CHECK(same_bits(c1, c2));

        c1 = c0, c2 = c0;
        kernels::GemmShape t = s;
        t.stride_a = k * m;
        kernels::gemm_tn(t, a.data(), b.data(), c1.data(), acc);
        kernels::serial::gemm_tn(t, a.data(), b.data(), c2.data(), acc);
        CHECK(same_bits(c1, c2));
      }
    }
  }
}

TEST_CASE("gemm agrees with a textbook triple loop") {
  const std::size_t m = 6, k = 11, n = 10;
  kernels::GemmShape s{1, m, k, n, m * k, k * n, m * n};
  const auto a = random_values(m * k, 4), b = random_values(k * n, 5);
  std::vector<double> c(m * n);
  kernels::gemm_nn(s, a.data(), b.data(), c.data(), false);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      CHECK(c[i * n + j] == doctest::Approx(naive(a, b, i, j, k, m, n, 'n')).epsilon(1e-12));

  kernels::gemm_nt(s, a.data(), b.data(), c.data(), false);  // b read as n x k
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      CHECK(c[i * n + j] == doctest::Approx(naive(a, b, i, j, k, m, n, 'T')).epsilon(1e-12));

  kernels::gemm_tn(s, a.data(), b.data(), c.data(), false);  // a read as k x m
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j)
      CHECK(c[i * n + j] == doctest::Approx(naive(a, b, i, j, k, m, n, 't')).epsilon(1e-12));
}

TEST_CASE("softmax and layer norm rows match the serial versions") {
  for (std::size_t rows : {1u, 7u, 600u}) {
    const std::size_t n = 64;
    const auto x = random_values(rows * n, 6);
    std::vector<double> y1(rows * n), y2(rows * n);
    kernels::softmax_rows(x, y1, rows, n);
    kernels::serial::softmax_rows(x, y2, rows, n);
    CHECK(same_bits(y1, y2));
    for (std::size_t r = 0; r < rows; ++r) {
      double total = 0.0;
      for (std::size_t j = 0; j < n; ++j) total += y1[r * n + j];
      CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
    }

    const auto gain = random_values(n, 7), bias = random_values(n, 8);
    std::vector<double> h1(rows * n), h2(rows * n), r1(rows), r2(rows);
    kernels::layer_norm_rows(x, gain, bias, y1, h1, r1, rows, n, 1e-5);
    kernels::serial::layer_norm_rows(x, gain, bias, y2, h2, r2, rows, n, 1e-5);
    CHECK(same_bits(y1, y2));
    CHECK(same_bits(h1, h2));
    CHECK(same_bits(r1, r2));
  }
}

TEST_CASE("softmax is shift invariant and survives large inputs") {
  std::vector<double> x{1000.0, 1001.0, 999.0}, y(3), z(3);
  kernels::softmax_rows(x, y, 1, 3);
  std::vector<double> shifted{0.0, 1.0, -1.0};
  kernels::softmax_rows(shifted, z, 1, 3);
  for (int i = 0; i < 3; ++i) CHECK(y[i] == doctest::Approx(z[i]).epsilon(1e-15));
}
