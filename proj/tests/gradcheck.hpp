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

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "mcout/random.hpp"
#include "mcout/tensor.hpp"

namespace mcout::testing {

struct GradCheck {
  bool ok = true;
  double worst_excess = 0.0;  // largest |a - n| - tolerance seen
  std::string worst;
  std::size_t checked = 0;
};

/// Compares reverse-mode gradients of `f` with central differences,
/// element by element: |a - n| <= rtol * max(|a|, |n|) + atol. Tensors with
/// more than `max_per_input` elements are checked on a random subset.
/// Call under PrecisionScope(Precision::F64).
inline GradCheck check_gradients(const std::vector<Tensor>& inputs,
                                 const std::function<Tensor()>& f, double rtol,
                                 double h = 1e-5, double atol = 1e-8,
                                 std::size_t max_per_input = 0, std::uint64_t seed = 0) {
  for (Tensor t : inputs) t.zero_grad();
  f().backward();
  std::vector<std::vector<double>> analytic;
  for (const auto& t : inputs) {
    if (t.has_grad()) {
      analytic.emplace_back(t.grad().begin(), t.grad().end());
    } else {
      analytic.emplace_back(t.numel(), 0.0);
    }
  }
  GradCheck out;
  Rng rng(seed);
  NoGradGuard no_grad;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    Tensor t = inputs[i];
    auto v = t.mutable_values();
    std::vector<std::size_t> idx(v.size());
    for (std::size_t j = 0; j < idx.size(); ++j) idx[j] = j;
    if (max_per_input && idx.size() > max_per_input) {
      for (std::size_t j = 0; j < max_per_input; ++j)
        std::swap(idx[j], idx[j + uniform_index(rng, idx.size() - j)]);
      idx.resize(max_per_input);
    }
    for (std::size_t j : idx) {
      const double saved = v[j];
      v[j] = saved + h;
      const double fp = f().item();
      v[j] = saved - h;
      const double fm = f().item();
      v[j] = saved;
      const double num = (fp - fm) / (2.0 * h);
      const double a = analytic[i][j];
      const double excess = std::fabs(a - num) - (rtol * std::max(std::fabs(a), std::fabs(num)) + atol);
      ++out.checked;
      if (excess > out.worst_excess || (out.ok && excess > 0.0)) {
        out.worst_excess = std::max(out.worst_excess, excess);
        out.worst = "input " + std::to_string(i) + " element " + std::to_string(j) +
                    ": analytic " + std::to_string(a) + " numeric " + std::to_string(num);
      }
      if (excess > 0.0) out.ok = false;
    }
  }
  return out;
}

inline Tensor random_tensor(Shape shape, std::uint64_t seed, bool requires_grad = true,
                            double scale = 1.0) {
  Rng rng(seed);
  std::vector<double> v(numel(shape));
  for (auto& x : v) x = scale * standard_normal(rng);
  return Tensor::from_values(std::move(shape), std::move(v), requires_grad);
}

}  // namespace mcout::testing
