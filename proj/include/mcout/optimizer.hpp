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

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "mcout/checkpoint.hpp"
#include "mcout/tensor.hpp"

namespace mcout {

struct AdamWConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.05;
};

/// Adam moments with decoupled weight decay: p <- p - lr * (wd * p +
/// m_hat / (sqrt(v_hat) + eps)).
class AdamW {
 public:
  AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig config);

  /// Global L2 norm of the current gradients (missing gradients count as 0).
  double grad_norm() const;
  /// One update. Gradients are multiplied by `grad_scale` first; parameters
  /// are rounded to the active precision afterwards.
  void step(double lr, double grad_scale = 1.0);

  std::uint64_t steps() const { return step_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& second_moments() const { return v_; }

  /// Moments as "adam.m.<name>" and "adam.v.<name>" float64 tensors.
  void save(Checkpoint& ckpt) const;
  void load(const Checkpoint& ckpt, std::uint64_t steps);

 private:
  std::vector<std::pair<std::string, Tensor>> params_;
  AdamWConfig config_;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> v_;
  std::uint64_t step_ = 0;
};

}  // namespace mcout
