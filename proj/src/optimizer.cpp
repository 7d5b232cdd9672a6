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

#include "mcout/optimizer.hpp"

#include <cmath>

#include "mcout/errors.hpp"

namespace mcout {

AdamW::AdamW(std::vector<std::pair<std::string, Tensor>> params, AdamWConfig config)
    : params_(std::move(params)), config_(config) {
  for (const auto& [name, p] : params_) {
    if (!p.is_leaf()) throw ContractError("optimizer: '" + name + "' is not a leaf");
    m_.emplace_back(p.numel(), 0.0);
    v_.emplace_back(p.numel(), 0.0);
  }
}

double AdamW::grad_norm() const {
  double sq = 0.0;
  for (const auto& [name, p] : params_) {
    if (!p.has_grad()) continue;
    for (double g : p.grad()) sq += g * g;
  }
  return std::sqrt(sq);
}

void AdamW::step(double lr, double grad_scale) {
  ++step_;
  const double t = static_cast<double>(step_);
  const double c1 = 1.0 - std::pow(config_.beta1, t);
  const double c2 = 1.0 - std::pow(config_.beta2, t);
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& p = params_[i].second;
    auto w = p.mutable_values();
    const bool has = p.has_grad();
    const auto g = has ? p.grad() : std::span<const double>{};
    auto& m = m_[i];
    auto& v = v_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      const double gj = has ? g[j] * grad_scale : 0.0;
      m[j] = config_.beta1 * m[j] + (1.0 - config_.beta1) * gj;
      v[j] = config_.beta2 * v[j] + (1.0 - config_.beta2) * gj * gj;
      const double update = (m[j] / c1) / (std::sqrt(v[j] / c2) + config_.eps);
      w[j] -= lr * (config_.weight_decay * w[j] + update);
    }
    round_to_precision(w);
  }
}

void AdamW::save(Checkpoint& ckpt) const {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, p] = params_[i];
    ckpt.tensors.push_back({"adam.m." + name, DType::F64, p.shape(), m_[i]});
    ckpt.tensors.push_back({"adam.v." + name, DType::F64, p.shape(), v_[i]});
  }
}

void AdamW::load(const Checkpoint& ckpt, std::uint64_t steps) {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    const auto& [name, p] = params_[i];
    for (auto [prefix, dst] : {std::pair{std::string("adam.m."), &m_[i]}, std::pair{std::string("adam.v."), &v_[i]}}) {
      const CheckpointTensor* t = ckpt.find(prefix + name);
      if (!t) throw FormatError("checkpoint: missing optimizer state '" + prefix + name + "'");
      if (t->shape != p.shape())
        throw FormatError("checkpoint: optimizer state '" + t->name + "' has the wrong shape");
      *dst = t->data;
    }
  }
  step_ = steps;
}

}  // namespace mcout
