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
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "mcout/errors.hpp"

namespace mcout {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Storage precision of op results. Values are always held as doubles; in
/// F32 mode every op rounds its outputs to the nearest float so the numbers
/// a model sees are exactly the float32 ones. F64 is used for gradient checks.
enum class Precision { F32, F64 };

void set_precision(Precision p);
Precision precision();

/// Rounds `values` in place according to the current precision.
void round_to_precision(std::span<double> values);

/// RAII switch for the global precision, restored on scope exit.
class PrecisionScope {
 public:
  explicit PrecisionScope(Precision p) : previous_(precision()) {
    set_precision(p);
  }
  ~PrecisionScope() { set_precision(previous_); }
  PrecisionScope(const PrecisionScope&) = delete;
  PrecisionScope& operator=(const PrecisionScope&) = delete;

 private:
  Precision previous_;
};

/// Graph recording is per thread. While a guard is alive, new op results
/// carry no parents and no gradient.
bool grad_enabled();

class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

/// Sets the recording mode for the current thread until scope exit.
class GradModeScope {
 public:
  explicit GradModeScope(bool enabled);
  ~GradModeScope();
  GradModeScope(const GradModeScope&) = delete;
  GradModeScope& operator=(const GradModeScope&) = delete;

 private:
  bool previous_;
};

namespace detail {
struct Node;
}

/// Handle to a node of the computation graph. Copies share the node.
/// Values are immutable once an op has produced them; only leaves (tensors
/// built from data, such as parameters) expose mutable storage.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_values(Shape shape, std::vector<double> values,
                            bool requires_grad = false);
  static Tensor scalar(double value);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  /// Negative indices count from the back.
  std::size_t dim(int axis) const;
  std::size_t numel() const;

  std::span<const double> values() const;
  double item() const;

  /// Leaf-only writable view, used by optimizers and gradient checks.
  std::span<double> mutable_values();
  bool is_leaf() const;

  bool requires_grad() const;
  void set_requires_grad(bool flag);
  bool has_grad() const;
  std::span<const double> grad() const;
  void zero_grad();

  /// A new leaf holding a copy of the values, cut off from the graph.
  Tensor detach() const;

  /// Reverse-mode sweep from this scalar. A graph can be differentiated
  /// once; a second call on any part of it throws ContractError.
  void backward() const;

  detail::Node* node() const { return node_.get(); }

 private:
  friend struct TensorAccess;
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}
  std::shared_ptr<detail::Node> node_;
};

using TokenId = std::int32_t;

// --- elementwise ---------------------------------------------------------

/// Elementwise sum. `b` may also match a trailing suffix of `a`'s shape
/// (or vice versa), in which case it is broadcast over the leading dims.
Tensor add(const Tensor& a, const Tensor& b);
Tensor multiply(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double factor);
Tensor gelu(const Tensor& x);
/// Inverted dropout with a counter-based mask derived from `seed`.
Tensor dropout(const Tensor& x, double rate, std::uint64_t seed);

// --- linear algebra ------------------------------------------------------

/// A[..., m, k] * B[k, n] (B broadcast over A's leading dims), or a batched
/// product A[b, m, k] * B[b, k, n].
Tensor matmul(const Tensor& a, const Tensor& b);
/// Swaps the last two axes.
Tensor transpose(const Tensor& x);
Tensor permute(const Tensor& x, const std::vector<std::size_t>& order);
Tensor reshape(const Tensor& x, Shape shape);

// --- structure -----------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length);
/// x[B, S, D] -> [B, D], row b taken at position `positions[b]`.
Tensor gather_positions(const Tensor& x, std::span<const std::size_t> positions);
/// table[V, D] indexed by `ids` laid out as `ids_shape`; result ids_shape x D.
Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids,
                        const Shape& ids_shape);

// --- normalization and probabilities ------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis);
/// Softmax over the last axis of x[G, Sq, Sk] where entries with a zero in
/// `allowed[g / group, q, k]` receive probability exactly zero. A row with
/// nothing allowed yields all zeros.
Tensor masked_softmax(const Tensor& x,
                      std::shared_ptr<const std::vector<std::uint8_t>> allowed,
                      std::size_t group);
Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps = 1e-5);

// --- reductions and losses ----------------------------------------------

Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);

struct CrossEntropy {
  Tensor loss;
  /// Non-ignored positions. Zero means the loss is a constant 0.
  std::size_t counted = 0;
  /// Negative log-likelihood per position; 0 for ignored ones.
  std::vector<double> position_nll;
  bool all_ignored() const { return counted == 0; }
};

/// Mean negative log-likelihood of `targets` under softmax(logits) over the
/// last axis, skipping positions whose target equals `ignore_id`.
CrossEntropy cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                           TokenId ignore_id);

}  // namespace mcout
