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

#include "mcout/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <limits>
#include <cmath>
#include <numbers>
#include <sstream>
#include <unordered_set>
#include <utility>

#include "mcout/kernels.hpp"

namespace mcout {

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> value;
  std::vector<double> grad;
  bool requires_grad = false;
  bool leaf = true;
  bool consumed = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;
};

}  // namespace detail

using detail::Node;
using NodePtr = std::shared_ptr<Node>;

struct TensorAccess {
  static Tensor wrap(NodePtr node) { return Tensor(std::move(node)); }
  static const NodePtr& ptr(const Tensor& t) { return t.node_; }
};

namespace {

std::atomic<Precision> g_precision{Precision::F32};
thread_local bool t_grad_enabled = true;

using BackwardFn = std::function<void(Node&)>;

void check_shape(const Shape& shape) {
  for (auto d : shape)
    if (d == 0)
      throw DimensionError("tensor dimensions must be positive, got " +
                           shape_string(shape));
}

const Node& node_of(const Tensor& t) {
  if (!t.defined()) throw ContractError("operation on an undefined tensor");
  return *TensorAccess::ptr(t);
}

// Gradient buffer of a node, allocated on first use; null when the node
// does not take gradients.
double* grad_buffer(Node& n) {
  if (!n.requires_grad) return nullptr;
  if (n.grad.empty()) n.grad.assign(n.value.size(), 0.0);
  return n.grad.data();
}

Tensor make_result(Shape shape, std::vector<double> values,
                   std::initializer_list<const Tensor*> parents,
                   BackwardFn fn) {
  round_to_precision(values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs_grad = false;
  if (t_grad_enabled)
    for (const Tensor* p : parents)
      if (p->requires_grad()) needs_grad = true;
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    for (const Tensor* p : parents) node->parents.push_back(TensorAccess::ptr(*p));
    node->backward_fn = std::move(fn);
  }
  return TensorAccess::wrap(std::move(node));
}

Tensor make_result_n(Shape shape, std::vector<double> values,
                     const std::vector<Tensor>& parents, BackwardFn fn) {
  round_to_precision(values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  bool needs_grad = false;
  if (t_grad_enabled)
    for (const auto& p : parents)
      if (p.requires_grad()) needs_grad = true;
  if (needs_grad) {
    node->requires_grad = true;
    node->leaf = false;
    for (const auto& p : parents) node->parents.push_back(TensorAccess::ptr(p));
    node->backward_fn = std::move(fn);
  }
  return TensorAccess::wrap(std::move(node));
}

bool is_suffix(const Shape& small, const Shape& big) {
  if (small.size() > big.size()) return false;
  return std::equal(small.rbegin(), small.rend(), big.rbegin());
}

std::size_t normalize_axis(int axis, std::size_t rank) {
  const int r = static_cast<int>(rank);
  if (axis < -r || axis >= r)
    throw DimensionError("axis " + std::to_string(axis) +
                         " out of range for rank " + std::to_string(rank));
  return static_cast<std::size_t>(axis < 0 ? axis + r : axis);
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

}  // namespace

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

void set_precision(Precision p) { g_precision.store(p); }
Precision precision() { return g_precision.load(); }

void round_to_precision(std::span<double> values) {
  if (precision() != Precision::F32) return;
  for (auto& v : values) v = static_cast<double>(static_cast<float>(v));
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

GradModeScope::GradModeScope(bool enabled) : previous_(t_grad_enabled) {
  t_grad_enabled = enabled;
}
GradModeScope::~GradModeScope() { t_grad_enabled = previous_; }

// --- Tensor ---------------------------------------------------------------

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  check_shape(shape);
  std::vector<double> v(mcout::numel(shape), value);
  return from_values(std::move(shape), std::move(v), requires_grad);
}

Tensor Tensor::from_values(Shape shape, std::vector<double> values,
                           bool requires_grad) {
  check_shape(shape);
  if (values.size() != mcout::numel(shape))
    throw DimensionError("from_values: " + std::to_string(values.size()) +
                         " values for shape " + shape_string(shape));
  round_to_precision(values);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

Tensor Tensor::scalar(double value) { return from_values({}, {value}); }

const Shape& Tensor::shape() const { return node_of(*this).shape; }

std::size_t Tensor::dim(int axis) const {
  return shape()[normalize_axis(axis, rank())];
}

std::size_t Tensor::numel() const { return node_of(*this).value.size(); }

std::span<const double> Tensor::values() const { return node_of(*this).value; }

double Tensor::item() const {
  if (numel() != 1)
    throw ContractError("item() on tensor of shape " + shape_string(shape()));
  return values()[0];
}

std::span<double> Tensor::mutable_values() {
  if (!is_leaf()) throw ContractError("mutable_values() requires a leaf tensor");
  return node_->value;
}

bool Tensor::is_leaf() const { return node_of(*this).leaf; }
bool Tensor::requires_grad() const { return node_of(*this).requires_grad; }

void Tensor::set_requires_grad(bool flag) {
  if (!is_leaf()) throw ContractError("set_requires_grad() requires a leaf tensor");
  node_->requires_grad = flag;
}

bool Tensor::has_grad() const { return !node_of(*this).grad.empty(); }
std::span<const double> Tensor::grad() const { return node_of(*this).grad; }
void Tensor::zero_grad() {
  if (node_) node_->grad.clear();
}

Tensor Tensor::detach() const {
  const Node& n = node_of(*this);
  auto copy = std::make_shared<Node>();
  copy->shape = n.shape;
  copy->value = n.value;
  return Tensor(std::move(copy));
}

void Tensor::backward() const {
  const Node& root_ref = node_of(*this);
  if (root_ref.value.size() != 1)
    throw ContractError("backward: loss must be a scalar, got shape " +
                        shape_string(root_ref.shape));
  if (root_ref.consumed)
    throw ContractError("backward: graph has already been differentiated");
  if (!root_ref.requires_grad) return;

  // Iterative post-order DFS gives parents before children.
  std::vector<Node*> order;
  std::unordered_set<Node*> visited;
  std::vector<std::pair<Node*, std::size_t>> stack;
  stack.emplace_back(node_.get(), 0);
  visited.insert(node_.get());
  while (!stack.empty()) {
    auto& [n, next] = stack.back();
    if (next < n->parents.size()) {
      Node* p = n->parents[next++].get();
      if (p->consumed)
        throw ContractError("backward: graph has already been differentiated");
      if (p->requires_grad && visited.insert(p).second) stack.emplace_back(p, 0);
    } else {
      order.push_back(n);
      stack.pop_back();
    }
  }

  Node& root = *node_;
  root.grad.assign(1, 1.0);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    Node* n = *it;
    if (n->backward_fn && !n->grad.empty()) n->backward_fn(*n);
  }
  for (Node* n : order) {
    if (n->leaf) continue;
    n->consumed = true;
    n->backward_fn = nullptr;
    n->parents.clear();
  }
}

// --- elementwise ------------------------------------------------------------

Tensor add(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa != sb && !is_suffix(sb, sa)) {
    if (is_suffix(sa, sb)) return add(b, a);
    throw DimensionError("add: shapes " + shape_string(sa) + " and " +
                         shape_string(sb) + " do not broadcast");
  }
  const std::size_t total = a.numel();
  const std::size_t inner = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = av[i] + bv[i % inner];
  return make_result(sa, std::move(out), {&a, &b}, [inner](Node& self) {
    const auto& g = self.grad;
    if (double* ga = grad_buffer(*self.parents[0]))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    if (double* gb = grad_buffer(*self.parents[1]))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i];
  });
}

Tensor multiply(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  if (sa != sb && !is_suffix(sb, sa)) {
    if (is_suffix(sa, sb)) return multiply(b, a);
    throw DimensionError("multiply: shapes " + shape_string(sa) + " and " +
                         shape_string(sb) + " do not broadcast");
  }
  const std::size_t total = a.numel();
  const std::size_t inner = b.numel();
  auto av = a.values();
  auto bv = b.values();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = av[i] * bv[i % inner];
  return make_result(sa, std::move(out), {&a, &b}, [inner](Node& self) {
    const auto& g = self.grad;
    const auto& av = self.parents[0]->value;
    const auto& bv = self.parents[1]->value;
    if (double* ga = grad_buffer(*self.parents[0]))
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * bv[i % inner];
    if (double* gb = grad_buffer(*self.parents[1]))
      for (std::size_t i = 0; i < g.size(); ++i) gb[i % inner] += g[i] * av[i];
  });
}

Tensor scale(const Tensor& a, double factor) {
  auto av = a.values();
  std::vector<double> out(av.begin(), av.end());
  for (auto& v : out) v *= factor;
  return make_result(a.shape(), std::move(out), {&a}, [factor](Node& self) {
    if (double* ga = grad_buffer(*self.parents[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * factor;
  });
}

Tensor gelu(const Tensor& x) {
  auto xv = x.values();
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i)
    out[i] = 0.5 * xv[i] * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
  return make_result(x.shape(), std::move(out), {&x}, [](Node& self) {
    double* gx = grad_buffer(*self.parents[0]);
    if (!gx) return;
    const auto& xv = self.parents[0]->value;
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < xv.size(); ++i) {
      const double cdf = 0.5 * (1.0 + std::erf(xv[i] * std::numbers::sqrt2 / 2.0));
      const double pdf = inv_sqrt_2pi * std::exp(-0.5 * xv[i] * xv[i]);
      gx[i] += self.grad[i] * (cdf + xv[i] * pdf);
    }
  });
}

Tensor dropout(const Tensor& x, double rate, std::uint64_t seed) {
  if (rate < 0.0 || rate >= 1.0)
    throw ContractError("dropout: rate must lie in [0, 1)");
  if (rate == 0.0) return x;
  const double keep_scale = 1.0 / (1.0 - rate);
  auto xv = x.values();
  auto factors = std::make_shared<std::vector<double>>(xv.size());
  std::vector<double> out(xv.size());
  for (std::size_t i = 0; i < xv.size(); ++i) {
    const double u =
        static_cast<double>(splitmix64(seed ^ splitmix64(i)) >> 11) * 0x1.0p-53;
    (*factors)[i] = u < rate ? 0.0 : keep_scale;
    out[i] = xv[i] * (*factors)[i];
  }
  return make_result(x.shape(), std::move(out), {&x}, [factors](Node& self) {
    if (double* gx = grad_buffer(*self.parents[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i)
        gx[i] += self.grad[i] * (*factors)[i];
  });
}

// --- linear algebra -----------------------------------------------------------

Tensor matmul(const Tensor& a, const Tensor& b) {
  const Shape& sa = a.shape();
  const Shape& sb = b.shape();
  auto mismatch = [&] {
    return DimensionError("matmul: shapes " + shape_string(sa) + " and " +
                          shape_string(sb) + " are incompatible");
  };
  if (sa.size() < 2 || sb.size() < 2) throw mismatch();

  if (sb.size() == 2) {
    const std::size_t k = sa.back();
    if (sb[0] != k) throw mismatch();
    const std::size_t n = sb[1];
    const std::size_t m = a.numel() / k;
    Shape out_shape(sa.begin(), sa.end() - 1);
    out_shape.push_back(n);
    std::vector<double> out(m * n);
    kernels::GemmShape gs{1, m, k, n, 0, 0, 0};
    kernels::gemm_nn(gs, a.values().data(), b.values().data(), out.data(), false);
    return make_result(std::move(out_shape), std::move(out), {&a, &b},
                       [m, k, n](Node& self) {
                         const double* g = self.grad.data();
                         Node& pa = *self.parents[0];
                         Node& pb = *self.parents[1];
                         if (double* ga = grad_buffer(pa))
                           kernels::gemm_nt({1, m, n, k, 0, 0, 0}, g,
                                            pb.value.data(), ga, true);
                         if (double* gb = grad_buffer(pb))
                           kernels::gemm_tn({1, k, m, n, 0, 0, 0},
                                            pa.value.data(), g, gb, true);
                       });
  }

  if (sa.size() != 3 || sb.size() != 3 || sa[0] != sb[0] || sa[2] != sb[1])
    throw mismatch();
  const std::size_t batch = sa[0], m = sa[1], k = sa[2], n = sb[2];
  std::vector<double> out(batch * m * n);
  kernels::GemmShape gs{batch, m, k, n, m * k, k * n, m * n};
  kernels::gemm_nn(gs, a.values().data(), b.values().data(), out.data(), false);
  return make_result(
      {batch, m, n}, std::move(out), {&a, &b}, [batch, m, k, n](Node& self) {
        const double* g = self.grad.data();
        Node& pa = *self.parents[0];
        Node& pb = *self.parents[1];
        if (double* ga = grad_buffer(pa))
          kernels::gemm_nt({batch, m, n, k, m * n, k * n, m * k}, g,
                           pb.value.data(), ga, true);
        if (double* gb = grad_buffer(pb))
          kernels::gemm_tn({batch, k, m, n, m * k, m * n, k * n},
                           pa.value.data(), g, gb, true);
      });
}

Tensor transpose(const Tensor& x) {
  const Shape& s = x.shape();
  if (s.size() < 2)
    throw DimensionError("transpose: rank must be >= 2, got " + shape_string(s));
  std::vector<std::size_t> order(s.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::swap(order[s.size() - 1], order[s.size() - 2]);
  return permute(x, order);
}

Tensor permute(const Tensor& x, const std::vector<std::size_t>& order) {
  const Shape& s = x.shape();
  const std::size_t r = s.size();
  if (order.size() != r)
    throw DimensionError("permute: order size does not match rank");
  std::vector<bool> seen(r, false);
  for (auto o : order) {
    if (o >= r || seen[o]) throw DimensionError("permute: invalid axis order");
    seen[o] = true;
  }
  Shape out_shape(r);
  for (std::size_t i = 0; i < r; ++i) out_shape[i] = s[order[i]];

  std::vector<std::size_t> in_strides(r, 1);
  for (std::size_t i = r - 1; i-- > 0;) in_strides[i] = in_strides[i + 1] * s[i + 1];
  // Map each output linear index to its source index.
  const std::size_t total = x.numel();
  auto src = std::make_shared<std::vector<std::size_t>>(total);
  std::vector<std::size_t> idx(r, 0);
  for (std::size_t lin = 0; lin < total; ++lin) {
    std::size_t off = 0;
    for (std::size_t i = 0; i < r; ++i) off += idx[i] * in_strides[order[i]];
    (*src)[lin] = off;
    for (std::size_t i = r; i-- > 0;) {
      if (++idx[i] < out_shape[i]) break;
      idx[i] = 0;
    }
  }
  auto xv = x.values();
  std::vector<double> out(total);
  for (std::size_t i = 0; i < total; ++i) out[i] = xv[(*src)[i]];
  return make_result(std::move(out_shape), std::move(out), {&x}, [src](Node& self) {
    if (double* gx = grad_buffer(*self.parents[0]))
      for (std::size_t i = 0; i < self.grad.size(); ++i) gx[(*src)[i]] += self.grad[i];
  });
}

Tensor reshape(const Tensor& x, Shape shape) {
  check_shape(shape);
  if (mcout::numel(shape) != x.numel())
    throw DimensionError("reshape: cannot view " + shape_string(x.shape()) +
                         " as " + shape_string(shape));
  auto xv = x.values();
  return make_result(std::move(shape), std::vector<double>(xv.begin(), xv.end()),
                     {&x}, [](Node& self) {
                       if (double* gx = grad_buffer(*self.parents[0]))
                         for (std::size_t i = 0; i < self.grad.size(); ++i)
                           gx[i] += self.grad[i];
                     });
}

// --- structure ------------------------------------------------------------------

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat: no inputs");
  const Shape& s0 = parts[0].shape();
  if (axis >= s0.size())
    throw DimensionError("concat: axis " + std::to_string(axis) +
                         " out of range for " + shape_string(s0));
  std::vector<std::size_t> widths;
  std::size_t axis_total = 0;
  for (const auto& p : parts) {
    const Shape& s = p.shape();
    bool ok = s.size() == s0.size();
    for (std::size_t i = 0; ok && i < s.size(); ++i)
      if (i != axis && s[i] != s0[i]) ok = false;
    if (!ok)
      throw DimensionError("concat: shapes " + shape_string(s0) + " and " +
                           shape_string(s) + " differ off the concat axis");
    widths.push_back(s[axis]);
    axis_total += s[axis];
  }
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s0[i];
  for (std::size_t i = axis + 1; i < s0.size(); ++i) inner *= s0[i];
  Shape out_shape = s0;
  out_shape[axis] = axis_total;

  std::vector<double> out(outer * axis_total * inner);
  std::size_t col = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    auto pv = parts[pi].values();
    const std::size_t chunk = widths[pi] * inner;
    for (std::size_t o = 0; o < outer; ++o)
      std::copy_n(pv.data() + o * chunk, chunk,
                  out.data() + (o * axis_total + col) * inner);
    col += widths[pi];
  }
  return make_result_n(
      std::move(out_shape), std::move(out), parts,
      [widths, outer, inner, axis_total](Node& self) {
        std::size_t col = 0;
        for (std::size_t pi = 0; pi < widths.size(); ++pi) {
          const std::size_t chunk = widths[pi] * inner;
          if (double* gp = grad_buffer(*self.parents[pi]))
            for (std::size_t o = 0; o < outer; ++o) {
              const double* g = self.grad.data() + (o * axis_total + col) * inner;
              for (std::size_t j = 0; j < chunk; ++j) gp[o * chunk + j] += g[j];
            }
          col += widths[pi];
        }
      });
}

Tensor slice(const Tensor& x, std::size_t axis, std::size_t start,
             std::size_t length) {
  const Shape& s = x.shape();
  if (axis >= s.size() || length == 0 || start + length > s[axis])
    throw DimensionError("slice: [" + std::to_string(start) + ", " +
                         std::to_string(start + length) + ") on axis " +
                         std::to_string(axis) + " of " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t width = s[axis];
  Shape out_shape = s;
  out_shape[axis] = length;
  auto xv = x.values();
  std::vector<double> out(outer * length * inner);
  for (std::size_t o = 0; o < outer; ++o)
    std::copy_n(xv.data() + (o * width + start) * inner, length * inner,
                out.data() + o * length * inner);
  return make_result(std::move(out_shape), std::move(out), {&x},
                     [outer, inner, width, start, length](Node& self) {
                       double* gx = grad_buffer(*self.parents[0]);
                       if (!gx) return;
                       for (std::size_t o = 0; o < outer; ++o) {
                         const double* g = self.grad.data() + o * length * inner;
                         double* dst = gx + (o * width + start) * inner;
                         for (std::size_t j = 0; j < length * inner; ++j) dst[j] += g[j];
                       }
                     });
}

Tensor gather_positions(const Tensor& x, std::span<const std::size_t> positions) {
  const Shape& s = x.shape();
  if (s.size() != 3 || positions.size() != s[0])
    throw DimensionError("gather_positions: expected [B, S, D] with B=" +
                         std::to_string(positions.size()) + ", got " +
                         shape_string(s));
  const std::size_t batch = s[0], seq = s[1], d = s[2];
  for (auto p : positions)
    if (p >= seq) throw ContractError("gather_positions: position out of range");
  auto pos = std::make_shared<std::vector<std::size_t>>(positions.begin(), positions.end());
  auto xv = x.values();
  std::vector<double> out(batch * d);
  for (std::size_t b = 0; b < batch; ++b)
    std::copy_n(xv.data() + (b * seq + (*pos)[b]) * d, d, out.data() + b * d);
  return make_result({batch, d}, std::move(out), {&x}, [pos, seq, d](Node& self) {
    double* gx = grad_buffer(*self.parents[0]);
    if (!gx) return;
    for (std::size_t b = 0; b < pos->size(); ++b)
      for (std::size_t j = 0; j < d; ++j)
        gx[(b * seq + (*pos)[b]) * d + j] += self.grad[b * d + j];
  });
}

Tensor embedding_lookup(const Tensor& table, std::span<const TokenId> ids,
                        const Shape& ids_shape) {
  const Shape& ts = table.shape();
  if (ts.size() != 2)
    throw DimensionError("embedding_lookup: table must be [V, D], got " +
                         shape_string(ts));
  if (mcout::numel(ids_shape) != ids.size())
    throw DimensionError("embedding_lookup: ids do not fill " + shape_string(ids_shape));
  const std::size_t vocab = ts[0], d = ts[1];
  auto id_copy = std::make_shared<std::vector<TokenId>>(ids.begin(), ids.end());
  for (auto id : *id_copy)
    if (id < 0 || static_cast<std::size_t>(id) >= vocab)
      throw ContractError("embedding_lookup: token id " + std::to_string(id) +
                          " outside vocabulary of " + std::to_string(vocab));
  auto tv = table.values();
  std::vector<double> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i)
    std::copy_n(tv.data() + static_cast<std::size_t>((*id_copy)[i]) * d, d,
                out.data() + i * d);
  Shape out_shape = ids_shape;
  out_shape.push_back(d);
  return make_result(std::move(out_shape), std::move(out), {&table},
                     [id_copy, d](Node& self) {
                       double* gt = grad_buffer(*self.parents[0]);
                       if (!gt) return;
                       for (std::size_t i = 0; i < id_copy->size(); ++i) {
                         double* row = gt + static_cast<std::size_t>((*id_copy)[i]) * d;
                         for (std::size_t j = 0; j < d; ++j) row[j] += self.grad[i * d + j];
                       }
                     });
}

// --- normalization and probabilities ---------------------------------------------

Tensor softmax(const Tensor& x, std::size_t axis) {
  const Shape& s = x.shape();
  if (axis >= s.size())
    throw DimensionError("softmax: axis " + std::to_string(axis) +
                         " out of range for " + shape_string(s));
  std::size_t outer = 1, inner = 1;
  for (std::size_t i = 0; i < axis; ++i) outer *= s[i];
  for (std::size_t i = axis + 1; i < s.size(); ++i) inner *= s[i];
  const std::size_t n = s[axis];
  auto xv = x.values();
  std::vector<double> out(xv.size());
  if (inner == 1) {
    kernels::softmax_rows(xv, out, outer, n);
  } else {
    std::vector<double> row(n), res(n);
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        for (std::size_t j = 0; j < n; ++j) row[j] = xv[(o * n + j) * inner + in];
        kernels::serial::softmax_rows(row, res, 1, n);
        for (std::size_t j = 0; j < n; ++j) out[(o * n + j) * inner + in] = res[j];
      }
  }
  return make_result(s, std::move(out), {&x}, [outer, inner, n](Node& self) {
    double* gx = grad_buffer(*self.parents[0]);
    if (!gx) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t o = 0; o < outer; ++o)
      for (std::size_t in = 0; in < inner; ++in) {
        double dot = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = (o * n + j) * inner + in;
          dot += g[i] * y[i];
        }
        for (std::size_t j = 0; j < n; ++j) {
          const std::size_t i = (o * n + j) * inner + in;
          gx[i] += y[i] * (g[i] - dot);
        }
      }
  });
}

Tensor masked_softmax(const Tensor& x,
                      std::shared_ptr<const std::vector<std::uint8_t>> allowed,
                      std::size_t group) {
  const Shape& s = x.shape();
  if (s.size() != 3 || group == 0 || s[0] % group != 0)
    throw DimensionError("masked_softmax: expected [G, Sq, Sk] with G divisible by " +
                         std::to_string(group) + ", got " + shape_string(s));
  const std::size_t groups = s[0], sq = s[1], sk = s[2];
  if (!allowed || allowed->size() != (groups / group) * sq * sk)
    throw DimensionError("masked_softmax: mask size does not match scores");
  auto xv = x.values();
  std::vector<double> out(xv.size(), 0.0);
  for (std::size_t g = 0; g < groups; ++g)
    for (std::size_t q = 0; q < sq; ++q) {
      const double* row = xv.data() + (g * sq + q) * sk;
      const std::uint8_t* ok = allowed->data() + ((g / group) * sq + q) * sk;
      double* y = out.data() + (g * sq + q) * sk;
      double mx = -std::numeric_limits<double>::infinity();
      for (std::size_t j = 0; j < sk; ++j)
        if (ok[j]) mx = std::max(mx, row[j]);
      if (mx == -std::numeric_limits<double>::infinity()) continue;
      double total = 0.0;
      for (std::size_t j = 0; j < sk; ++j)
        if (ok[j]) {
          y[j] = std::exp(row[j] - mx);
          total += y[j];
        }
      const double inv = 1.0 / total;
      for (std::size_t j = 0; j < sk; ++j) y[j] *= inv;
    }
  return make_result(s, std::move(out), {&x}, [sk](Node& self) {
    double* gx = grad_buffer(*self.parents[0]);
    if (!gx) return;
    const auto& y = self.value;
    const auto& g = self.grad;
    for (std::size_t r = 0; r < y.size() / sk; ++r) {
      double dot = 0.0;
      for (std::size_t j = 0; j < sk; ++j) dot += g[r * sk + j] * y[r * sk + j];
      for (std::size_t j = 0; j < sk; ++j)
        gx[r * sk + j] += y[r * sk + j] * (g[r * sk + j] - dot);
    }
  });
}

Tensor layer_norm(const Tensor& x, const Tensor& gain, const Tensor& bias,
                  double eps) {
  if (eps <= 0.0) throw ContractError("layer_norm: eps must be positive");
  const std::size_t d = x.shape().back();
  if (gain.shape() != Shape{d} || bias.shape() != Shape{d})
    throw DimensionError("layer_norm: gain/bias must be [" + std::to_string(d) +
                         "], got " + shape_string(gain.shape()) + " and " +
                         shape_string(bias.shape()));
  const std::size_t rows = x.numel() / d;
  auto xhat = std::make_shared<std::vector<double>>(x.numel());
  auto rstd = std::make_shared<std::vector<double>>(rows);
  std::vector<double> out(x.numel());
  kernels::layer_norm_rows(x.values(), gain.values(), bias.values(), out, *xhat,
                           *rstd, rows, d, eps);
  return make_result(x.shape(), std::move(out), {&x, &gain, &bias},
                     [xhat, rstd, rows, d](Node& self) {
                       const auto& g = self.grad;
                       const auto& gain = self.parents[1]->value;
                       double* gx = grad_buffer(*self.parents[0]);
                       double* gg = grad_buffer(*self.parents[1]);
                       double* gb = grad_buffer(*self.parents[2]);
                       const double inv_d = 1.0 / static_cast<double>(d);
                       for (std::size_t r = 0; r < rows; ++r) {
                         const double* gr = g.data() + r * d;
                         const double* xh = xhat->data() + r * d;
                         if (gx) {
                           double m1 = 0.0, m2 = 0.0;
                           for (std::size_t j = 0; j < d; ++j) {
                             const double gxh = gr[j] * gain[j];
                             m1 += gxh;
                             m2 += gxh * xh[j];
                           }
                           m1 *= inv_d;
                           m2 *= inv_d;
                           for (std::size_t j = 0; j < d; ++j)
                             gx[r * d + j] +=
                                 (*rstd)[r] * (gr[j] * gain[j] - m1 - xh[j] * m2);
                         }
                         if (gg)
                           for (std::size_t j = 0; j < d; ++j) gg[j] += gr[j] * xh[j];
                         if (gb)
                           for (std::size_t j = 0; j < d; ++j) gb[j] += gr[j];
                       }
                     });
}

// --- reductions and losses ---------------------------------------------------------

Tensor sum(const Tensor& x) {
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total}, {&x}, [](Node& self) {
    if (double* gx = grad_buffer(*self.parents[0])) {
      const std::size_t n = self.parents[0]->value.size();
      for (std::size_t i = 0; i < n; ++i) gx[i] += self.grad[0];
    }
  });
}

Tensor mean(const Tensor& x) {
  const double n = static_cast<double>(x.numel());
  double total = 0.0;
  for (double v : x.values()) total += v;
  return make_result({}, {total / n}, {&x}, [n](Node& self) {
    if (double* gx = grad_buffer(*self.parents[0])) {
      const std::size_t count = self.parents[0]->value.size();
      for (std::size_t i = 0; i < count; ++i) gx[i] += self.grad[0] / n;
    }
  });
}

CrossEntropy cross_entropy(const Tensor& logits, std::span<const TokenId> targets,
                           TokenId ignore_id) {
  const std::size_t vocab = logits.shape().back();
  const std::size_t rows = logits.numel() / vocab;
  if (targets.size() != rows)
    throw DimensionError("cross_entropy: " + std::to_string(targets.size()) +
                         " targets for logits " + shape_string(logits.shape()));
  auto tgt = std::make_shared<std::vector<TokenId>>(targets.begin(), targets.end());
  CrossEntropy result;
  result.position_nll.assign(rows, 0.0);
  auto lv = logits.values();
  double total = 0.0;
  for (std::size_t r = 0; r < rows; ++r) {
    const TokenId t = (*tgt)[r];
    if (t == ignore_id) continue;
    if (t < 0 || static_cast<std::size_t>(t) >= vocab)
      throw ContractError("cross_entropy: target " + std::to_string(t) +
                          " outside vocabulary of " + std::to_string(vocab));
    const double* row = lv.data() + r * vocab;
    double mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    double z = 0.0;
    for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
    const double nll = std::log(z) + mx - row[t];
    result.position_nll[r] = nll;
    total += nll;
    ++result.counted;
  }
  if (result.counted == 0) {
    result.loss = Tensor::scalar(0.0);
    return result;
  }
  const double count = static_cast<double>(result.counted);
  result.loss = make_result(
      {}, {total / count}, {&logits}, [tgt, vocab, rows, count, ignore_id](Node& self) {
        double* gl = grad_buffer(*self.parents[0]);
        if (!gl) return;
        const auto& lv = self.parents[0]->value;
        const double scale_g = self.grad[0] / count;
        for (std::size_t r = 0; r < rows; ++r) {
          const TokenId t = (*tgt)[r];
          if (t == ignore_id) continue;
          const double* row = lv.data() + r * vocab;
          double mx = row[0];
          for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
          double z = 0.0;
          for (std::size_t j = 0; j < vocab; ++j) z += std::exp(row[j] - mx);
          for (std::size_t j = 0; j < vocab; ++j) {
            const double p = std::exp(row[j] - mx) / z;
            gl[r * vocab + j] += scale_g * (p - (static_cast<TokenId>(j) == t ? 1.0 : 0.0));
          }
        }
      });
  return result;
}

}  // namespace mcout
