// Copyright (c) 2026 FixRes Lab Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef FIXRES_TENSOR_HPP_
#define FIXRES_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <unordered_set>
#include <vector>

#include "fixres/error.hpp"
#include "fixres/rng.hpp"

namespace fixres {

namespace detail {

inline thread_local bool grad_enabled = true;

template <typename T>
struct TensorImpl;

/**
 * One recorded operation on the implicit tape. `apply` reads the output's
 * gradient and accumulates into the gradients of the tensors it captured.
 * `parents` lists the differentiable inputs so backward() can walk the graph.
 */
template <typename T>
struct BackwardNode {
  std::vector<std::shared_ptr<TensorImpl<T>>> parents;
  std::function<void(const TensorImpl<T>&)> apply;
  const char* op = "";
  bool consumed = false;
};

template <typename T>
struct TensorImpl {
  std::vector<int64_t> shape;
  std::vector<T> data;
  std::vector<T> grad;  // empty until first accumulation
  std::shared_ptr<BackwardNode<T>> grad_fn;
  bool requires_grad = false;
};

template <typename T>
void accumulate_grad(TensorImpl<T>& t, const T* src) {
  if (t.grad.empty()) t.grad.assign(t.data.size(), T(0));
  for (size_t i = 0; i < t.grad.size(); ++i) t.grad[i] += src[i];
}

inline int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (int64_t d : shape) n *= d;
  return n;
}

inline std::string shape_str(const std::vector<int64_t>& shape) {
  std::ostringstream os;
  os << '[';
  for (size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

}  // namespace detail

/** True while gradient recording is on for this thread. */
inline bool grad_enabled() { return detail::grad_enabled; }

/** RAII guard that disables graph recording (inference / recalibration passes). */
class NoGradGuard {
public:
  NoGradGuard() : prev_(detail::grad_enabled) { detail::grad_enabled = false; }
  ~NoGradGuard() { detail::grad_enabled = prev_; }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
  bool prev_;
};

/**
 * Dense n-dimensional array with reverse-mode autodiff.
 *
 * Copying a Tensor copies a handle to shared storage (like the layers of a
 * model all referencing one parameter); use clone() for an independent deep
 * copy. Operations record backward closures on an implicit per-forward tape
 * whenever any differentiable input requires a gradient and grad mode is on.
 */
template <typename T>
class Tensor {
public:
  using Impl = detail::TensorImpl<T>;

  Tensor() : impl_(std::make_shared<Impl>()) {}

  explicit Tensor(std::vector<int64_t> shape) : impl_(std::make_shared<Impl>()) {
    check_shape(shape);
    impl_->shape = std::move(shape);
    impl_->data.assign(static_cast<size_t>(detail::shape_numel(impl_->shape)), T(0));
  }

  static Tensor zeros(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

  static Tensor full(std::vector<int64_t> shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.impl_->data.begin(), t.impl_->data.end(), value);
    return t;
  }

  static Tensor from_data(std::vector<int64_t> shape, std::vector<T> data) {
    check_shape(shape);
    if (detail::shape_numel(shape) != static_cast<int64_t>(data.size())) {
      throw ShapeError("from_data: shape " + detail::shape_str(shape) + " needs " +
                       std::to_string(detail::shape_numel(shape)) + " elements, got " +
                       std::to_string(data.size()));
    }
    Tensor t;
    t.impl_->shape = std::move(shape);
    t.impl_->data = std::move(data);
    return t;
  }

  /** Normal(0, stddev) init, deterministic in the RNG stream. */
  static Tensor randn(std::vector<int64_t> shape, Rng& rng, double stddev = 1.0) {
    Tensor t(std::move(shape));
    for (T& v : t.impl_->data) v = static_cast<T>(rng.normal() * stddev);
    return t;
  }

  const std::vector<int64_t>& shape() const { return impl_->shape; }
  int64_t dim(size_t i) const { return impl_->shape.at(i); }
  size_t rank() const { return impl_->shape.size(); }
  int64_t numel() const { return static_cast<int64_t>(impl_->data.size()); }

  std::span<const T> data() const { return impl_->data; }
  std::span<T> data() { return impl_->data; }

  bool requires_grad() const { return impl_->requires_grad; }
  Tensor& set_requires_grad(bool v) {
    impl_->requires_grad = v;
    return *this;
  }

  bool has_grad() const { return !impl_->grad.empty(); }
  std::span<const T> grad() const { return impl_->grad; }
  void clear_grad() { impl_->grad.clear(); }

  /** True when this tensor participates in gradient flow. */
  bool needs_grad() const {
    return grad_enabled() && (impl_->requires_grad || impl_->grad_fn != nullptr);
  }

  bool is_leaf() const { return impl_->grad_fn == nullptr; }

  /** New leaf holding a copy of this tensor's data, cut off from the graph. */
  Tensor detach() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    return t;
  }

  /** Independent deep copy (leaf, no grad, keeps requires_grad flag). */
  Tensor clone() const {
    Tensor t;
    t.impl_->shape = impl_->shape;
    t.impl_->data = impl_->data;
    t.impl_->requires_grad = impl_->requires_grad;
    return t;
  }

  bool all_finite() const {
    for (T v : impl_->data) {
      if (!std::isfinite(static_cast<double>(v))) return false;
    }
    return true;
  }

  /** Identical shape and bitwise-identical payload. */
  bool bitwise_equal(const Tensor& other) const {
    return impl_->shape == other.impl_->shape && impl_->data == other.impl_->data;
  }

  /**
   * Reverse-mode pass from this scalar. Populates grad on every reachable
   * tensor that participates in gradient flow, then marks the graph spent;
   * calling backward again on the same recorded forward is an error.
   */
  void backward() const {
    if (numel() != 1) {
      throw GraphError("backward: loss must be a scalar, got shape " +
                       detail::shape_str(impl_->shape));
    }
    if (!impl_->grad_fn) {
      throw GraphError("backward: loss is not the result of a recorded computation");
    }

    // Reverse post-order DFS gives a topological order over the recorded ops.
    std::vector<Impl*> order;
    std::unordered_set<Impl*> visited;
    std::vector<std::pair<Impl*, size_t>> stack;
    stack.emplace_back(impl_.get(), 0);
    visited.insert(impl_.get());
    while (!stack.empty()) {
      Impl* node = stack.back().first;
      const size_t next = stack.back().second;
      if (node->grad_fn && next < node->grad_fn->parents.size()) {
        stack.back().second = next + 1;
        Impl* p = node->grad_fn->parents[next].get();
        if (visited.insert(p).second) stack.emplace_back(p, 0);
      } else {
        order.push_back(node);
        stack.pop_back();
      }
    }

    for (Impl* node : order) {
      if (node->grad_fn && node->grad_fn->consumed) {
        throw GraphError(std::string("backward: graph already consumed at op '") +
                         node->grad_fn->op + "'; run a fresh forward pass first");
      }
    }

    impl_->grad.assign(1, T(1));
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
      Impl* node = *it;
      if (!node->grad_fn) continue;
      if (node->grad.empty()) continue;  // no incoming gradient on this branch
      node->grad_fn->apply(*node);
      node->grad_fn->consumed = true;
      node->grad_fn->apply = nullptr;  // release captured activations
    }
  }

  std::shared_ptr<Impl> impl() const { return impl_; }

private:
  static void check_shape(const std::vector<int64_t>& shape) {
    for (int64_t d : shape) {
      if (d <= 0) {
        throw ShapeError("tensor dimensions must be positive, got " +
                         detail::shape_str(shape));
      }
    }
  }

  std::shared_ptr<Impl> impl_;
};

namespace detail {

/**
 * Wrap an op result. `diff_parents` are the inputs gradient can flow into;
 * when empty (or grad mode is off) no node is recorded and the result is a
 * plain leaf, so frozen subgraphs cost neither tape memory nor backward time.
 */
template <typename T>
Tensor<T> make_op_result(std::vector<int64_t> shape, std::vector<T> data,
                         std::vector<Tensor<T>> diff_parents,
                         std::function<void(const TensorImpl<T>&)> backward_fn,
                         const char* op_name) {
  Tensor<T> out = Tensor<T>::from_data(std::move(shape), std::move(data));
  if (!grad_enabled || diff_parents.empty()) return out;
  auto node = std::make_shared<BackwardNode<T>>();
  node->parents.reserve(diff_parents.size());
  for (const auto& p : diff_parents) node->parents.push_back(p.impl());
  node->apply = std::move(backward_fn);
  node->op = op_name;
  out.impl()->grad_fn = std::move(node);
  return out;
}

}  // namespace detail

/** Sum of all elements as a scalar (shape [1]). */
template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = T(0);
  for (T v : x.data()) total += v;
  std::vector<Tensor<T>> parents;
  if (x.needs_grad()) parents.push_back(x);
  auto x_impl = x.impl();
  return detail::make_op_result<T>(
      {1}, {total}, std::move(parents),
      [x_impl](const detail::TensorImpl<T>& out) {
        const T g = out.grad[0];
        if (x_impl->grad.empty()) x_impl->grad.assign(x_impl->data.size(), T(0));
        for (T& v : x_impl->grad) v += g;
      },
      "sum");
}

}  // namespace fixres

#endif  // FIXRES_TENSOR_HPP_
