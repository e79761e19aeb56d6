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

#ifndef FIXRES_NN_HPP_
#define FIXRES_NN_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "fixres/detail/matmul.hpp"
#include "fixres/error.hpp"
#include "fixres/tensor.hpp"

namespace fixres {

/** Named trainable tensor plus its SGD momentum state. */
template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> tensor;                 // requires_grad = true
  std::vector<T> momentum_buffer;   // allocated on first sgd_step

  Parameter() = default;
  Parameter(std::string n, Tensor<T> t) : name(std::move(n)), tensor(std::move(t)) {
    tensor.set_requires_grad(true);
  }
};

enum class BNMode { kTrain, kEval, kRecalibrate };

inline const char* to_string(BNMode m) {
  switch (m) {
    case BNMode::kTrain: return "train";
    case BNMode::kEval: return "eval";
    case BNMode::kRecalibrate: return "recalibrate";
  }
  return "?";
}

/**
 * Per-channel batch-norm state. Train mode folds batch statistics into the
 * running estimates with an exponential moving average; recalibrate mode
 * instead merges them into exact aggregate accumulators (Chan's update) so
 * finish_recalibration() can replace the running statistics with the true
 * mean/variance of everything seen since begin_recalibration().
 */
template <typename T>
struct BatchNormState {
  Parameter<T> gamma, beta;
  std::vector<T> running_mean, running_var;
  double momentum = 0.1;
  double epsilon = 1e-5;
  BNMode mode = BNMode::kTrain;

  // aggregate accumulators for the recalibration pass
  std::vector<double> recal_mean, recal_m2;
  double recal_count = 0.0;

  static BatchNormState create(int64_t channels, std::string name_prefix = "bn",
                               double momentum = 0.1, double epsilon = 1e-5) {
    BatchNormState s;
    s.gamma = Parameter<T>(name_prefix + ".gamma", Tensor<T>::full({channels}, T(1)));
    s.beta = Parameter<T>(name_prefix + ".beta", Tensor<T>::zeros({channels}));
    s.running_mean.assign(static_cast<size_t>(channels), T(0));
    s.running_var.assign(static_cast<size_t>(channels), T(1));
    s.momentum = momentum;
    s.epsilon = epsilon;
    return s;
  }

  int64_t channels() const { return static_cast<int64_t>(running_mean.size()); }

  void begin_recalibration() {
    recal_mean.assign(running_mean.size(), 0.0);
    recal_m2.assign(running_mean.size(), 0.0);
    recal_count = 0.0;
    mode = BNMode::kRecalibrate;
  }

  /** Commit aggregate statistics into running_mean/var and drop to eval mode. */
  void finish_recalibration() {
    if (recal_count <= 0.0) {
      throw NumericError("batch_norm: finish_recalibration before any recalibration batch");
    }
    for (size_t c = 0; c < running_mean.size(); ++c) {
      running_mean[c] = static_cast<T>(recal_mean[c]);
      running_var[c] = static_cast<T>(recal_m2[c] / recal_count);
    }
    recal_mean.clear();
    recal_m2.clear();
    recal_count = 0.0;
    mode = BNMode::kEval;
  }
};

namespace detail {

template <typename T>
void check_rank(const Tensor<T>& t, size_t rank, const char* op, const char* role) {
  if (t.rank() != rank) {
    throw ShapeError(std::string(op) + ": " + role + " must be rank " +
                     std::to_string(rank) + ", got shape " + shape_str(t.shape()));
  }
}

}  // namespace detail

/**
 * 2-D convolution, NCHW input against OIkk square kernels.
 * out_h = (h + 2*padding - k) / stride + 1, likewise for width.
 */
template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight,
                 const std::optional<Tensor<T>>& bias, int64_t stride,
                 int64_t padding) {
  detail::check_rank(input, 4, "conv2d", "input");
  detail::check_rank(weight, 4, "conv2d", "weight");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t oc = weight.dim(0), ic = weight.dim(1), kh = weight.dim(2), kw = weight.dim(3);
  if (kh != kw) {
    throw ShapeError("conv2d: kernel must be square, got shape " +
                     detail::shape_str(weight.shape()));
  }
  const int64_t k = kh;
  if (ic != c) {
    throw ShapeError("conv2d: input shape " + detail::shape_str(input.shape()) +
                     " has " + std::to_string(c) + " channels but weight shape " +
                     detail::shape_str(weight.shape()) + " expects " + std::to_string(ic));
  }
  if (stride < 1) throw ConfigError("conv2d: stride must be >= 1");
  if (padding < 0) throw ConfigError("conv2d: padding must be >= 0");
  if (h + 2 * padding < k || w + 2 * padding < k) {
    throw ShapeError("conv2d: kernel side " + std::to_string(k) +
                     " does not fit padded input " + detail::shape_str(input.shape()) +
                     " with padding " + std::to_string(padding));
  }
  if (bias) {
    if (bias->rank() != 1 || bias->dim(0) != oc) {
      throw ShapeError("conv2d: bias shape " + detail::shape_str(bias->shape()) +
                       " does not match " + std::to_string(oc) + " output channels");
    }
  }

  const int64_t oh = (h + 2 * padding - k) / stride + 1;
  const int64_t ow = (w + 2 * padding - k) / stride + 1;
  const int64_t patch = c * k * k;     // rows of the unfolded image
  const int64_t spatial = oh * ow;

  std::vector<T> out(static_cast<size_t>(n * oc * spatial));
  // Unfold whole groups of images side by side so the GEMM's contiguous
  // dimension stays wide even when one image's output is only a few pixels.
  // Each output element still accumulates over the patch in the same order
  // as a per-image multiply, so results do not depend on the group size.
  constexpr int64_t kColBudget = int64_t(16) << 20;
  const int64_t group =
      std::clamp<int64_t>(kColBudget / (patch * spatial * int64_t(sizeof(T))),
                          1, n);
  std::vector<T> col(static_cast<size_t>(patch * group * spatial));
  std::vector<T> gout(static_cast<size_t>(oc * group * spatial));
  const T* x = input.data().data();
  const T* wv = weight.data().data();
  for (int64_t g0 = 0; g0 < n; g0 += group) {
    const int64_t gn = std::min(group, n - g0);
    const int64_t cols = gn * spatial;
    for (int64_t i = 0; i < gn; ++i) {
      detail::im2col(x + (g0 + i) * c * h * w, c, h, w, k, stride, padding, oh,
                     ow, col.data() + i * spatial, cols);
    }
    detail::matmul_nn(oc, cols, patch, wv, col.data(), gout.data(), false);
    for (int64_t i = 0; i < gn; ++i) {
      for (int64_t o = 0; o < oc; ++o) {
        std::copy_n(gout.data() + o * cols + i * spatial, spatial,
                    out.data() + ((g0 + i) * oc + o) * spatial);
      }
    }
  }
  if (bias) {
    const T* bv = bias->data().data();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t o = 0; o < oc; ++o) {
        T* row = out.data() + (i * oc + o) * spatial;
        for (int64_t p = 0; p < spatial; ++p) row[p] += bv[o];
      }
    }
  }

  const bool need_dx = input.needs_grad();
  const bool need_dw = weight.needs_grad();
  const bool need_db = bias && bias->needs_grad();
  std::vector<Tensor<T>> parents;
  if (need_dx) parents.push_back(input);
  if (need_dw) parents.push_back(weight);
  if (need_db) parents.push_back(*bias);
  if (parents.empty()) {
    return Tensor<T>::from_data({n, oc, oh, ow}, std::move(out));
  }

  auto x_impl = input.impl();
  auto w_impl = weight.impl();
  auto b_impl = bias ? bias->impl() : nullptr;
  auto backward = [=](const detail::TensorImpl<T>& out_t) {
    const T* dout = out_t.grad.data();
    std::vector<T> col_b(static_cast<size_t>(patch * spatial));
    std::vector<T> buf(static_cast<size_t>(std::max(patch * spatial, patch * oc)));
    if (need_db) {
      if (b_impl->grad.empty()) b_impl->grad.assign(b_impl->data.size(), T(0));
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t o = 0; o < oc; ++o) {
          const T* row = dout + (i * oc + o) * spatial;
          T s = T(0);
          for (int64_t p = 0; p < spatial; ++p) s += row[p];
          b_impl->grad[o] += s;
        }
      }
    }
    if (need_dw) {
      if (w_impl->grad.empty()) w_impl->grad.assign(w_impl->data.size(), T(0));
      for (int64_t i = 0; i < n; ++i) {
        detail::im2col(x_impl->data.data() + i * c * h * w, c, h, w, k, stride,
                       padding, oh, ow, col_b.data(), spatial);
        detail::transpose(patch, spatial, col_b.data(), buf.data());  // spatial x patch
        detail::matmul_nn(oc, patch, spatial, dout + i * oc * spatial, buf.data(),
                          w_impl->grad.data(), true);
      }
    }
    if (need_dx) {
      if (x_impl->grad.empty()) x_impl->grad.assign(x_impl->data.size(), T(0));
      std::vector<T> wt(static_cast<size_t>(patch * oc));
      detail::transpose(oc, patch, w_impl->data.data(), wt.data());  // patch x oc
      for (int64_t i = 0; i < n; ++i) {
        detail::matmul_nn(patch, spatial, oc, wt.data(), dout + i * oc * spatial,
                          col_b.data(), false);
        detail::col2im_add(col_b.data(), c, h, w, k, stride, padding, oh, ow,
                           x_impl->grad.data() + i * c * h * w);
      }
    }
  };
  return detail::make_op_result<T>({n, oc, oh, ow}, std::move(out), std::move(parents),
                                   std::move(backward), "conv2d");
}

template <typename T>
Tensor<T> conv2d(const Tensor<T>& input, const Tensor<T>& weight, int64_t stride,
                 int64_t padding) {
  return conv2d(input, weight, std::optional<Tensor<T>>{}, stride, padding);
}

/**
 * Batch normalization over NCHW input. Behavior routes on state.mode:
 * train and recalibrate normalize by batch statistics (population variance)
 * and update the state as described on BatchNormState; eval normalizes by
 * the stored running statistics and leaves the state untouched.
 */
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& input, BatchNormState<T>& state) {
  detail::check_rank(input, 4, "batch_norm", "input");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  if (c != state.channels()) {
    throw ShapeError("batch_norm: input shape " + detail::shape_str(input.shape()) +
                     " has " + std::to_string(c) + " channels, state has " +
                     std::to_string(state.channels()));
  }
  const int64_t m = n * h * w;  // samples per channel
  const bool batch_stats = state.mode != BNMode::kEval;
  if (batch_stats && m < 1) {
    throw NumericError("batch_norm: zero batch*spatial size in " +
                       std::string(to_string(state.mode)) + " mode");
  }

  const int64_t spatial = h * w;
  std::vector<double> mean(static_cast<size_t>(c)), var(static_cast<size_t>(c));
  const T* x = input.data().data();
  if (batch_stats) {
    for (int64_t ch = 0; ch < c; ++ch) {
      double s = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const T* row = x + (i * c + ch) * spatial;
        for (int64_t p = 0; p < spatial; ++p) s += static_cast<double>(row[p]);
      }
      const double mu = s / static_cast<double>(m);
      double m2 = 0.0;
      for (int64_t i = 0; i < n; ++i) {
        const T* row = x + (i * c + ch) * spatial;
        for (int64_t p = 0; p < spatial; ++p) {
          const double d = static_cast<double>(row[p]) - mu;
          m2 += d * d;
        }
      }
      mean[ch] = mu;
      var[ch] = m2 / static_cast<double>(m);
    }
    if (state.mode == BNMode::kTrain) {
      for (int64_t ch = 0; ch < c; ++ch) {
        state.running_mean[ch] = static_cast<T>(
            (1.0 - state.momentum) * static_cast<double>(state.running_mean[ch]) +
            state.momentum * mean[ch]);
        state.running_var[ch] = static_cast<T>(
            (1.0 - state.momentum) * static_cast<double>(state.running_var[ch]) +
            state.momentum * var[ch]);
      }
    } else {  // recalibrate: exact aggregate merge
      if (state.recal_mean.size() != static_cast<size_t>(c)) {
        throw NumericError("batch_norm: recalibrate mode without begin_recalibration");
      }
      const double bm = static_cast<double>(m);
      for (int64_t ch = 0; ch < c; ++ch) {
        const double total = state.recal_count + bm;
        const double delta = mean[ch] - state.recal_mean[ch];
        state.recal_mean[ch] += delta * bm / total;
        state.recal_m2[ch] += var[ch] * bm + delta * delta * state.recal_count * bm / total;
      }
      state.recal_count += bm;
    }
  } else {
    for (int64_t ch = 0; ch < c; ++ch) {
      mean[ch] = static_cast<double>(state.running_mean[ch]);
      var[ch] = static_cast<double>(state.running_var[ch]);
    }
  }

  std::vector<T> invstd(static_cast<size_t>(c));
  for (int64_t ch = 0; ch < c; ++ch) {
    invstd[ch] = static_cast<T>(1.0 / std::sqrt(var[ch] + state.epsilon));
  }

  const bool need_dx = input.needs_grad();
  const bool need_dg = state.gamma.tensor.needs_grad();
  const bool need_db = state.beta.tensor.needs_grad();
  const bool need_tape = need_dx || need_dg || need_db;

  // xhat is kept for the backward pass (and to avoid recomputing statistics);
  // without a tape the normalized values are not needed and only out is built.
  std::vector<T> xhat(need_tape ? input.data().size() : 0);
  std::vector<T> out(input.data().size());
  const T* gv = state.gamma.tensor.data().data();
  const T* bv = state.beta.tensor.data().data();
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t ch = 0; ch < c; ++ch) {
      const T mu = static_cast<T>(mean[ch]);
      const T is = invstd[ch];
      const T g = gv[ch], b = bv[ch];
      const T* row = x + (i * c + ch) * spatial;
      T* orow = out.data() + (i * c + ch) * spatial;
      if (need_tape) {
        T* xh = xhat.data() + (i * c + ch) * spatial;
        for (int64_t p = 0; p < spatial; ++p) {
          const T v = (row[p] - mu) * is;
          xh[p] = v;
          orow[p] = g * v + b;
        }
      } else {
        for (int64_t p = 0; p < spatial; ++p) {
          const T v = (row[p] - mu) * is;
          orow[p] = g * v + b;
        }
      }
    }
  }

  std::vector<Tensor<T>> parents;
  if (need_dx) parents.push_back(input);
  if (need_dg) parents.push_back(state.gamma.tensor);
  if (need_db) parents.push_back(state.beta.tensor);
  if (parents.empty()) {
    return Tensor<T>::from_data({n, c, h, w}, std::move(out));
  }

  auto x_impl = input.impl();
  auto g_impl = state.gamma.tensor.impl();
  auto b_impl = state.beta.tensor.impl();
  auto backward = [=, xhat = std::move(xhat), invstd = std::move(invstd)](
                      const detail::TensorImpl<T>& out_t) {
    const T* dout = out_t.grad.data();
    std::vector<double> sum_dy(static_cast<size_t>(c), 0.0);
    std::vector<double> sum_dy_xhat(static_cast<size_t>(c), 0.0);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t ch = 0; ch < c; ++ch) {
        const T* drow = dout + (i * c + ch) * spatial;
        const T* xh = xhat.data() + (i * c + ch) * spatial;
        double s = 0.0, sx = 0.0;
        for (int64_t p = 0; p < spatial; ++p) {
          s += static_cast<double>(drow[p]);
          sx += static_cast<double>(drow[p]) * static_cast<double>(xh[p]);
        }
        sum_dy[ch] += s;
        sum_dy_xhat[ch] += sx;
      }
    }
    if (need_dg) {
      if (g_impl->grad.empty()) g_impl->grad.assign(g_impl->data.size(), T(0));
      for (int64_t ch = 0; ch < c; ++ch) g_impl->grad[ch] += static_cast<T>(sum_dy_xhat[ch]);
    }
    if (need_db) {
      if (b_impl->grad.empty()) b_impl->grad.assign(b_impl->data.size(), T(0));
      for (int64_t ch = 0; ch < c; ++ch) b_impl->grad[ch] += static_cast<T>(sum_dy[ch]);
    }
    if (need_dx) {
      if (x_impl->grad.empty()) x_impl->grad.assign(x_impl->data.size(), T(0));
      const double inv_m = 1.0 / static_cast<double>(m);
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t ch = 0; ch < c; ++ch) {
          const T g = g_impl->data[ch];
          const T is = invstd[ch];
          const T* drow = dout + (i * c + ch) * spatial;
          const T* xh = xhat.data() + (i * c + ch) * spatial;
          T* dx = x_impl->grad.data() + (i * c + ch) * spatial;
          if (batch_stats) {
            const T mean_dy = static_cast<T>(sum_dy[ch] * inv_m);
            const T mean_dy_xhat = static_cast<T>(sum_dy_xhat[ch] * inv_m);
            for (int64_t p = 0; p < spatial; ++p) {
              dx[p] += g * is * (drow[p] - mean_dy - xh[p] * mean_dy_xhat);
            }
          } else {
            for (int64_t p = 0; p < spatial; ++p) dx[p] += g * is * drow[p];
          }
        }
      }
    }
  };
  return detail::make_op_result<T>({n, c, h, w}, std::move(out), std::move(parents),
                                   std::move(backward), "batch_norm");
}

/** Mean over the spatial dimensions: NCHW -> NC. */
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& input) {
  detail::check_rank(input, 4, "global_avg_pool", "input");
  const int64_t n = input.dim(0), c = input.dim(1), h = input.dim(2), w = input.dim(3);
  const int64_t spatial = h * w;
  std::vector<T> out(static_cast<size_t>(n * c));
  const T* x = input.data().data();
  for (int64_t i = 0; i < n * c; ++i) {
    double s = 0.0;
    const T* row = x + i * spatial;
    for (int64_t p = 0; p < spatial; ++p) s += static_cast<double>(row[p]);
    out[i] = static_cast<T>(s / static_cast<double>(spatial));
  }

  std::vector<Tensor<T>> parents;
  if (input.needs_grad()) parents.push_back(input);
  if (parents.empty()) return Tensor<T>::from_data({n, c}, std::move(out));

  auto x_impl = input.impl();
  auto backward = [=](const detail::TensorImpl<T>& out_t) {
    if (x_impl->grad.empty()) x_impl->grad.assign(x_impl->data.size(), T(0));
    const T scale = static_cast<T>(1.0 / static_cast<double>(spatial));
    for (int64_t i = 0; i < n * c; ++i) {
      const T g = out_t.grad[i] * scale;
      T* dx = x_impl->grad.data() + i * spatial;
      for (int64_t p = 0; p < spatial; ++p) dx[p] += g;
    }
  };
  return detail::make_op_result<T>({n, c}, std::move(out), std::move(parents),
                                   std::move(backward), "global_avg_pool");
}

/** Affine map: input (N x F) * weight (G x F)^T + bias (G) -> (N x G). */
template <typename T>
Tensor<T> linear(const Tensor<T>& input, const Tensor<T>& weight, const Tensor<T>& bias) {
  detail::check_rank(input, 2, "linear", "input");
  detail::check_rank(weight, 2, "linear", "weight");
  detail::check_rank(bias, 1, "linear", "bias");
  const int64_t n = input.dim(0), f = input.dim(1);
  const int64_t g = weight.dim(0), wf = weight.dim(1);
  if (f != wf) {
    throw ShapeError("linear: input shape " + detail::shape_str(input.shape()) +
                     " inner dim " + std::to_string(f) + " != weight shape " +
                     detail::shape_str(weight.shape()) + " inner dim " + std::to_string(wf));
  }
  if (bias.dim(0) != g) {
    throw ShapeError("linear: bias shape " + detail::shape_str(bias.shape()) +
                     " does not match " + std::to_string(g) + " outputs");
  }

  std::vector<T> wt(static_cast<size_t>(f * g));
  detail::transpose(g, f, weight.data().data(), wt.data());
  std::vector<T> out(static_cast<size_t>(n * g));
  detail::matmul_nn(n, g, f, input.data().data(), wt.data(), out.data(), false);
  const T* bv = bias.data().data();
  for (int64_t i = 0; i < n; ++i) {
    T* row = out.data() + i * g;
    for (int64_t j = 0; j < g; ++j) row[j] += bv[j];
  }

  const bool need_dx = input.needs_grad();
  const bool need_dw = weight.needs_grad();
  const bool need_db = bias.needs_grad();
  std::vector<Tensor<T>> parents;
  if (need_dx) parents.push_back(input);
  if (need_dw) parents.push_back(weight);
  if (need_db) parents.push_back(bias);
  if (parents.empty()) return Tensor<T>::from_data({n, g}, std::move(out));

  auto x_impl = input.impl();
  auto w_impl = weight.impl();
  auto b_impl = bias.impl();
  auto backward = [=](const detail::TensorImpl<T>& out_t) {
    const T* dout = out_t.grad.data();
    if (need_db) {
      if (b_impl->grad.empty()) b_impl->grad.assign(b_impl->data.size(), T(0));
      for (int64_t i = 0; i < n; ++i) {
        for (int64_t j = 0; j < g; ++j) b_impl->grad[j] += dout[i * g + j];
      }
    }
    if (need_dw) {
      if (w_impl->grad.empty()) w_impl->grad.assign(w_impl->data.size(), T(0));
      std::vector<T> dout_t(static_cast<size_t>(g * n));
      detail::transpose(n, g, dout, dout_t.data());
      detail::matmul_nn(g, f, n, dout_t.data(), x_impl->data.data(),
                        w_impl->grad.data(), true);
    }
    if (need_dx) {
      if (x_impl->grad.empty()) x_impl->grad.assign(x_impl->data.size(), T(0));
      detail::matmul_nn(n, f, g, dout, w_impl->data.data(), x_impl->grad.data(), true);
    }
  };
  return detail::make_op_result<T>({n, g}, std::move(out), std::move(parents),
                                   std::move(backward), "linear");
}

/** x * sigmoid(x), the activation used throughout MicroNet. */
template <typename T>
Tensor<T> silu(const Tensor<T>& input) {
  // The sigmoid is evaluated branch-by-sign in double so large |x| cannot
  // overflow exp; each element costs exactly one exp call either way.
  const auto sigmoid = [](double v) {
    if (v >= 0.0) return 1.0 / (1.0 + std::exp(-v));
    const double e = std::exp(v);
    return e / (1.0 + e);
  };
  const size_t count = input.data().size();
  std::vector<T> out(count);
  const T* x = input.data().data();

  std::vector<Tensor<T>> parents;
  if (input.needs_grad()) parents.push_back(input);
  if (parents.empty()) {
    for (size_t i = 0; i < count; ++i) {
      const double v = static_cast<double>(x[i]);
      out[i] = static_cast<T>(v * sigmoid(v));
    }
    return Tensor<T>::from_data(input.shape(), std::move(out));
  }

  std::vector<T> sig(count);
  for (size_t i = 0; i < count; ++i) {
    const double v = static_cast<double>(x[i]);
    const double s = sigmoid(v);
    sig[i] = static_cast<T>(s);
    out[i] = static_cast<T>(v * s);
  }

  auto x_impl = input.impl();
  auto backward = [x_impl, sig = std::move(sig)](const detail::TensorImpl<T>& out_t) {
    if (x_impl->grad.empty()) x_impl->grad.assign(x_impl->data.size(), T(0));
    for (size_t i = 0; i < sig.size(); ++i) {
      const T s = sig[i];
      const T x_v = x_impl->data[i];
      x_impl->grad[i] += out_t.grad[i] * (s * (T(1) + x_v * (T(1) - s)));
    }
  };
  return detail::make_op_result<T>(input.shape(), std::move(out), std::move(parents),
                                   std::move(backward), "silu");
}

/**
 * Mean label-smoothed cross-entropy over the batch:
 * q = (1 - epsilon) * onehot(label) + epsilon / K, loss = mean(-sum_k q_k log p_k).
 */
template <typename T>
Tensor<T> smoothed_cross_entropy(const Tensor<T>& logits,
                                 const std::vector<int64_t>& labels, double epsilon) {
  detail::check_rank(logits, 2, "smoothed_cross_entropy", "logits");
  if (epsilon < 0.0 || epsilon >= 1.0) {
    throw ConfigError("smoothed_cross_entropy: epsilon must be in [0,1), got " +
                      std::to_string(epsilon));
  }
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("smoothed_cross_entropy: " + std::to_string(labels.size()) +
                     " labels for batch of " + std::to_string(n));
  }
  for (int64_t i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) {
      throw ConfigError("smoothed_cross_entropy: label " + std::to_string(labels[i]) +
                        " outside [0," + std::to_string(k) + ")");
    }
  }

  const T* lg = logits.data().data();
  std::vector<T> softmax(static_cast<size_t>(n * k));
  double total = 0.0;
  const double uniform_w = epsilon / static_cast<double>(k);
  for (int64_t i = 0; i < n; ++i) {
    const T* row = lg + i * k;
    double mx = static_cast<double>(row[0]);
    for (int64_t j = 1; j < k; ++j) mx = std::max(mx, static_cast<double>(row[j]));
    double z = 0.0;
    for (int64_t j = 0; j < k; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
    const double lse = mx + std::log(z);
    double row_loss = 0.0;
    for (int64_t j = 0; j < k; ++j) {
      const double logp = static_cast<double>(row[j]) - lse;
      softmax[i * k + j] = static_cast<T>(std::exp(logp));
      double q = uniform_w;
      if (j == labels[i]) q += 1.0 - epsilon;
      row_loss -= q * logp;
    }
    total += row_loss;
  }
  std::vector<T> loss{static_cast<T>(total / static_cast<double>(n))};

  std::vector<Tensor<T>> parents;
  if (logits.needs_grad()) parents.push_back(logits);
  if (parents.empty()) return Tensor<T>::from_data({1}, std::move(loss));

  auto l_impl = logits.impl();
  auto backward = [=, softmax = std::move(softmax),
                   labels = labels](const detail::TensorImpl<T>& out_t) {
    if (l_impl->grad.empty()) l_impl->grad.assign(l_impl->data.size(), T(0));
    const T scale = out_t.grad[0] / static_cast<T>(n);
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t j = 0; j < k; ++j) {
        T q = static_cast<T>(uniform_w);
        if (j == labels[i]) q += static_cast<T>(1.0 - epsilon);
        l_impl->grad[i * k + j] += scale * (softmax[i * k + j] - q);
      }
    }
  };
  return detail::make_op_result<T>({1}, std::move(loss), std::move(parents),
                                   std::move(backward), "smoothed_cross_entropy");
}

/**
 * SGD with plain momentum: v <- momentum*v + grad + weight_decay*w,
 * then w <- w - lr*v. Gradients are cleared afterwards.
 */
template <typename T>
void sgd_step(std::vector<Parameter<T>*>& params, double lr, double momentum,
              double weight_decay) {
  if (lr <= 0.0) throw ConfigError("sgd_step: lr must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) {
    throw ConfigError("sgd_step: momentum must be in [0,1)");
  }
  if (weight_decay < 0.0) throw ConfigError("sgd_step: weight_decay must be >= 0");
  for (Parameter<T>* p : params) {
    if (!p->tensor.has_grad()) {
      throw GraphError("sgd_step: parameter '" + p->name + "' has no gradient");
    }
  }
  for (Parameter<T>* p : params) {
    auto impl = p->tensor.impl();
    if (p->momentum_buffer.empty()) p->momentum_buffer.assign(impl->data.size(), T(0));
    const T mom = static_cast<T>(momentum);
    const T wd = static_cast<T>(weight_decay);
    const T step = static_cast<T>(lr);
    for (size_t i = 0; i < impl->data.size(); ++i) {
      T v = mom * p->momentum_buffer[i] + impl->grad[i] + wd * impl->data[i];
      p->momentum_buffer[i] = v;
      impl->data[i] -= step * v;
    }
    p->tensor.clear_grad();
  }
}

}  // namespace fixres

#endif  // FIXRES_NN_HPP_
