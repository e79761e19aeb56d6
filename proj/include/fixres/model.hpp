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

#ifndef FIXRES_MODEL_HPP_
#define FIXRES_MODEL_HPP_

#include <cmath>
#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "fixres/checkpoint.hpp"
#include "fixres/nn.hpp"
#include "fixres/rng.hpp"
#include "fixres/tensor.hpp"

namespace fixres {

struct ModelConfig {
  double width_mult = 1.0;
  double depth_mult = 1.0;
  int64_t base_channels = 8;
  int64_t num_stages = 3;
  int64_t num_classes = 8;
  int64_t train_res = 32;

  // Smallest square input that survives all stride-2 stages with spatial
  // extent left for pooling.
  int64_t min_res() const { return int64_t(1) << (num_stages + 1); }

  int64_t stage_channels(int64_t stage) const {  // stage 0 is the stem
    const double raw =
        static_cast<double>(base_channels * (int64_t(1) << stage)) * width_mult;
    const int64_t c = std::llround(raw);
    return c < 1 ? 1 : c;
  }

  int64_t blocks_per_stage() const {
    const int64_t b = static_cast<int64_t>(std::ceil(depth_mult));
    return b < 1 ? 1 : b;
  }

  void validate() const {
    if (width_mult <= 0.0 || depth_mult <= 0.0) {
      throw ConfigError("model: width_mult and depth_mult must be > 0");
    }
    if (base_channels < 1) throw ConfigError("model: base_channels must be >= 1");
    if (num_stages < 2) throw ConfigError("model: num_stages must be >= 2");
    if (num_classes < 2) throw ConfigError("model: num_classes must be >= 2");
    if (train_res < min_res()) {
      throw ConfigError("model: train_res " + std::to_string(train_res) +
                        " below minimum resolution " + std::to_string(min_res()));
    }
  }
};

enum class Scope { kClassifier, kClassifierTopBlock, kAll };

inline Scope parse_scope(const std::string& s) {
  if (s == "classifier") return Scope::kClassifier;
  if (s == "classifier+top_block") return Scope::kClassifierTopBlock;
  if (s == "all") return Scope::kAll;
  throw ConfigError("unknown fine-tuning scope '" + s +
                    "' (classifier | classifier+top_block | all)");
}

/**
 * Stem conv, num_stages stages of conv-BN-SiLU blocks (first block of each
 * stage downsamples by stride 2), global average pooling, linear classifier.
 * GAP makes the logits shape independent of the input side, which is what
 * allows one trained model to be evaluated across a whole resolution sweep.
 */
template <typename T>
class MicroNet {
 public:
  struct Block {
    Parameter<T> conv;  // OIkk, no bias (BN absorbs it)
    BatchNormState<T> bn;
    int64_t stride = 1;
  };

  MicroNet() = default;

  static MicroNet build(const ModelConfig& config, uint64_t seed) {
    config.validate();
    MicroNet m;
    m.config_ = config;
    Rng rng(seed);
    int64_t in_c = 3;
    m.stem_ = make_block(rng, "stem", in_c, config.stage_channels(0), 1);
    in_c = config.stage_channels(0);
    for (int64_t s = 1; s <= config.num_stages; ++s) {
      std::vector<Block> stage;
      const int64_t out_c = config.stage_channels(s);
      for (int64_t b = 0; b < config.blocks_per_stage(); ++b) {
        const std::string name =
            "stage" + std::to_string(s) + ".block" + std::to_string(b + 1);
        stage.push_back(make_block(rng, name, in_c, out_c, b == 0 ? 2 : 1));
        in_c = out_c;
      }
      m.stages_.push_back(std::move(stage));
    }
    auto fc_w = Tensor<T>::randn({config.num_classes, in_c}, rng, T(0.01));
    m.fc_weight_ = Parameter<T>("classifier.weight", std::move(fc_w));
    m.fc_bias_ = Parameter<T>("classifier.bias", Tensor<T>::zeros({config.num_classes}));
    return m;
  }

  const ModelConfig& config() const { return config_; }

  /** Called with (bn parameter prefix, conv output) before each batch norm. */
  std::function<void(const std::string&, const Tensor<T>&)> bn_input_observer;

  Tensor<T> forward(const Tensor<T>& batch, BNMode mode) {
    if (batch.rank() != 4) {
      throw ShapeError("forward: batch must be NCHW, got shape " +
                       detail::shape_str(batch.shape()));
    }
    if (batch.dim(1) != 3) {
      throw ShapeError("forward: expected 3 input channels, got " +
                       std::to_string(batch.dim(1)));
    }
    if (batch.dim(2) != batch.dim(3)) {
      throw ShapeError("forward: input must be square, got " +
                       detail::shape_str(batch.shape()));
    }
    if (batch.dim(2) < config_.min_res()) {
      throw ShapeError("forward: resolution " + std::to_string(batch.dim(2)) +
                       " below minimum " + std::to_string(config_.min_res()) +
                       " (spatial extent would collapse)");
    }
    Tensor<T> h = apply_block(stem_, batch, mode);
    for (auto& stage : stages_) {
      for (auto& block : stage) h = apply_block(block, h, mode);
    }
    return linear(global_avg_pool(h), fc_weight_.tensor, fc_bias_.tensor);
  }

  int64_t num_params() const {
    int64_t n = 0;
    for (const Parameter<T>* p : parameters()) n += p->tensor.numel();
    return n;
  }

  std::vector<Parameter<T>*> parameters() {
    std::vector<Parameter<T>*> out;
    collect_block(stem_, out);
    for (auto& stage : stages_) {
      for (auto& block : stage) collect_block(block, out);
    }
    out.push_back(&fc_weight_);
    out.push_back(&fc_bias_);
    return out;
  }

  std::vector<const Parameter<T>*> parameters() const {
    std::vector<const Parameter<T>*> out;
    for (Parameter<T>* p : const_cast<MicroNet*>(this)->parameters()) out.push_back(p);
    return out;
  }

  std::vector<BatchNormState<T>*> bn_states() {
    std::vector<BatchNormState<T>*> out;
    out.push_back(&stem_.bn);
    for (auto& stage : stages_) {
      for (auto& block : stage) out.push_back(&block.bn);
    }
    return out;
  }

  /**
   * Partition parameters into (frozen, trainable). The classifier scope
   * trains only the final linear layer; classifier+top_block additionally
   * trains the last stage (conv weights and BN affine parameters).
   */
  std::pair<std::vector<Parameter<T>*>, std::vector<Parameter<T>*>> split_scope(
      Scope scope) {
    std::vector<Parameter<T>*> frozen, trainable;
    const std::string top_prefix = "stage" + std::to_string(config_.num_stages) + ".";
    for (Parameter<T>* p : parameters()) {
      const bool is_classifier = p->name.rfind("classifier.", 0) == 0;
      const bool is_top = p->name.rfind(top_prefix, 0) == 0;
      bool train = false;
      switch (scope) {
        case Scope::kClassifier: train = is_classifier; break;
        case Scope::kClassifierTopBlock: train = is_classifier || is_top; break;
        case Scope::kAll: train = true; break;
      }
      (train ? trainable : frozen).push_back(p);
    }
    return {std::move(frozen), std::move(trainable)};
  }

  /** Set requires_grad so only the scope's trainable parameters build tape. */
  void freeze_to_scope(Scope scope) {
    auto [frozen, trainable] = split_scope(scope);
    for (Parameter<T>* p : frozen) p->tensor.set_requires_grad(false);
    for (Parameter<T>* p : trainable) p->tensor.set_requires_grad(true);
  }

  std::vector<NamedArray> to_arrays() const {
    std::vector<NamedArray> arrays;
    NamedArray meta;
    meta.name = "__config__";
    meta.values = {static_cast<float>(config_.width_mult),
                   static_cast<float>(config_.depth_mult),
                   static_cast<float>(config_.base_channels),
                   static_cast<float>(config_.num_stages),
                   static_cast<float>(config_.num_classes),
                   static_cast<float>(config_.train_res)};
    meta.dims = {static_cast<int64_t>(meta.values.size())};
    arrays.push_back(std::move(meta));
    for (const Parameter<T>* p : parameters()) {
      arrays.push_back(to_array(p->name, p->tensor.shape(), p->tensor.data()));
    }
    auto* self = const_cast<MicroNet*>(this);
    for (BatchNormState<T>* bn : self->bn_states()) {
      const std::string prefix = bn_prefix(*bn);
      arrays.push_back(to_array(prefix + ".running_mean",
                                {bn->channels()}, bn->running_mean));
      arrays.push_back(to_array(prefix + ".running_var",
                                {bn->channels()}, bn->running_var));
    }
    return arrays;
  }

  static MicroNet from_arrays(const std::vector<NamedArray>& arrays) {
    std::map<std::string, const NamedArray*> by_name;
    for (const NamedArray& a : arrays) by_name[a.name] = &a;
    auto it = by_name.find("__config__");
    if (it == by_name.end() || it->second->values.size() != 6) {
      throw IoError("checkpoint: missing or malformed __config__ entry");
    }
    const auto& cv = it->second->values;
    ModelConfig config;
    config.width_mult = cv[0];
    config.depth_mult = cv[1];
    config.base_channels = static_cast<int64_t>(cv[2]);
    config.num_stages = static_cast<int64_t>(cv[3]);
    config.num_classes = static_cast<int64_t>(cv[4]);
    config.train_res = static_cast<int64_t>(cv[5]);
    MicroNet m = build(config, 0);
    for (Parameter<T>* p : m.parameters()) {
      fill_from(by_name, p->name, p->tensor.shape(), p->tensor.impl()->data);
    }
    for (BatchNormState<T>* bn : m.bn_states()) {
      const std::string prefix = bn_prefix(*bn);
      fill_from(by_name, prefix + ".running_mean", {bn->channels()}, bn->running_mean);
      fill_from(by_name, prefix + ".running_var", {bn->channels()}, bn->running_var);
    }
    return m;
  }

  void save(const std::string& path) const { write_fxck(path, to_arrays()); }

  static MicroNet load(const std::string& path) { return from_arrays(read_fxck(path)); }

  /** Deep copy: weights, BN statistics, and optimizer momentum state. */
  MicroNet clone() const {
    MicroNet m = build(config_, 0);
    auto* self = const_cast<MicroNet*>(this);
    auto src_params = self->parameters();
    auto dst_params = m.parameters();
    for (size_t i = 0; i < src_params.size(); ++i) {
      dst_params[i]->tensor.impl()->data = src_params[i]->tensor.impl()->data;
      dst_params[i]->momentum_buffer = src_params[i]->momentum_buffer;
    }
    auto src_bn = self->bn_states();
    auto dst_bn = m.bn_states();
    for (size_t i = 0; i < src_bn.size(); ++i) {
      dst_bn[i]->running_mean = src_bn[i]->running_mean;
      dst_bn[i]->running_var = src_bn[i]->running_var;
    }
    return m;
  }

 private:
  static Block make_block(Rng& rng, const std::string& name, int64_t in_c,
                          int64_t out_c, int64_t stride) {
    Block b;
    const double fan_out = 9.0 * static_cast<double>(out_c);  // 3x3 kernels
    auto w = Tensor<T>::randn({out_c, in_c, 3, 3}, rng,
                              static_cast<T>(std::sqrt(2.0 / fan_out)));
    b.conv = Parameter<T>(name + ".conv.weight", std::move(w));
    b.bn = BatchNormState<T>::create(out_c, name + ".bn");
    b.stride = stride;
    return b;
  }

  Tensor<T> apply_block(Block& block, const Tensor<T>& x, BNMode mode) {
    Tensor<T> conv_out = conv2d(x, block.conv.tensor, /*stride=*/block.stride,
                                /*padding=*/1);
    if (bn_input_observer) {
      bn_input_observer(bn_prefix(block.bn), conv_out);
    }
    block.bn.mode = mode;
    return silu(batch_norm(conv_out, block.bn));
  }

  static void collect_block(Block& b, std::vector<Parameter<T>*>& out) {
    out.push_back(&b.conv);
    out.push_back(&b.bn.gamma);
    out.push_back(&b.bn.beta);
  }

  // "stem.bn.gamma" -> "stem.bn"
  static std::string bn_prefix(const BatchNormState<T>& bn) {
    const std::string& g = bn.gamma.name;
    return g.substr(0, g.size() - 6);
  }

  template <typename V>
  static NamedArray to_array(const std::string& name, std::vector<int64_t> dims,
                             const V& values) {
    NamedArray a;
    a.name = name;
    a.dims = std::move(dims);
    a.values.reserve(values.size());
    for (auto v : values) a.values.push_back(static_cast<float>(v));
    return a;
  }

  static void fill_from(const std::map<std::string, const NamedArray*>& by_name,
                        const std::string& name, const std::vector<int64_t>& dims,
                        std::vector<T>& dst) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw IoError("checkpoint: missing tensor '" + name + "'");
    }
    if (it->second->dims != dims) {
      throw IoError("checkpoint: tensor '" + name + "' has shape " +
                    detail::shape_str(it->second->dims) + ", model expects " +
                    detail::shape_str(dims));
    }
    const auto& src = it->second->values;
    for (size_t i = 0; i < dst.size(); ++i) dst[i] = static_cast<T>(src[i]);
  }

  ModelConfig config_;
  Block stem_;
  std::vector<std::vector<Block>> stages_;
  Parameter<T> fc_weight_, fc_bias_;
};

}  // namespace fixres

#endif  // FIXRES_MODEL_HPP_
