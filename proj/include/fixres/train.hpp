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

#ifndef FIXRES_TRAIN_HPP_
#define FIXRES_TRAIN_HPP_

#include <chrono>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numbers>
#include <string>
#include <vector>

#include "fixres/dataset.hpp"
#include "fixres/image.hpp"
#include "fixres/model.hpp"

namespace fixres {

struct LrSchedule {
  enum class Kind { kConstant, kCosine, kStep };
  Kind kind = Kind::kCosine;
  std::vector<int64_t> milestones;  // step schedule only
  double gamma = 0.1;

  double lr_at(double base_lr, int64_t epoch, int64_t total_epochs) const {
    switch (kind) {
      case Kind::kConstant:
        return base_lr;
      case Kind::kCosine:
        return base_lr * 0.5 *
               (1.0 + std::cos(std::numbers::pi * static_cast<double>(epoch) /
                               static_cast<double>(total_epochs)));
      case Kind::kStep: {
        double lr = base_lr;
        for (int64_t m : milestones) {
          if (epoch >= m) lr *= gamma;
        }
        return lr;
      }
    }
    return base_lr;
  }
};

struct TrainConfig {
  int64_t epochs = 10;
  int64_t batch_size = 64;
  double lr = 0.1;
  LrSchedule lr_schedule;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  double label_smoothing_epsilon = 0.1;
  AugmentConfig augment;
  uint64_t seed = 1;

  void validate() const {
    if (epochs < 0) throw ConfigError("train: epochs must be >= 0");
    if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
    if (lr <= 0.0) throw ConfigError("train: lr must be > 0");
    if (momentum < 0.0 || momentum >= 1.0) {
      throw ConfigError("train: momentum must be in [0,1)");
    }
    if (weight_decay < 0.0) throw ConfigError("train: weight_decay must be >= 0");
    if (label_smoothing_epsilon < 0.0 || label_smoothing_epsilon >= 1.0) {
      throw ConfigError("train: label smoothing epsilon must be in [0,1)");
    }
    augment.validate();
  }
};

struct FinetuneConfig {
  int64_t target_res = 0;
  Scope scope = Scope::kClassifier;
  int64_t epochs = 10;
  double lr = 0.01;
  double label_smoothing_epsilon = 0.1;
  bool recalibrate_bn = true;
  int64_t recalibrate_batches = 50;
  AugmentConfig augment;
  uint64_t seed = 1;

  void validate() const {
    if (target_res < 1) throw ConfigError("finetune: target_res must be positive");
    if (epochs < 0) throw ConfigError("finetune: epochs must be >= 0");
    if (lr <= 0.0) throw ConfigError("finetune: lr must be > 0");
    if (label_smoothing_epsilon < 0.0 || label_smoothing_epsilon >= 1.0) {
      throw ConfigError("finetune: label smoothing epsilon must be in [0,1)");
    }
    if (recalibrate_batches < 1) {
      throw ConfigError("finetune: recalibrate_batches must be positive");
    }
    augment.validate();
  }
};

struct TrainLog {
  struct Epoch {
    int64_t epoch = 0;
    double mean_loss = 0.0;
    double train_top1 = 0.0;
    double seconds = 0.0;
  };
  std::vector<Epoch> epochs;
  std::string checkpoint_path;

  void write_csv(const std::string& path) const {
    std::ofstream os(path);
    if (!os) throw IoError("train log: cannot open " + path);
    os << "epoch,loss,top1,seconds\n";
    char line[128];
    for (const Epoch& e : epochs) {
      std::snprintf(line, sizeof(line), "%lld,%.6f,%.6f,%.3f\n",
                    static_cast<long long>(e.epoch), e.mean_loss, e.train_top1,
                    e.seconds);
      os << line;
    }
  }
};

namespace detail {

/**
 * Assemble the training batch for the given dataset positions: each sample is
 * augmented by random_resized_crop under its own derived RNG stream, keyed by
 * (epoch, dataset index), so the result is independent of worker scheduling.
 */
template <typename T>
Tensor<T> augmented_batch(const LabeledDataset& dataset,
                          const std::vector<int64_t>& indices,
                          const AugmentConfig& augment, uint64_t seed,
                          int64_t epoch, std::vector<int64_t>& labels_out) {
  std::vector<Image> crops;
  crops.reserve(indices.size());
  labels_out.clear();
  const uint64_t epoch_seed = derive_stream(seed, 0x9E3779B97F4A7C15ull + epoch);
  for (int64_t idx : indices) {
    Rng rng(derive_stream(epoch_seed, static_cast<uint64_t>(idx)));
    crops.push_back(random_resized_crop(dataset.image(idx), rng, augment));
    labels_out.push_back(dataset.labels[idx]);
  }
  return images_to_tensor<T>(crops);
}

/** Center-crop evaluation batch at the given resolution. */
template <typename T>
Tensor<T> eval_batch(const LabeledDataset& dataset, const std::vector<int64_t>& indices,
                     const TestPreproc& preproc, std::vector<int64_t>& labels_out) {
  std::vector<Image> crops;
  crops.reserve(indices.size());
  labels_out.clear();
  for (int64_t idx : indices) {
    crops.push_back(center_crop_preproc(dataset.image(idx), preproc));
    labels_out.push_back(dataset.labels[idx]);
  }
  return images_to_tensor<T>(crops);
}

template <typename T>
int64_t argmax_hits(const Tensor<T>& logits, const std::vector<int64_t>& labels) {
  const int64_t n = logits.dim(0), k = logits.dim(1);
  const T* v = logits.data().data();
  int64_t hits = 0;
  for (int64_t i = 0; i < n; ++i) {
    int64_t best = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (v[i * k + j] > v[i * k + best]) best = j;
    }
    if (best == labels[i]) ++hits;
  }
  return hits;
}

struct EpochStats {
  double loss_sum = 0.0;
  int64_t hits = 0;
  int64_t samples = 0;
};

/** One pass over the shuffled dataset; shared by train and finetune. */
template <typename T>
EpochStats run_epoch(MicroNet<T>& model, const LabeledDataset& dataset,
                        const std::vector<int64_t>& split,
                        std::vector<Parameter<T>*>& trainable,
                        const AugmentConfig& augment, BNMode bn_mode, double epsilon,
                        double lr, double momentum, double weight_decay,
                        uint64_t seed, int64_t epoch, int64_t batch_size) {
  std::vector<int64_t> order = split;
  Rng shuffle_rng(derive_stream(seed, 0x5157F00Dull + epoch));
  for (int64_t i = static_cast<int64_t>(order.size()) - 1; i > 0; --i) {
    const int64_t j = shuffle_rng.uniform_int(0, i);
    std::swap(order[i], order[j]);
  }

  EpochStats stats;
  std::vector<int64_t> batch_indices, labels;
  const size_t step = static_cast<size_t>(batch_size);
  for (size_t start = 0; start < order.size(); start += step) {
    const size_t end = std::min(order.size(), start + step);
    batch_indices.assign(order.begin() + start, order.begin() + end);
    Tensor<T> x = augmented_batch<T>(dataset, batch_indices, augment, seed, epoch, labels);
    Tensor<T> logits = model.forward(x, bn_mode);
    Tensor<T> loss = smoothed_cross_entropy(logits, labels, epsilon);
    const double loss_v = static_cast<double>(loss.data()[0]);
    if (!std::isfinite(loss_v)) {
      throw NumericError("training diverged: loss " + std::to_string(loss_v) +
                         " at epoch " + std::to_string(epoch) + ", step " +
                         std::to_string(start / batch_size));
    }
    stats.hits += argmax_hits(logits, labels);
    stats.loss_sum += loss_v * static_cast<double>(batch_indices.size());
    stats.samples += static_cast<int64_t>(batch_indices.size());
    loss.backward();
    sgd_step(trainable, lr, momentum, weight_decay);
  }
  return stats;
}

}  // namespace detail

/**
 * Full training from the model's initial state: RandomResizedCrop at
 * train_res, label-smoothed cross-entropy, SGD with momentum. Deterministic
 * in config.seed. The model is updated in place; the log is returned.
 */
template <typename T>
TrainLog train(MicroNet<T>& model, const LabeledDataset& dataset,
               const std::vector<int64_t>& split, const TrainConfig& config) {
  config.validate();
  if (config.augment.out_size != model.config().train_res) {
    throw ConfigError("train: augment out_size " +
                      std::to_string(config.augment.out_size) +
                      " must equal model train_res " +
                      std::to_string(model.config().train_res));
  }
  if (split.empty()) throw ConfigError("train: empty training split");
  if (dataset.num_classes != model.config().num_classes) {
    throw ConfigError("train: dataset has " + std::to_string(dataset.num_classes) +
                      " classes, model expects " +
                      std::to_string(model.config().num_classes));
  }

  for (Parameter<T>* p : model.parameters()) p->tensor.set_requires_grad(true);
  auto trainable = model.parameters();
  TrainLog log;
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = config.lr_schedule.lr_at(config.lr, epoch, config.epochs);
    auto stats = detail::run_epoch<T>(model, dataset, split, trainable,
                                      config.augment, BNMode::kTrain,
                                      config.label_smoothing_epsilon, lr,
                                      config.momentum, config.weight_decay,
                                      config.seed, epoch, config.batch_size);
    const auto t1 = std::chrono::steady_clock::now();
    log.epochs.push_back({epoch, stats.loss_sum / stats.samples,
                          static_cast<double>(stats.hits) / stats.samples,
                          std::chrono::duration<double>(t1 - t0).count()});
  }
  return log;
}

/**
 * Replace every BN layer's running statistics with the exact aggregate
 * mean/variance of its inputs over num_batches center-cropped batches at
 * target_res. Weights are untouched; no gradients are recorded.
 */
template <typename T>
void recalibrate_batchnorm(MicroNet<T>& model, const LabeledDataset& dataset,
                           const std::vector<int64_t>& split, int64_t target_res,
                           int64_t num_batches, int64_t batch_size = 64) {
  if (split.empty()) throw ConfigError("recalibrate: empty split");
  if (num_batches < 1) throw ConfigError("recalibrate: num_batches must be positive");
  if (batch_size < 1) throw ConfigError("recalibrate: batch_size must be positive");
  TestPreproc preproc;
  preproc.out_size = target_res;

  for (BatchNormState<T>* bn : model.bn_states()) bn->begin_recalibration();
  NoGradGuard no_grad;
  std::vector<int64_t> batch_indices, labels;
  const int64_t total =
      std::min<int64_t>(static_cast<int64_t>(split.size()), num_batches * batch_size);
  for (int64_t start = 0; start < total; start += batch_size) {
    const int64_t end = std::min(total, start + batch_size);
    batch_indices.assign(split.begin() + start, split.begin() + end);
    Tensor<T> x = detail::eval_batch<T>(dataset, batch_indices, preproc, labels);
    model.forward(x, BNMode::kRecalibrate);
  }
  for (BatchNormState<T>* bn : model.bn_states()) bn->finish_recalibration();
}

/**
 * The resolution correction: optionally recalibrate BN statistics at
 * target_res, then retrain only the scope's parameters there with train-time
 * augmentation and label smoothing. BN layers run in eval mode during the
 * fine-tuning steps, so running statistics stay exactly as recalibrated (or
 * exactly as trained, when recalibrate_bn is off). Parameters outside the
 * scope are never touched by the optimizer and never enter the tape.
 */
template <typename T>
TrainLog finetune_fixres(MicroNet<T>& model, const LabeledDataset& dataset,
                         const std::vector<int64_t>& split,
                         const FinetuneConfig& config) {
  config.validate();
  const ModelConfig& mc = model.config();
  if (config.target_res < mc.min_res() || config.target_res > 4 * mc.train_res) {
    throw ConfigError("finetune: target_res " + std::to_string(config.target_res) +
                      " outside supported range [" + std::to_string(mc.min_res()) +
                      "," + std::to_string(4 * mc.train_res) + "]");
  }
  if (config.augment.out_size != config.target_res) {
    throw ConfigError("finetune: augment out_size " +
                      std::to_string(config.augment.out_size) +
                      " must equal target_res " + std::to_string(config.target_res));
  }
  if (split.empty()) throw ConfigError("finetune: empty split");

  if (config.recalibrate_bn) {
    recalibrate_batchnorm(model, dataset, split, config.target_res,
                          config.recalibrate_batches);
  }

  model.freeze_to_scope(config.scope);
  auto [frozen, trainable] = model.split_scope(config.scope);
  // Fixed optimizer settings: momentum 0.9, no weight decay. The short
  // fine-tune is not the phase where decay earns its keep, and fewer knobs
  // keeps the correction cheap to configure.
  constexpr double kMomentum = 0.9;
  constexpr double kWeightDecay = 0.0;
  TrainLog log;
  for (int64_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    auto stats = detail::run_epoch<T>(model, dataset, split, trainable,
                                      config.augment, BNMode::kEval,
                                      config.label_smoothing_epsilon, config.lr,
                                      kMomentum, kWeightDecay, config.seed, epoch,
                                      /*batch_size=*/64);
    const auto t1 = std::chrono::steady_clock::now();
    log.epochs.push_back({epoch, stats.loss_sum / stats.samples,
                          static_cast<double>(stats.hits) / stats.samples,
                          std::chrono::duration<double>(t1 - t0).count()});
  }
  for (Parameter<T>* p : model.parameters()) p->tensor.set_requires_grad(true);
  return log;
}

}  // namespace fixres

#endif  // FIXRES_TRAIN_HPP_
