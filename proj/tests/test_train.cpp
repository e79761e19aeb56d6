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

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixres/eval.hpp"
#include "fixres/train.hpp"

using namespace fixres;

namespace {

ModelConfig tiny_model_config(int64_t num_classes = 4) {
  ModelConfig c;
  c.base_channels = 4;
  c.num_stages = 2;
  c.num_classes = num_classes;
  c.train_res = 16;
  return c;
}

DatasetSpec tiny_data_spec(int64_t num_classes = 4) {
  DatasetSpec spec;
  spec.num_classes = num_classes;
  spec.samples_per_class = 64;
  spec.base_resolution = 32;
  spec.object_scale_lo = 0.5;
  spec.object_scale_hi = 0.7;
  spec.noise_level = 0.05;
  spec.seed = 77;
  return spec;
}

std::vector<int64_t> full_split(const LabeledDataset& ds) {
  std::vector<int64_t> ix(static_cast<size_t>(ds.size()));
  std::iota(ix.begin(), ix.end(), 0);
  return ix;
}

TrainConfig quick_train_config(int64_t epochs) {
  TrainConfig c;
  c.epochs = epochs;
  c.batch_size = 32;
  c.lr = 0.1;
  c.augment.out_size = 16;
  c.augment.area_lo = 0.4;
  c.seed = 3;
  return c;
}

std::vector<std::vector<float>> snapshot_params(MicroNet<float>& m) {
  std::vector<std::vector<float>> out;
  for (Parameter<float>* p : m.parameters()) {
    out.emplace_back(p->tensor.data().begin(), p->tensor.data().end());
  }
  return out;
}

double stats_shift(const std::vector<std::vector<float>>& before_mean,
                   const std::vector<std::vector<float>>& before_var,
                   MicroNet<float>& after) {
  double shift = 0.0;
  int64_t n = 0;
  size_t i = 0;
  for (BatchNormState<float>* bn : after.bn_states()) {
    for (size_t c = 0; c < bn->running_mean.size(); ++c) {
      shift += std::abs(bn->running_mean[c] - before_mean[i][c]);
      shift += std::abs(bn->running_var[c] - before_var[i][c]);
      n += 2;
    }
    ++i;
  }
  return shift / static_cast<double>(n);
}

}  // namespace

TEST_CASE("learning-rate schedules") {
  LrSchedule constant;
  constant.kind = LrSchedule::Kind::kConstant;
  CHECK(constant.lr_at(0.1, 0, 10) == doctest::Approx(0.1));
  CHECK(constant.lr_at(0.1, 9, 10) == doctest::Approx(0.1));

  LrSchedule cosine;  // default kind
  CHECK(cosine.lr_at(0.1, 0, 10) == doctest::Approx(0.1));
  CHECK(cosine.lr_at(0.1, 5, 10) == doctest::Approx(0.05));
  CHECK(cosine.lr_at(0.1, 10, 10) == doctest::Approx(0.0));

  LrSchedule step;
  step.kind = LrSchedule::Kind::kStep;
  step.milestones = {3, 6};
  step.gamma = 0.1;
  CHECK(step.lr_at(1.0, 2, 10) == doctest::Approx(1.0));
  CHECK(step.lr_at(1.0, 3, 10) == doctest::Approx(0.1));
  CHECK(step.lr_at(1.0, 7, 10) == doctest::Approx(0.01));
}

TEST_CASE("config validation rejects out-of-range hyperparameters") {
  TrainConfig t = quick_train_config(1);
  t.lr = 0.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = quick_train_config(1);
  t.momentum = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = quick_train_config(1);
  t.label_smoothing_epsilon = 1.0;
  CHECK_THROWS_AS(t.validate(), ConfigError);
  t = quick_train_config(1);
  t.augment.out_size = 0;
  CHECK_THROWS_AS(t.validate(), ConfigError);

  FinetuneConfig f;
  f.target_res = 0;
  f.augment.out_size = 16;
  CHECK_THROWS_AS(f.validate(), ConfigError);
  f.target_res = 16;
  f.recalibrate_batches = 0;
  CHECK_THROWS_AS(f.validate(), ConfigError);
}

TEST_CASE("train rejects mismatched augmentation size, classes, empty split") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto split = full_split(ds);
  auto model = MicroNet<float>::build(tiny_model_config(), 1);

  TrainConfig bad_size = quick_train_config(1);
  bad_size.augment.out_size = 24;
  CHECK_THROWS_AS(train(model, ds, split, bad_size), ConfigError);

  CHECK_THROWS_AS(train(model, ds, {}, quick_train_config(1)), ConfigError);

  auto wrong_classes = MicroNet<float>::build(tiny_model_config(6), 1);
  CHECK_THROWS_AS(train(wrong_classes, ds, split, quick_train_config(1)), ConfigError);
}

TEST_CASE("a separable 2-class set is learned to high accuracy") {
  LabeledDataset ds = synth_dataset(tiny_data_spec(2));
  auto model = MicroNet<float>::build(tiny_model_config(2), 1);
  TrainLog log = train(model, ds, full_split(ds), quick_train_config(12));
  REQUIRE(log.epochs.size() == 12);
  // Judge on a clean center-crop pass over the training images; the logged
  // minibatch top-1 sees random crops that can cut the object away.
  TestPreproc preproc;
  Metrics clean = evaluate(model, ds, full_split(ds), 16, preproc);
  CHECK(clean.top1 > 0.9);
  // Loss should have come down from the first epoch.
  CHECK(log.epochs.back().mean_loss < log.epochs.front().mean_loss);
}

TEST_CASE("zero training epochs leave the model bitwise untouched") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 1);
  auto before = snapshot_params(model);
  TrainLog log = train(model, ds, full_split(ds), quick_train_config(0));
  CHECK(log.epochs.empty());
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(std::equal(before[i].begin(), before[i].end(),
                     params[i]->tensor.data().begin()));
  }
}

TEST_CASE("training is deterministic in the seed") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto split = full_split(ds);
  auto m1 = MicroNet<float>::build(tiny_model_config(), 4);
  auto m2 = MicroNet<float>::build(tiny_model_config(), 4);
  TrainLog l1 = train(m1, ds, split, quick_train_config(2));
  TrainLog l2 = train(m2, ds, split, quick_train_config(2));
  REQUIRE(l1.epochs.size() == l2.epochs.size());
  for (size_t e = 0; e < l1.epochs.size(); ++e) {
    CHECK(l1.epochs[e].mean_loss == l2.epochs[e].mean_loss);
    CHECK(l1.epochs[e].train_top1 == l2.epochs[e].train_top1);
  }
  auto p1 = m1.parameters(), p2 = m2.parameters();
  for (size_t i = 0; i < p1.size(); ++i) {
    CHECK(p1[i]->tensor.bitwise_equal(p2[i]->tensor));
  }

  auto m3 = MicroNet<float>::build(tiny_model_config(), 4);
  TrainConfig other = quick_train_config(2);
  other.seed = 99;
  TrainLog l3 = train(m3, ds, split, other);
  CHECK(l3.epochs.back().mean_loss != l1.epochs.back().mean_loss);
}

TEST_CASE("a non-finite loss aborts with a divergence diagnostic") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 1);
  model.parameters()[0]->tensor.impl()->data[0] =
      std::numeric_limits<float>::quiet_NaN();
  try {
    train(model, ds, full_split(ds), quick_train_config(1));
    FAIL("expected a divergence error");
  } catch (const NumericError& e) {
    CHECK(std::string(e.what()).find("training diverged") != std::string::npos);
  }
}

TEST_CASE("train log CSV has the documented schema") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 1);
  TrainLog log = train(model, ds, full_split(ds), quick_train_config(2));
  const std::string path = "train_log_test.csv";
  log.write_csv(path);
  std::ifstream is(path);
  std::string line;
  REQUIRE(std::getline(is, line));
  CHECK(line == "epoch,loss,top1,seconds");
  int rows = 0;
  while (std::getline(is, line)) {
    CHECK(line.find(std::to_string(rows) + ",") == 0);
    ++rows;
  }
  CHECK(rows == 2);
  is.close();
  std::remove(path.c_str());
}

TEST_CASE("recalibration replaces BN stats with exact aggregates, weights fixed") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 6);
  train(model, ds, full_split(ds), quick_train_config(1));
  auto weights_before = snapshot_params(model);

  // Capture every BN input during the recalibration pass and aggregate the
  // per-channel mean/variance with a plain two-pass-style scalar accumulator.
  struct Agg {
    std::vector<double> sum, sumsq;
    int64_t count = 0;
  };
  std::map<std::string, Agg> observed;
  model.bn_input_observer = [&](const std::string& prefix, const Tensor<float>& x) {
    const int64_t n = x.dim(0), c = x.dim(1), hw = x.dim(2) * x.dim(3);
    Agg& agg = observed[prefix];
    if (agg.sum.empty()) {
      agg.sum.assign(static_cast<size_t>(c), 0.0);
      agg.sumsq.assign(static_cast<size_t>(c), 0.0);
    }
    const float* v = x.data().data();
    for (int64_t i = 0; i < n; ++i) {
      for (int64_t ch = 0; ch < c; ++ch) {
        for (int64_t s = 0; s < hw; ++s) {
          const double val = v[(i * c + ch) * hw + s];
          agg.sum[ch] += val;
          agg.sumsq[ch] += val * val;
        }
      }
    }
    agg.count += n * hw;
  };
  recalibrate_batchnorm(model, ds, full_split(ds), /*target_res=*/16,
                        /*num_batches=*/3, /*batch_size=*/32);
  model.bn_input_observer = nullptr;

  auto weights_after = snapshot_params(model);
  for (size_t i = 0; i < weights_before.size(); ++i) {
    CHECK(weights_before[i] == weights_after[i]);  // zero coordinates moved
  }

  for (BatchNormState<float>* bn : model.bn_states()) {
    const std::string prefix =
        bn->gamma.name.substr(0, bn->gamma.name.size() - 6);
    REQUIRE(observed.count(prefix) == 1);
    const Agg& agg = observed[prefix];
    for (size_t c = 0; c < bn->running_mean.size(); ++c) {
      const double mean = agg.sum[c] / static_cast<double>(agg.count);
      const double var = agg.sumsq[c] / static_cast<double>(agg.count) - mean * mean;
      CHECK(bn->running_mean[c] == doctest::Approx(mean).epsilon(1e-5));
      CHECK(bn->running_var[c] == doctest::Approx(var).epsilon(1e-5));
    }
  }
}

TEST_CASE("recalibrating at the training resolution shifts stats least") {
  // The center-crop distribution at train_res is closer to what training saw
  // than the same distribution at 2x train_res, so the stats move less.
  std::vector<double> shift_near, shift_far;
  for (uint64_t seed : {11ull, 12ull, 13ull}) {
    DatasetSpec spec = tiny_data_spec();
    spec.base_resolution = 64;
    spec.object_scale_lo = 0.35;
    spec.object_scale_hi = 0.85;
    spec.seed = 500 + seed;
    LabeledDataset ds = synth_dataset(spec);
    auto split = full_split(ds);
    auto model = MicroNet<float>::build(tiny_model_config(), seed);
    TrainConfig tc = quick_train_config(2);
    tc.seed = seed;
    train(model, ds, split, tc);

    std::vector<std::vector<float>> mean0, var0;
    for (BatchNormState<float>* bn : model.bn_states()) {
      mean0.push_back(bn->running_mean);
      var0.push_back(bn->running_var);
    }
    auto near = model.clone(), far = model.clone();
    recalibrate_batchnorm(near, ds, split, 16, 4, 64);
    recalibrate_batchnorm(far, ds, split, 32, 4, 64);
    shift_near.push_back(stats_shift(mean0, var0, near));
    shift_far.push_back(stats_shift(mean0, var0, far));
  }
  std::sort(shift_near.begin(), shift_near.end());
  std::sort(shift_far.begin(), shift_far.end());
  CHECK(shift_near[1] < shift_far[1]);  // medians over 3 seeds
}

TEST_CASE("fine-tuning touches only the scoped parameters") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto split = full_split(ds);
  auto model = MicroNet<float>::build(tiny_model_config(), 6);
  train(model, ds, split, quick_train_config(1));

  auto before = snapshot_params(model);
  std::vector<std::vector<float>> mean0, var0;
  for (BatchNormState<float>* bn : model.bn_states()) {
    mean0.push_back(bn->running_mean);
    var0.push_back(bn->running_var);
  }

  FinetuneConfig fc;
  fc.target_res = 24;
  fc.scope = Scope::kClassifier;
  fc.epochs = 1;
  fc.lr = 0.01;
  fc.recalibrate_bn = false;
  fc.augment.out_size = 24;
  fc.seed = 9;
  TrainLog log = finetune_fixres(model, ds, split, fc);
  REQUIRE(log.epochs.size() == 1);

  auto params = model.parameters();
  bool classifier_moved = false;
  for (size_t i = 0; i < params.size(); ++i) {
    const bool is_cls = params[i]->name.rfind("classifier.", 0) == 0;
    const bool same = before[i] == std::vector<float>(params[i]->tensor.data().begin(),
                                                      params[i]->tensor.data().end());
    if (is_cls) {
      classifier_moved = classifier_moved || !same;
    } else {
      CHECK(same);
    }
  }
  CHECK(classifier_moved);
  // With recalibration off and BN running in eval mode, the stats are frozen.
  size_t i = 0;
  for (BatchNormState<float>* bn : model.bn_states()) {
    CHECK(bn->running_mean == mean0[i]);
    CHECK(bn->running_var == var0[i]);
    ++i;
  }
  // All parameters are trainable again once fine-tuning returns.
  for (Parameter<float>* p : model.parameters()) CHECK(p->tensor.requires_grad());
}

TEST_CASE("zero fine-tune epochs without recalibration change nothing") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 6);
  auto before = snapshot_params(model);
  FinetuneConfig fc;
  fc.target_res = 16;
  fc.epochs = 0;
  fc.recalibrate_bn = false;
  fc.augment.out_size = 16;
  TrainLog log = finetune_fixres(model, ds, full_split(ds), fc);
  CHECK(log.epochs.empty());
  auto params = model.parameters();
  for (size_t i = 0; i < params.size(); ++i) {
    CHECK(std::equal(before[i].begin(), before[i].end(),
                     params[i]->tensor.data().begin()));
  }
}

TEST_CASE("fine-tuning validates the resolution range and augment size") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 6);
  FinetuneConfig fc;
  fc.target_res = 4;  // below min_res 8
  fc.augment.out_size = 4;
  CHECK_THROWS_AS(finetune_fixres(model, ds, full_split(ds), fc), ConfigError);
  fc.target_res = 128;  // above 4 * train_res = 64
  fc.augment.out_size = 128;
  CHECK_THROWS_AS(finetune_fixres(model, ds, full_split(ds), fc), ConfigError);
  fc.target_res = 24;
  fc.augment.out_size = 16;
  CHECK_THROWS_AS(finetune_fixres(model, ds, full_split(ds), fc), ConfigError);
}

TEST_CASE("fine-tuning is deterministic in the seed") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto split = full_split(ds);
  auto base = MicroNet<float>::build(tiny_model_config(), 6);
  train(base, ds, split, quick_train_config(1));

  FinetuneConfig fc;
  fc.target_res = 24;
  fc.epochs = 2;
  fc.augment.out_size = 24;
  fc.seed = 21;
  auto a = base.clone(), b = base.clone();
  TrainLog la = finetune_fixres(a, ds, split, fc);
  TrainLog lb = finetune_fixres(b, ds, split, fc);
  for (size_t e = 0; e < la.epochs.size(); ++e) {
    CHECK(la.epochs[e].mean_loss == lb.epochs[e].mean_loss);
  }
  auto pa = a.parameters(), pb = b.parameters();
  for (size_t i = 0; i < pa.size(); ++i) {
    CHECK(pa[i]->tensor.bitwise_equal(pb[i]->tensor));
  }
}

TEST_CASE("classifier-scope backward never materializes backbone gradients") {
  LabeledDataset ds = synth_dataset(tiny_data_spec());
  auto model = MicroNet<float>::build(tiny_model_config(), 6);
  model.freeze_to_scope(Scope::kClassifier);

  std::vector<int64_t> indices = {0, 1, 2, 3};
  std::vector<int64_t> labels;
  AugmentConfig aug;
  aug.out_size = 16;
  Tensor<float> x = detail::augmented_batch<float>(ds, indices, aug, 1, 0, labels);
  Tensor<float> loss = smoothed_cross_entropy(model.forward(x, BNMode::kEval),
                                              labels, 0.1);
  loss.backward();
  for (Parameter<float>* p : model.parameters()) {
    const bool is_cls = p->name.rfind("classifier.", 0) == 0;
    CHECK(p->tensor.has_grad() == is_cls);
  }
  model.freeze_to_scope(Scope::kAll);
}
