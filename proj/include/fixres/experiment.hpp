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

#ifndef FIXRES_EXPERIMENT_HPP_
#define FIXRES_EXPERIMENT_HPP_

#include <string>
#include <vector>

#include "fixres/config.hpp"
#include "fixres/eval.hpp"
#include "fixres/train.hpp"

namespace fixres {

/** Build the protocol pool per config: synthesized, or loaded from FXDS. */
inline SplitProtocol build_protocol(const ExperimentConfig& config) {
  if (!config.dataset_path.empty()) {
    return make_split_protocol(read_dataset(config.dataset_path), config.splits);
  }
  return make_split_protocol(config.dataset, config.splits);
}

/** Everything produced for one seed of the end-to-end pipeline. */
template <typename T>
struct SeedRun {
  uint64_t seed = 0;
  MicroNet<T> baseline;
  MicroNet<T> fixres;
  int64_t selected_res = 0;
  SweepCurve selection_curve;
  TrainLog train_log;
  TrainLog finetune_log;
};

/**
 * One seed of the pipeline: train the baseline, pick the target resolution on
 * the selection split, then fine-tune a copy of the baseline there. All
 * randomness derives from `seed`; the dataset comes from the protocol pool.
 */
template <typename T>
SeedRun<T> run_seed(const ExperimentConfig& config, SplitProtocol& protocol,
                    uint64_t seed, const std::string& model_name) {
  SeedRun<T> run;
  run.seed = seed;

  ModelConfig mc = config.model;
  run.baseline = MicroNet<T>::build(mc, derive_stream(seed, 0x1017));
  TrainConfig tc = config.train;
  tc.seed = seed;
  run.train_log = train(run.baseline, protocol.dataset(), protocol.train_indices(), tc);

  TestPreproc preproc;
  preproc.out_size = mc.train_res;
  const auto& sel_split = protocol.split(config.select_split, model_name);
  auto [res, curve] = select_test_resolution(run.baseline, protocol.dataset(),
                                             sel_split, config.grid, preproc);
  run.selected_res = res;
  run.selection_curve = std::move(curve);

  FinetuneConfig fc = config.finetune;
  if (fc.target_res == 0) fc.target_res = run.selected_res;
  fc.augment.out_size = fc.target_res;
  fc.seed = seed;
  run.fixres = run.baseline.clone();
  run.finetune_log =
      finetune_fixres(run.fixres, protocol.dataset(), protocol.train_indices(), fc);
  return run;
}

}  // namespace fixres

#endif  // FIXRES_EXPERIMENT_HPP_
