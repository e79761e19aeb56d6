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

// Single executable for the whole pipeline: dataset synthesis, training,
// resolution-correction fine-tuning, sweeps, and the dual-test-set protocol.
// Logs go to stderr, data to files; stdout carries one-line summaries.
// Exit codes: 0 success, 2 validation error, 3 numeric failure, 4 protocol
// violation.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "fixres/experiment.hpp"

namespace {

using namespace fixres;

int worker_cap() {
  // Accepted for forward compatibility; execution is single-threaded, which
  // is also what keeps runs bitwise reproducible.
  const char* env = std::getenv("FIXRES_THREADS");
  if (!env) return 1;
  const int v = std::atoi(env);
  if (v < 1) throw ConfigError("FIXRES_THREADS must be a positive integer");
  return v;
}

DatasetSpec dataset_spec_from_file(const std::string& path) {
  ConfigMap map = ConfigMap::parse_file(path);
  DatasetSpec spec;
  spec.num_classes = map.get_int("dataset.num_classes", spec.num_classes);
  spec.samples_per_class =
      map.get_int("dataset.samples_per_class", spec.samples_per_class);
  spec.base_resolution = map.get_int("dataset.base_resolution", spec.base_resolution);
  spec.object_scale_lo =
      map.get_double("dataset.object_scale_lo", spec.object_scale_lo);
  spec.object_scale_hi =
      map.get_double("dataset.object_scale_hi", spec.object_scale_hi);
  spec.noise_level = map.get_double("dataset.noise_level", spec.noise_level);
  spec.seed = map.get_u64("dataset.seed", spec.seed);
  map.assert_fully_consumed();
  spec.validate();
  return spec;
}

int cmd_synth_data(const std::string& spec_path, const std::string& out_path) {
  const DatasetSpec spec = dataset_spec_from_file(spec_path);
  const LabeledDataset ds = synth_dataset(spec);
  write_dataset(ds, out_path);
  std::printf("synth-data out=%s count=%lld classes=%lld resolution=%lld\n",
              out_path.c_str(), static_cast<long long>(ds.size()),
              static_cast<long long>(ds.num_classes),
              static_cast<long long>(ds.height));
  return 0;
}

template <typename T>
int cmd_train(const ExperimentConfig& config, const std::string& out_ckpt,
              uint64_t seed) {
  SplitProtocol protocol = build_protocol(config);
  MicroNet<T> model = MicroNet<T>::build(config.model, derive_stream(seed, 0x1017));
  TrainConfig tc = config.train;
  tc.seed = seed;
  std::cerr << "training seed=" << seed << " epochs=" << tc.epochs << " on "
            << protocol.train_indices().size() << " samples\n";
  TrainLog log = train(model, protocol.dataset(), protocol.train_indices(), tc);
  model.save(out_ckpt);
  log.checkpoint_path = out_ckpt;
  log.write_csv(out_ckpt + ".log.csv");
  const double final_top1 = log.epochs.empty() ? 0.0 : log.epochs.back().train_top1;
  std::printf("train ckpt=%s epochs=%lld final_train_top1=%.6f\n", out_ckpt.c_str(),
              static_cast<long long>(tc.epochs), final_top1);
  return 0;
}

template <typename T>
int cmd_finetune(const ExperimentConfig& config, const std::string& in_ckpt,
                 const std::string& out_ckpt) {
  if (config.finetune.target_res == 0) {
    throw ConfigError("finetune subcommand requires finetune.target_res > 0");
  }
  SplitProtocol protocol = build_protocol(config);
  MicroNet<T> model = MicroNet<T>::load(in_ckpt);
  FinetuneConfig fc = config.finetune;
  fc.augment.out_size = fc.target_res;
  std::cerr << "fine-tuning at res=" << fc.target_res << " epochs=" << fc.epochs
            << "\n";
  TrainLog log = finetune_fixres(model, protocol.dataset(), protocol.train_indices(), fc);
  model.save(out_ckpt);
  log.checkpoint_path = out_ckpt;
  log.write_csv(out_ckpt + ".log.csv");
  std::printf("finetune ckpt=%s target_res=%lld epochs=%lld\n", out_ckpt.c_str(),
              static_cast<long long>(fc.target_res),
              static_cast<long long>(fc.epochs));
  return 0;
}

template <typename T>
int cmd_sweep(const ExperimentConfig& config, const std::string& in_ckpt,
              std::vector<int64_t> grid, const std::string& split_name,
              const std::string& out_csv) {
  SplitProtocol protocol = build_protocol(config);
  MicroNet<T> model = MicroNet<T>::load(in_ckpt);
  if (grid.empty()) grid = config.grid;
  TestPreproc preproc;
  preproc.out_size = model.config().train_res;
  const auto& split = protocol.split(split_name, in_ckpt);
  SweepCurve curve = resolution_sweep(model, protocol.dataset(), split, grid, preproc);
  write_text_file(out_csv, sweep_csv(in_ckpt, curve));
  std::printf("sweep out=%s argmax_res=%lld\n", out_csv.c_str(),
              static_cast<long long>(pick_best_resolution(curve)));
  return 0;
}

template <typename T>
int cmd_protocol(const ExperimentConfig& config, const std::string& out_dir) {
  namespace fs = std::filesystem;
  fs::create_directories(out_dir);
  fs::create_directories(out_dir + "/logs");

  SplitProtocol protocol = build_protocol(config);
  TestPreproc preproc;
  preproc.out_size = config.model.train_res;

  GapReport gaps;
  std::vector<TableRecord> table;
  std::vector<FrontierRecord> frontier;
  for (uint64_t seed : config.seeds) {
    const std::string tag = "seed" + std::to_string(seed);
    std::cerr << "protocol " << tag << ": train\n";
    SeedRun<T> run = run_seed<T>(config, protocol, seed, "baseline-" + tag);
    run.baseline.save(out_dir + "/baseline-" + tag + ".fxck");
    run.fixres.save(out_dir + "/fixres-" + tag + ".fxck");
    run.train_log.write_csv(out_dir + "/logs/train-" + tag + ".csv");
    run.finetune_log.write_csv(out_dir + "/logs/finetune-" + tag + ".csv");
    write_text_file(out_dir + "/sweep-baseline-" + tag + ".csv",
                    sweep_csv("baseline-" + tag, run.selection_curve));

    std::vector<std::pair<std::string, MicroNet<T>*>> models = {
        {"baseline-" + tag, &run.baseline}, {"fixres-" + tag, &run.fixres}};
    GapReport seed_report = run_protocol(models, protocol, config.grid, preproc,
                                         config.select_split);
    for (GapRow& row : seed_report.rows) {
      table.push_back({row.model, row.params, row.train_res, row.test_res,
                       row.on_a.top1, row.on_a.top5});
      frontier.push_back({row.model, row.params, row.on_a.top1});
      std::printf("protocol %s selected_res=%lld top1_A=%.6f top1_B=%.6f gap=%.6f\n",
                  row.model.c_str(), static_cast<long long>(row.test_res),
                  row.on_a.top1, row.on_b.top1, row.gap());
      gaps.rows.push_back(std::move(row));
    }
  }
  write_text_file(out_dir + "/gap.csv", gaps.csv());
  write_text_file(out_dir + "/table.md", emit_table_markdown(table));
  write_text_file(out_dir + "/table.csv", emit_table_csv(table));
  write_text_file(out_dir + "/frontier.csv", emit_frontier(frontier));
  std::printf("protocol out_dir=%s models=%zu\n", out_dir.c_str(), gaps.rows.size());
  return 0;
}

template <typename T>
int dispatch(const std::string& cmd, const ExperimentConfig& config,
             const std::string& in_ckpt, const std::string& out_path,
             const std::vector<int64_t>& grid, const std::string& split_name,
             uint64_t seed) {
  if (cmd == "train") return cmd_train<T>(config, out_path, seed);
  if (cmd == "finetune") return cmd_finetune<T>(config, in_ckpt, out_path);
  if (cmd == "sweep") return cmd_sweep<T>(config, in_ckpt, grid, split_name, out_path);
  if (cmd == "protocol") return cmd_protocol<T>(config, out_path);
  throw ConfigError("unknown command " + cmd);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"resolution-discrepancy laboratory"};
  app.require_subcommand(1);

  std::string spec_path, config_path, in_ckpt, out_path, split_name = "val";
  std::vector<int64_t> grid;
  uint64_t seed_override = 0;
  bool has_seed_override = false;

  auto* synth = app.add_subcommand("synth-data", "generate an FXDS dataset file");
  synth->add_option("--spec", spec_path, "dataset spec file")->required();
  synth->add_option("--out", out_path, "output FXDS path")->required();

  auto* train_cmd = app.add_subcommand("train", "train a model from scratch");
  train_cmd->add_option("--config", config_path, "experiment config")->required();
  train_cmd->add_option("--out", out_path, "output checkpoint path")->required();
  train_cmd->add_option("--seed", seed_override, "override train seed")
      ->each([&](const std::string&) { has_seed_override = true; });

  auto* ft = app.add_subcommand("finetune", "resolution-correction fine-tune");
  ft->add_option("--config", config_path, "experiment config")->required();
  ft->add_option("--ckpt", in_ckpt, "input checkpoint")->required();
  ft->add_option("--out", out_path, "output checkpoint path")->required();

  auto* sweep = app.add_subcommand("sweep", "accuracy vs test resolution");
  sweep->add_option("--config", config_path, "experiment config")->required();
  sweep->add_option("--ckpt", in_ckpt, "input checkpoint")->required();
  sweep->add_option("--grid", grid, "resolutions (default: config grid)")
      ->delimiter(',');
  sweep->add_option("--split", split_name, "split to evaluate (default val)");
  sweep->add_option("--out", out_path, "output CSV path")->required();

  auto* proto = app.add_subcommand("protocol", "end-to-end dual-test-set run");
  proto->add_option("--config", config_path, "experiment config")->required();
  proto->add_option("--out-dir", out_path, "output directory")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    worker_cap();
    if (synth->parsed()) return cmd_synth_data(spec_path, out_path);

    ExperimentConfig config = ExperimentConfig::from_file(config_path);
    const std::string cmd = app.get_subcommands().front()->get_name();
    const uint64_t seed =
        has_seed_override ? seed_override
                          : (config.seeds.empty() ? config.train.seed : config.seeds[0]);
    if (config.precision == "f64") {
      return dispatch<double>(cmd, config, in_ckpt, out_path, grid, split_name, seed);
    }
    return dispatch<float>(cmd, config, in_ckpt, out_path, grid, split_name, seed);
  } catch (const ProtocolError& e) {
    std::cerr << "protocol violation: " << e.what() << "\n";
    return 4;
  } catch (const NumericError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const GraphError& e) {
    std::cerr << "numeric failure: " << e.what() << "\n";
    return 3;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
}
