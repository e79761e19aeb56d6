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

#ifndef FIXRES_CONFIG_HPP_
#define FIXRES_CONFIG_HPP_

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fixres/dataset.hpp"
#include "fixres/eval.hpp"
#include "fixres/model.hpp"
#include "fixres/train.hpp"

namespace fixres {

/**
 * Flat `key = value` config text: one pair per line, `#` comments, dotted
 * keys for grouping. Every key must be consumed by the reader; unknown keys
 * are hard errors so a typo cannot silently fall back to a default.
 */
class ConfigMap {
 public:
  static ConfigMap parse_file(const std::string& path);
  static ConfigMap parse_string(const std::string& text, const std::string& origin);

  bool has(const std::string& key) const;
  std::string get_string(const std::string& key, const std::string& fallback);
  std::string require_string(const std::string& key);
  int64_t get_int(const std::string& key, int64_t fallback);
  uint64_t get_u64(const std::string& key, uint64_t fallback);
  double get_double(const std::string& key, double fallback);
  bool get_bool(const std::string& key, bool fallback);
  std::vector<int64_t> get_int_list(const std::string& key,
                                    std::vector<int64_t> fallback);

  /** Throws ConfigError listing any keys never read. */
  void assert_fully_consumed() const;

 private:
  std::string origin_;
  std::map<std::string, std::string> values_;
  std::map<std::string, bool> consumed_;
};

/** Everything one experiment needs; parsed from a single config file. */
struct ExperimentConfig {
  std::string precision = "f32";  // f32 | f64
  std::string output_dir = ".";

  DatasetSpec dataset;
  std::string dataset_path;  // when set, read FXDS instead of synthesizing

  ModelConfig model;
  TrainConfig train;
  FinetuneConfig finetune;

  SplitSizes splits;
  std::vector<int64_t> grid;
  std::string select_split = "val";
  std::vector<uint64_t> seeds = {1, 2, 3};

  static ExperimentConfig from_map(ConfigMap& map);
  static ExperimentConfig from_file(const std::string& path);
};

/** Default sweep grid: train_res x {0.75..2.0}, rounded to multiples of 8. */
std::vector<int64_t> default_resolution_grid(int64_t train_res);

}  // namespace fixres

#endif  // FIXRES_CONFIG_HPP_
