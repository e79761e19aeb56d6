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

#include "fixres/config.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace fixres {

namespace {

std::string trim(const std::string& s) {
  const auto begin = s.find_first_not_of(" \t\r");
  if (begin == std::string::npos) return "";
  const auto end = s.find_last_not_of(" \t\r");
  return s.substr(begin, end - begin + 1);
}

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> parts;
  std::istringstream is(s);
  std::string item;
  while (std::getline(is, item, ',')) {
    item = trim(item);
    if (!item.empty()) parts.push_back(item);
  }
  return parts;
}

}  // namespace

ConfigMap ConfigMap::parse_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("config: cannot open " + path);
  std::ostringstream buf;
  buf << is.rdbuf();
  return parse_string(buf.str(), path);
}

ConfigMap ConfigMap::parse_string(const std::string& text, const std::string& origin) {
  ConfigMap map;
  map.origin_ = origin;
  std::istringstream is(text);
  std::string line;
  int lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError(origin + ":" + std::to_string(lineno) +
                        ": expected `key = value`, got '" + line + "'");
    }
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": empty key");
    }
    if (map.values_.count(key)) {
      throw ConfigError(origin + ":" + std::to_string(lineno) + ": duplicate key '" +
                        key + "'");
    }
    map.values_[key] = value;
    map.consumed_[key] = false;
  }
  return map;
}

bool ConfigMap::has(const std::string& key) const { return values_.count(key) > 0; }

std::string ConfigMap::get_string(const std::string& key, const std::string& fallback) {
  auto it = values_.find(key);
  if (it == values_.end()) return fallback;
  consumed_[key] = true;
  return it->second;
}

std::string ConfigMap::require_string(const std::string& key) {
  if (!has(key)) throw ConfigError(origin_ + ": missing required key '" + key + "'");
  return get_string(key, "");
}

int64_t ConfigMap::get_int(const std::string& key, int64_t fallback) {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  try {
    size_t pos = 0;
    const int64_t out = std::stoll(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' expects an integer, got '" + v +
                      "'");
  }
}

uint64_t ConfigMap::get_u64(const std::string& key, uint64_t fallback) {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  try {
    size_t pos = 0;
    const uint64_t out = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key +
                      "' expects an unsigned integer, got '" + v + "'");
  }
}

double ConfigMap::get_double(const std::string& key, double fallback) {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  try {
    size_t pos = 0;
    const double out = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return out;
  } catch (const std::exception&) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a number, got '" + v +
                      "'");
  }
}

bool ConfigMap::get_bool(const std::string& key, bool fallback) {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError(origin_ + ": key '" + key + "' expects true/false, got '" + v +
                    "'");
}

std::vector<int64_t> ConfigMap::get_int_list(const std::string& key,
                                             std::vector<int64_t> fallback) {
  if (!has(key)) return fallback;
  const std::string v = get_string(key, "");
  std::vector<int64_t> out;
  for (const std::string& item : split_list(v)) {
    try {
      size_t pos = 0;
      out.push_back(std::stoll(item, &pos));
      if (pos != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError(origin_ + ": key '" + key +
                        "' expects comma-separated integers, got '" + v + "'");
    }
  }
  if (out.empty()) {
    throw ConfigError(origin_ + ": key '" + key + "' expects a non-empty list");
  }
  return out;
}

void ConfigMap::assert_fully_consumed() const {
  std::vector<std::string> unknown;
  for (const auto& [key, used] : consumed_) {
    if (!used) unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string joined;
    for (const std::string& k : unknown) {
      if (!joined.empty()) joined += ", ";
      joined += k;
    }
    throw ConfigError(origin_ + ": unknown key(s): " + joined);
  }
}

std::vector<int64_t> default_resolution_grid(int64_t train_res) {
  std::vector<int64_t> grid;
  for (const double f : {0.75, 1.0, 1.25, 1.5, 1.75, 2.0}) {
    const int64_t r =
        std::max<int64_t>(8, 8 * std::llround(static_cast<double>(train_res) * f / 8.0));
    if (grid.empty() || grid.back() != r) grid.push_back(r);
  }
  return grid;
}

namespace {

LrSchedule parse_schedule(const std::string& text, const std::string& key) {
  LrSchedule s;
  if (text == "constant") {
    s.kind = LrSchedule::Kind::kConstant;
    return s;
  }
  if (text == "cosine") {
    s.kind = LrSchedule::Kind::kCosine;
    return s;
  }
  // step:10;20:0.1 = decay by 0.1 at epochs 10 and 20
  if (text.rfind("step:", 0) == 0) {
    s.kind = LrSchedule::Kind::kStep;
    const auto second = text.find(':', 5);
    if (second == std::string::npos) {
      throw ConfigError("key '" + key + "': step schedule needs step:EPOCHS:GAMMA");
    }
    std::istringstream ms(text.substr(5, second - 5));
    std::string m;
    while (std::getline(ms, m, ';')) s.milestones.push_back(std::stoll(m));
    s.gamma = std::stod(text.substr(second + 1));
    return s;
  }
  throw ConfigError("key '" + key + "': unknown schedule '" + text +
                    "' (constant | cosine | step:EPOCHS:GAMMA)");
}

AugmentConfig parse_augment(ConfigMap& map, const std::string& prefix,
                            const AugmentConfig& defaults) {
  AugmentConfig a = defaults;
  a.area_lo = map.get_double(prefix + ".area_lo", a.area_lo);
  a.area_hi = map.get_double(prefix + ".area_hi", a.area_hi);
  a.aspect_lo = map.get_double(prefix + ".aspect_lo", a.aspect_lo);
  a.aspect_hi = map.get_double(prefix + ".aspect_hi", a.aspect_hi);
  a.flip_probability = map.get_double(prefix + ".flip_probability", a.flip_probability);
  return a;
}

}  // namespace

ExperimentConfig ExperimentConfig::from_map(ConfigMap& map) {
  ExperimentConfig c;
  c.precision = map.get_string("precision", c.precision);
  if (c.precision != "f32" && c.precision != "f64") {
    throw ConfigError("precision must be f32 or f64, got '" + c.precision + "'");
  }
  c.output_dir = map.get_string("output_dir", c.output_dir);

  c.dataset_path = map.get_string("dataset.path", "");
  c.dataset.num_classes = map.get_int("dataset.num_classes", c.dataset.num_classes);
  c.dataset.samples_per_class =
      map.get_int("dataset.samples_per_class", c.dataset.samples_per_class);
  c.dataset.base_resolution =
      map.get_int("dataset.base_resolution", c.dataset.base_resolution);
  c.dataset.object_scale_lo =
      map.get_double("dataset.object_scale_lo", c.dataset.object_scale_lo);
  c.dataset.object_scale_hi =
      map.get_double("dataset.object_scale_hi", c.dataset.object_scale_hi);
  c.dataset.noise_level = map.get_double("dataset.noise_level", c.dataset.noise_level);
  c.dataset.seed = map.get_u64("dataset.seed", c.dataset.seed);

  c.model.width_mult = map.get_double("model.width_mult", c.model.width_mult);
  c.model.depth_mult = map.get_double("model.depth_mult", c.model.depth_mult);
  c.model.base_channels = map.get_int("model.base_channels", c.model.base_channels);
  c.model.num_stages = map.get_int("model.num_stages", c.model.num_stages);
  c.model.num_classes = map.get_int("model.num_classes", c.dataset.num_classes);
  c.model.train_res = map.get_int("model.train_res", c.model.train_res);

  c.train.epochs = map.get_int("train.epochs", c.train.epochs);
  c.train.batch_size = map.get_int("train.batch_size", c.train.batch_size);
  c.train.lr = map.get_double("train.lr", c.train.lr);
  c.train.lr_schedule =
      parse_schedule(map.get_string("train.schedule", "cosine"), "train.schedule");
  c.train.momentum = map.get_double("train.momentum", c.train.momentum);
  c.train.weight_decay = map.get_double("train.weight_decay", c.train.weight_decay);
  c.train.label_smoothing_epsilon =
      map.get_double("train.label_smoothing", c.train.label_smoothing_epsilon);
  c.train.seed = map.get_u64("train.seed", c.train.seed);
  c.train.augment = parse_augment(map, "train.augment", AugmentConfig{});
  c.train.augment.out_size = c.model.train_res;

  c.finetune.target_res = map.get_int("finetune.target_res", 0);
  c.finetune.scope = parse_scope(map.get_string("finetune.scope", "classifier"));
  c.finetune.epochs = map.get_int("finetune.epochs", c.finetune.epochs);
  c.finetune.lr = map.get_double("finetune.lr", c.finetune.lr);
  c.finetune.label_smoothing_epsilon =
      map.get_double("finetune.label_smoothing", c.finetune.label_smoothing_epsilon);
  c.finetune.recalibrate_bn =
      map.get_bool("finetune.recalibrate_bn", c.finetune.recalibrate_bn);
  c.finetune.recalibrate_batches =
      map.get_int("finetune.recalibrate_batches", c.finetune.recalibrate_batches);
  c.finetune.seed = map.get_u64("finetune.seed", c.finetune.seed);
  c.finetune.augment = parse_augment(map, "finetune.augment", c.train.augment);
  // out_size follows the target resolution once that is known (it may come
  // from resolution selection at run time).

  c.splits.train = map.get_int("protocol.train_size", c.splits.train);
  c.splits.val = map.get_int("protocol.val_size", c.splits.val);
  c.splits.test_a = map.get_int("protocol.test_a_size", c.splits.test_a);
  c.splits.test_b = map.get_int("protocol.test_b_size", c.splits.test_b);
  c.grid = map.get_int_list("protocol.grid", default_resolution_grid(c.model.train_res));
  c.select_split = map.get_string("protocol.select_split", c.select_split);
  if (c.select_split != "val" && c.select_split != "test_a" &&
      c.select_split != "test_b") {
    throw ConfigError("protocol.select_split must be val, test_a or test_b, got '" +
                      c.select_split + "'");
  }
  std::vector<int64_t> seed_list = map.get_int_list("protocol.seeds", {1, 2, 3});
  c.seeds.clear();
  for (int64_t s : seed_list) {
    if (s < 0) throw ConfigError("protocol.seeds must be non-negative");
    c.seeds.push_back(static_cast<uint64_t>(s));
  }

  map.assert_fully_consumed();
  return c;
}

ExperimentConfig ExperimentConfig::from_file(const std::string& path) {
  ConfigMap map = ConfigMap::parse_file(path);
  return from_map(map);
}

}  // namespace fixres
