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

#include "fixres/eval.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

namespace fixres {

namespace {

std::string fixed6(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.6f", v);
  return buf;
}

}  // namespace

int64_t pick_best_resolution(const SweepCurve& curve) {
  if (curve.empty()) throw ConfigError("pick_best_resolution: empty curve");
  size_t best = 0;
  for (size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].second.top1 > curve[best].second.top1) best = i;
  }
  return curve[best].first;
}

SplitProtocol::SplitProtocol(LabeledDataset pool, std::vector<int64_t> train,
                             std::vector<int64_t> val, std::vector<int64_t> test_a,
                             std::vector<int64_t> test_b)
    : pool_(std::move(pool)),
      train_(std::move(train)),
      val_(std::move(val)),
      test_a_(std::move(test_a)),
      test_b_(std::move(test_b)) {
  std::vector<char> seen(static_cast<size_t>(pool_.size()), 0);
  for (const auto* split : {&train_, &val_, &test_a_, &test_b_}) {
    for (int64_t idx : *split) {
      if (idx < 0 || idx >= pool_.size()) {
        throw ProtocolError("split index " + std::to_string(idx) +
                            " outside pool of " + std::to_string(pool_.size()));
      }
      if (seen[idx]) {
        throw ProtocolError("splits overlap at pool index " + std::to_string(idx));
      }
      seen[idx] = 1;
    }
  }
}

const std::vector<int64_t>& SplitProtocol::test_b_indices(
    const std::string& model_name) {
  int64_t& reads = test_b_reads_[model_name];
  if (reads >= 1) {
    throw ProtocolError("test_B read twice for model '" + model_name +
                        "'; the held-out split answers one question per model");
  }
  ++reads;
  return test_b_;
}

const std::vector<int64_t>& SplitProtocol::split(const std::string& split_name,
                                                 const std::string& model_name) {
  if (split_name == "train") return train_;
  if (split_name == "val") return val_;
  if (split_name == "test_a") return test_a_;
  if (split_name == "test_b") return test_b_indices(model_name);
  throw ConfigError("unknown split '" + split_name +
                    "' (train | val | test_a | test_b)");
}

int64_t SplitProtocol::test_b_reads(const std::string& model_name) const {
  auto it = test_b_reads_.find(model_name);
  return it == test_b_reads_.end() ? 0 : it->second;
}

SplitProtocol make_split_protocol(const DatasetSpec& spec, const SplitSizes& sizes) {
  const int64_t split_sizes[4] = {sizes.train, sizes.val, sizes.test_a, sizes.test_b};
  LabeledDataset pool;
  std::vector<std::vector<int64_t>> indices(4);
  int64_t next = 0;
  for (int s = 0; s < 4; ++s) {
    if (split_sizes[s] < 1) throw ConfigError("protocol: split sizes must be positive");
    if (split_sizes[s] % spec.num_classes != 0) {
      throw ConfigError("protocol: split size " + std::to_string(split_sizes[s]) +
                        " not divisible by " + std::to_string(spec.num_classes) +
                        " classes (label balance would break)");
    }
    DatasetSpec part = spec;
    part.samples_per_class = split_sizes[s] / spec.num_classes;
    part.seed = derive_stream(spec.seed, 0xA110C000ull + static_cast<uint64_t>(s));
    LabeledDataset d = synth_dataset(part);
    if (s == 0) {
      pool = std::move(d);
    } else {
      pool.labels.insert(pool.labels.end(), d.labels.begin(), d.labels.end());
      pool.pixels.insert(pool.pixels.end(), d.pixels.begin(), d.pixels.end());
    }
    for (int64_t i = 0; i < split_sizes[s]; ++i) indices[s].push_back(next + i);
    next += split_sizes[s];
  }
  return SplitProtocol(std::move(pool), std::move(indices[0]), std::move(indices[1]),
                       std::move(indices[2]), std::move(indices[3]));
}

SplitProtocol make_split_protocol(LabeledDataset pool, const SplitSizes& sizes) {
  const int64_t total = sizes.train + sizes.val + sizes.test_a + sizes.test_b;
  if (total > pool.size()) {
    throw ConfigError("protocol: split sizes sum to " + std::to_string(total) +
                      " but dataset has " + std::to_string(pool.size()) + " samples");
  }
  std::vector<std::vector<int64_t>> indices(4);
  const int64_t split_sizes[4] = {sizes.train, sizes.val, sizes.test_a, sizes.test_b};
  int64_t next = 0;
  for (int s = 0; s < 4; ++s) {
    if (split_sizes[s] < 1) throw ConfigError("protocol: split sizes must be positive");
    for (int64_t i = 0; i < split_sizes[s]; ++i) indices[s].push_back(next + i);
    next += split_sizes[s];
  }
  return SplitProtocol(std::move(pool), std::move(indices[0]), std::move(indices[1]),
                       std::move(indices[2]), std::move(indices[3]));
}

std::string GapReport::csv() const {
  std::ostringstream os;
  os << "model,params,top1_A,top1_B,gap\n";
  for (const GapRow& r : rows) {
    os << r.model << ',' << r.params << ',' << fixed6(r.on_a.top1) << ','
       << fixed6(r.on_b.top1) << ',' << fixed6(r.gap()) << '\n';
  }
  return os.str();
}

std::string format_params(int64_t params) {
  if (params >= 1000000) {
    const double m = std::llround(static_cast<double>(params) / 1e5) / 10.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1fM", m);
    return buf;
  }
  if (params >= 1000) {
    const double k = std::llround(static_cast<double>(params) / 1e2) / 10.0;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.1fK", k);
    return buf;
  }
  return std::to_string(params);
}

std::string format_percent(double fraction) {
  const double tenths = static_cast<double>(std::llround(fraction * 1000.0)) / 10.0;
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.1f", tenths);
  return buf;
}

std::string emit_table_markdown(const std::vector<TableRecord>& records) {
  std::ostringstream os;
  os << "| model | #params | train res | test res | top-1 (%) | top-5 (%) |\n";
  os << "|---|---|---|---|---|---|\n";
  for (const TableRecord& r : records) {
    os << "| " << r.model << " | " << format_params(r.params) << " | " << r.train_res
       << " | " << r.test_res << " | " << format_percent(r.top1) << " | "
       << format_percent(r.top5) << " |\n";
  }
  return os.str();
}

std::string emit_table_csv(const std::vector<TableRecord>& records) {
  std::ostringstream os;
  os << "model,params,train_res,test_res,top1,top5\n";
  for (const TableRecord& r : records) {
    os << r.model << ',' << r.params << ',' << r.train_res << ',' << r.test_res << ','
       << format_percent(r.top1) << ',' << format_percent(r.top5) << '\n';
  }
  return os.str();
}

std::vector<TableRecord> parse_table_csv(const std::string& csv) {
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) || line != "model,params,train_res,test_res,top1,top5") {
    throw IoError("table csv: missing or wrong header");
  }
  std::vector<TableRecord> records;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream row(line);
    std::string field;
    TableRecord r;
    std::getline(row, r.model, ',');
    std::getline(row, field, ',');
    r.params = std::stoll(field);
    std::getline(row, field, ',');
    r.train_res = std::stoll(field);
    std::getline(row, field, ',');
    r.test_res = std::stoll(field);
    std::getline(row, field, ',');
    r.top1 = std::stod(field) / 100.0;
    if (!std::getline(row, field, ',')) throw IoError("table csv: short row");
    r.top5 = std::stod(field) / 100.0;
    records.push_back(std::move(r));
  }
  return records;
}

std::string emit_frontier(std::vector<FrontierRecord> records) {
  std::sort(records.begin(), records.end(),
            [](const FrontierRecord& a, const FrontierRecord& b) {
              if (a.params != b.params) return a.params < b.params;
              return a.name < b.name;
            });
  std::ostringstream os;
  os << "name,params,top1\n";
  for (const FrontierRecord& r : records) {
    os << r.name << ',' << r.params << ',' << fixed6(r.top1) << '\n';
  }
  return os.str();
}

std::string sweep_csv(const std::string& model_name, const SweepCurve& curve) {
  std::ostringstream os;
  os << "model,test_res,top1,top5,n\n";
  for (const auto& [res, m] : curve) {
    os << model_name << ',' << res << ',' << fixed6(m.top1) << ',' << fixed6(m.top5)
       << ',' << m.n << '\n';
  }
  return os.str();
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  os << content;
  if (!os) throw IoError("failed writing " + path);
}

}  // namespace fixres
