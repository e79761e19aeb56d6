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

#ifndef FIXRES_EVAL_HPP_
#define FIXRES_EVAL_HPP_

#include <algorithm>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "fixres/dataset.hpp"
#include "fixres/model.hpp"
#include "fixres/train.hpp"

namespace fixres {

struct Metrics {
  double top1 = 0.0;
  double top5 = 0.0;
  int64_t n = 0;
};

/** (test_res, metrics) pairs with strictly increasing resolutions. */
using SweepCurve = std::vector<std::pair<int64_t, Metrics>>;

/**
 * True when `label` ranks among the k largest of the row, ranking by value
 * descending with ties broken toward the lower class index.
 */
template <typename T>
bool in_top_k(const T* row, int64_t num_classes, int64_t label, int64_t k) {
  // Classes strictly better-ranked than `label`: larger value, or equal value
  // at a lower index.
  int64_t better = 0;
  const T lv = row[label];
  for (int64_t j = 0; j < num_classes; ++j) {
    if (row[j] > lv || (row[j] == lv && j < label)) ++better;
  }
  return better < k;
}

/** Top-1/top-5 over a row-major logit matrix; top-5 uses min(5, K). */
template <typename T>
Metrics metrics_from_logits(const T* logits, int64_t n, int64_t num_classes,
                            const std::vector<int64_t>& labels) {
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ShapeError("metrics: " + std::to_string(labels.size()) +
                     " labels for " + std::to_string(n) + " logit rows");
  }
  const int64_t k5 = std::min<int64_t>(5, num_classes);
  int64_t hit1 = 0, hit5 = 0;
  for (int64_t i = 0; i < n; ++i) {
    const T* row = logits + i * num_classes;
    if (in_top_k(row, num_classes, labels[i], 1)) ++hit1;
    if (in_top_k(row, num_classes, labels[i], k5)) ++hit5;
  }
  Metrics m;
  m.n = n;
  m.top1 = static_cast<double>(hit1) / static_cast<double>(n);
  m.top5 = static_cast<double>(hit5) / static_cast<double>(n);
  return m;
}

/** Single-crop evaluation: center crop at test_res, eval-mode forward. */
template <typename T>
Metrics evaluate(MicroNet<T>& model, const LabeledDataset& dataset,
                 const std::vector<int64_t>& split, int64_t test_res,
                 const TestPreproc& preproc, int64_t batch_size = 64) {
  if (split.empty()) throw ConfigError("evaluate: empty split");
  if (test_res < model.config().min_res()) {
    throw ShapeError("evaluate: resolution " + std::to_string(test_res) +
                     " below model minimum " +
                     std::to_string(model.config().min_res()));
  }
  TestPreproc at_res = preproc;
  at_res.out_size = test_res;
  at_res.validate();

  NoGradGuard no_grad;
  int64_t hit1 = 0, hit5 = 0, total = 0;
  std::vector<int64_t> batch_indices, labels;
  const size_t step = static_cast<size_t>(batch_size);
  for (size_t start = 0; start < split.size(); start += step) {
    const size_t end = std::min(split.size(), start + step);
    batch_indices.assign(split.begin() + start, split.begin() + end);
    Tensor<T> x = detail::eval_batch<T>(dataset, batch_indices, at_res, labels);
    Tensor<T> logits = model.forward(x, BNMode::kEval);
    const int64_t n = logits.dim(0), k = logits.dim(1);
    const int64_t k5 = std::min<int64_t>(5, k);
    const T* v = logits.data().data();
    for (int64_t i = 0; i < n; ++i) {
      if (in_top_k(v + i * k, k, labels[i], 1)) ++hit1;
      if (in_top_k(v + i * k, k, labels[i], k5)) ++hit5;
    }
    total += n;
  }
  Metrics out;
  out.n = total;
  out.top1 = static_cast<double>(hit1) / static_cast<double>(total);
  out.top5 = static_cast<double>(hit5) / static_cast<double>(total);
  return out;
}

/** Evaluate at every grid resolution; grid must be strictly increasing. */
template <typename T>
SweepCurve resolution_sweep(MicroNet<T>& model, const LabeledDataset& dataset,
                            const std::vector<int64_t>& split,
                            const std::vector<int64_t>& grid,
                            const TestPreproc& preproc) {
  if (grid.empty()) throw ConfigError("sweep: empty resolution grid");
  for (size_t i = 1; i < grid.size(); ++i) {
    if (grid[i] <= grid[i - 1]) {
      throw ConfigError("sweep: resolution grid must be strictly increasing");
    }
  }
  SweepCurve curve;
  for (int64_t res : grid) {
    curve.emplace_back(res, evaluate(model, dataset, split, res, preproc));
  }
  return curve;
}

/** Argmax of top-1 over the curve; ties go to the smaller resolution. */
int64_t pick_best_resolution(const SweepCurve& curve);

/** Resolution selection on a validation split (never on a test split). */
template <typename T>
std::pair<int64_t, SweepCurve> select_test_resolution(
    MicroNet<T>& model, const LabeledDataset& dataset,
    const std::vector<int64_t>& split, const std::vector<int64_t>& grid,
    const TestPreproc& preproc) {
  SweepCurve curve = resolution_sweep(model, dataset, split, grid, preproc);
  return {pick_best_resolution(curve), std::move(curve)};
}

/**
 * The dataset splits of one experiment. The two test splits are disjoint,
 * identically generated draws; test_B models a never-touched replication set,
 * so reads of it are counted per model and a second read is an error.
 */
class SplitProtocol {
 public:
  SplitProtocol(LabeledDataset pool, std::vector<int64_t> train,
                std::vector<int64_t> val, std::vector<int64_t> test_a,
                std::vector<int64_t> test_b);

  const LabeledDataset& dataset() const { return pool_; }
  const std::vector<int64_t>& train_indices() const { return train_; }
  const std::vector<int64_t>& val_indices() const { return val_; }
  const std::vector<int64_t>& test_a_indices() const { return test_a_; }

  /** Counted access; second read for the same model throws ProtocolError. */
  const std::vector<int64_t>& test_b_indices(const std::string& model_name);

  /** Split lookup by name; "test_b" routes through the counted accessor. */
  const std::vector<int64_t>& split(const std::string& split_name,
                                    const std::string& model_name);

  int64_t test_b_reads(const std::string& model_name) const;

 private:
  LabeledDataset pool_;
  std::vector<int64_t> train_, val_, test_a_, test_b_;
  std::map<std::string, int64_t> test_b_reads_;
};

/** Per-split sample counts for building a protocol pool. */
struct SplitSizes {
  int64_t train = 8000;
  int64_t val = 1000;
  int64_t test_a = 1000;
  int64_t test_b = 1000;
};

/**
 * Build the four splits as four independent draws from the generator (split
 * seeds derived from spec.seed), concatenated into one pool. Matching the
 * generator across splits is what makes test_A vs test_B a pure replication
 * comparison.
 */
SplitProtocol make_split_protocol(const DatasetSpec& spec, const SplitSizes& sizes);

/** Contiguous split ranges over an existing dataset (file-backed pools). */
SplitProtocol make_split_protocol(LabeledDataset pool, const SplitSizes& sizes);

struct GapRow {
  std::string model;
  int64_t params = 0;
  int64_t train_res = 0;
  int64_t test_res = 0;  // the selected resolution
  Metrics on_a;
  Metrics on_b;
  double gap() const { return on_a.top1 - on_b.top1; }
};

struct GapReport {
  std::vector<GapRow> rows;
  std::string csv() const;
};

/**
 * For each named model: select a test resolution on `select_split`, then
 * report metrics on test_A and test_B at that resolution. Selecting on
 * "test_b" burns the model's single test_B read before reporting, which is
 * exactly how that misuse gets caught.
 */
template <typename T>
GapReport run_protocol(std::vector<std::pair<std::string, MicroNet<T>*>> models,
                       SplitProtocol& protocol, const std::vector<int64_t>& grid,
                       const TestPreproc& preproc,
                       const std::string& select_split = "val") {
  GapReport report;
  for (auto& [name, model] : models) {
    const auto& sel = protocol.split(select_split, name);
    auto [res, curve] =
        select_test_resolution(*model, protocol.dataset(), sel, grid, preproc);
    GapRow row;
    row.model = name;
    row.params = model->num_params();
    row.train_res = model->config().train_res;
    row.test_res = res;
    row.on_a = evaluate(*model, protocol.dataset(), protocol.test_a_indices(), res,
                        preproc);
    row.on_b = evaluate(*model, protocol.dataset(), protocol.test_b_indices(name),
                        res, preproc);
    report.rows.push_back(std::move(row));
  }
  return report;
}

/** One row of the summary table. Accuracies are fractions in [0,1]. */
struct TableRecord {
  std::string model;
  int64_t params = 0;
  int64_t train_res = 0;
  int64_t test_res = 0;
  double top1 = 0.0;
  double top5 = 0.0;
};

/** "5.3M" style parameter counts (one decimal above a million). */
std::string format_params(int64_t params);

/** Percent with one decimal, rounding half away from zero: 0.802 -> "80.2". */
std::string format_percent(double fraction);

/** Markdown table: model, #params, train res, test res, top-1 (%), top-5 (%). */
std::string emit_table_markdown(const std::vector<TableRecord>& records);

/** CSV twin of the markdown table: model,params,train_res,test_res,top1,top5. */
std::string emit_table_csv(const std::vector<TableRecord>& records);

/** Parse emit_table_csv output back into records (round-trip checked). */
std::vector<TableRecord> parse_table_csv(const std::string& csv);

struct FrontierRecord {
  std::string name;
  int64_t params = 0;
  double top1 = 0.0;
};

/** Accuracy/parameter frontier data: rows sorted by params, then name. */
std::string emit_frontier(std::vector<FrontierRecord> records);

/** Sweep CSV: model,test_res,top1,top5,n. */
std::string sweep_csv(const std::string& model_name, const SweepCurve& curve);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace fixres

#endif  // FIXRES_EVAL_HPP_
