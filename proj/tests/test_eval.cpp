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

#include <numeric>
#include <string>
#include <vector>

#include "doctest.h"
#include "fixres/eval.hpp"
#include "oracles.hpp"

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

LabeledDataset tiny_dataset() {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.samples_per_class = 24;
  spec.base_resolution = 32;
  spec.seed = 17;
  return synth_dataset(spec);
}

std::vector<int64_t> full_split(const LabeledDataset& ds) {
  std::vector<int64_t> ix(static_cast<size_t>(ds.size()));
  std::iota(ix.begin(), ix.end(), 0);
  return ix;
}

SweepCurve curve_from(const std::vector<std::pair<int64_t, double>>& points) {
  SweepCurve curve;
  for (auto [res, top1] : points) {
    Metrics m;
    m.top1 = top1;
    m.top5 = 1.0;
    m.n = 100;
    curve.emplace_back(res, m);
  }
  return curve;
}

}  // namespace

TEST_CASE("in_top_k matches a sort-based oracle over random rows with ties") {
  Rng rng(404);
  for (int trial = 0; trial < 10000; ++trial) {
    const int64_t k_classes = rng.uniform_int(2, 12);
    std::vector<double> row(static_cast<size_t>(k_classes));
    // Coarse values mint plenty of exact ties.
    for (double& v : row) v = static_cast<double>(rng.uniform_int(0, 4));
    const int64_t label = rng.uniform_int(0, k_classes - 1);
    const int64_t k = rng.uniform_int(1, k_classes);
    CHECK(in_top_k(row.data(), k_classes, label, k) ==
          oracles::topk_reference(row, label, k));
  }
}

TEST_CASE("top-k ties go to the lower class index") {
  const std::vector<double> row = {1.0, 3.0, 3.0, 0.5};
  CHECK(in_top_k(row.data(), 4, 1, 1));        // index 1 wins the tie at 3.0
  CHECK_FALSE(in_top_k(row.data(), 4, 2, 1));  // index 2 loses it
  CHECK(in_top_k(row.data(), 4, 2, 2));
}

TEST_CASE("metrics_from_logits counts hits and keeps top1 <= top5") {
  // Rows are identity-like: the label always sits at the max -> all correct.
  std::vector<double> perfect(3 * 3, 0.0);
  perfect[0 * 3 + 0] = 1.0;
  perfect[1 * 3 + 1] = 1.0;
  perfect[2 * 3 + 2] = 1.0;
  Metrics m = metrics_from_logits(perfect.data(), 3, 3, {0, 1, 2});
  CHECK(m.top1 == doctest::Approx(1.0));
  CHECK(m.top5 == doctest::Approx(1.0));
  CHECK(m.n == 3);

  Rng rng(7);
  std::vector<double> noisy(50 * 8);
  for (double& v : noisy) v = rng.normal();
  std::vector<int64_t> labels(50);
  for (auto& l : labels) l = rng.uniform_int(0, 7);
  Metrics nm = metrics_from_logits(noisy.data(), 50, 8, labels);
  CHECK(nm.top1 <= nm.top5);

  CHECK_THROWS_AS(metrics_from_logits(noisy.data(), 50, 8, {0, 1}), ShapeError);
}

TEST_CASE("five classes make top-5 trivially perfect") {
  Rng rng(8);
  std::vector<double> logits(40 * 5);
  for (double& v : logits) v = rng.normal();
  std::vector<int64_t> labels(40);
  for (auto& l : labels) l = rng.uniform_int(0, 4);
  Metrics m = metrics_from_logits(logits.data(), 40, 5, labels);
  CHECK(m.top5 == doctest::Approx(1.0));
}

TEST_CASE("evaluate is deterministic and independent of batch slicing") {
  LabeledDataset ds = tiny_dataset();
  auto split = full_split(ds);
  auto model = MicroNet<float>::build(tiny_model_config(), 3);
  TestPreproc preproc;
  Metrics a = evaluate(model, ds, split, 16, preproc, 64);
  Metrics b = evaluate(model, ds, split, 16, preproc, 64);
  Metrics c = evaluate(model, ds, split, 16, preproc, 17);
  CHECK(a.n == ds.size());
  CHECK(a.top1 == b.top1);
  CHECK(a.top5 == b.top5);
  CHECK(a.top1 == c.top1);  // batch size must not affect the counts
  CHECK(a.top5 == c.top5);
  CHECK(a.top1 <= a.top5);

  CHECK_THROWS_AS(evaluate(model, ds, split, 4, preproc), ShapeError);
  CHECK_THROWS_AS(evaluate(model, ds, {}, 16, preproc), ConfigError);
}

TEST_CASE("resolution_sweep walks the grid in order and validates it") {
  LabeledDataset ds = tiny_dataset();
  auto split = full_split(ds);
  auto model = MicroNet<float>::build(tiny_model_config(), 3);
  TestPreproc preproc;
  const std::vector<int64_t> grid = {12, 16, 24};
  SweepCurve curve = resolution_sweep(model, ds, split, grid, preproc);
  REQUIRE(curve.size() == 3);
  for (size_t i = 0; i < grid.size(); ++i) {
    CHECK(curve[i].first == grid[i]);
    CHECK(curve[i].second.n == ds.size());
    // Each point matches a standalone evaluation at that resolution.
    Metrics solo = evaluate(model, ds, split, grid[i], preproc);
    CHECK(curve[i].second.top1 == solo.top1);
  }
  CHECK_THROWS_AS(resolution_sweep(model, ds, split, {}, preproc), ConfigError);
  CHECK_THROWS_AS(resolution_sweep(model, ds, split, {16, 16}, preproc), ConfigError);
  CHECK_THROWS_AS(resolution_sweep(model, ds, split, {24, 16}, preproc), ConfigError);
}

TEST_CASE("pick_best_resolution takes the argmax, ties toward smaller") {
  CHECK(pick_best_resolution(curve_from({{32, 0.5}})) == 32);
  CHECK(pick_best_resolution(curve_from({{24, 0.4}, {32, 0.6}, {40, 0.55}})) == 32);
  CHECK(pick_best_resolution(curve_from({{24, 0.6}, {32, 0.6}, {40, 0.5}})) == 24);
  CHECK_THROWS_AS(pick_best_resolution({}), ConfigError);
}

TEST_CASE("monotone rescaling of accuracies never changes the selection") {
  SweepCurve curve = curve_from({{24, 0.41}, {32, 0.58}, {40, 0.42}, {48, 0.3}});
  const int64_t chosen = pick_best_resolution(curve);
  for (auto& [res, m] : curve) m.top1 = 0.2 + 0.3 * m.top1;
  CHECK(pick_best_resolution(curve) == chosen);
}

TEST_CASE("select_test_resolution returns the argmax and the full curve") {
  LabeledDataset ds = tiny_dataset();
  auto split = full_split(ds);
  auto model = MicroNet<float>::build(tiny_model_config(), 3);
  TestPreproc preproc;
  auto [res, curve] = select_test_resolution(model, ds, split, {16}, preproc);
  CHECK(res == 16);
  CHECK(curve.size() == 1);
}

TEST_CASE("split protocol rejects overlap and out-of-range indices") {
  LabeledDataset ds = tiny_dataset();  // 96 samples
  CHECK_NOTHROW(SplitProtocol(ds, {0, 1}, {2, 3}, {4}, {5}));
  try {
    SplitProtocol(ds, {0, 1}, {1, 2}, {3}, {4});
    FAIL("expected an overlap error");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("overlap") != std::string::npos);
  }
  CHECK_THROWS_AS(SplitProtocol(ds, {0}, {1}, {2}, {96}), ProtocolError);
  CHECK_THROWS_AS(SplitProtocol(ds, {-1}, {1}, {2}, {3}), ProtocolError);
}

TEST_CASE("test_B allows exactly one read per model") {
  SplitProtocol p(tiny_dataset(), {0, 1}, {2, 3}, {4, 5}, {6, 7});
  CHECK(p.test_b_reads("m") == 0);
  CHECK(p.test_b_indices("m").size() == 2);
  CHECK(p.test_b_reads("m") == 1);
  try {
    p.test_b_indices("m");
    FAIL("expected a double-read error");
  } catch (const ProtocolError& e) {
    CHECK(std::string(e.what()).find("test_B read twice") != std::string::npos);
  }
  // A different model still has its read available.
  CHECK_NOTHROW(p.test_b_indices("other"));

  CHECK(p.split("train", "m").size() == 2);
  CHECK(p.split("val", "m").size() == 2);
  CHECK(p.split("test_a", "m").size() == 2);
  CHECK_THROWS_AS(p.split("holdout", "m"), ConfigError);
  CHECK_THROWS_AS(p.split("test_b", "m"), ProtocolError);  // counted route
}

TEST_CASE("generated protocol pools are disjoint, balanced, deterministic") {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.base_resolution = 16;
  spec.seed = 9;
  SplitSizes sizes;
  sizes.train = 32;
  sizes.val = 8;
  sizes.test_a = 8;
  sizes.test_b = 8;
  SplitProtocol p = make_split_protocol(spec, sizes);
  CHECK(p.dataset().size() == 56);
  CHECK(p.train_indices().size() == 32);
  CHECK(p.val_indices().size() == 8);
  CHECK(p.test_a_indices().size() == 8);

  // Per-split label balance.
  std::vector<int> counts(4, 0);
  for (int64_t i : p.val_indices()) counts[p.dataset().labels[i]]++;
  for (int c : counts) CHECK(c == 2);

  // test_A and test_B come from different generator streams.
  SplitProtocol q = make_split_protocol(spec, sizes);
  const auto& ds = p.dataset();
  const int64_t stride = ds.sample_stride();
  bool differ = false;
  for (int64_t i = 0; i < 8 && !differ; ++i) {
    const int64_t a = p.test_a_indices()[i], b = q.dataset().size() - 8 + i;
    for (int64_t j = 0; j < stride; ++j) {
      if (ds.pixels[a * stride + j] != q.dataset().pixels[b * stride + j]) {
        differ = true;
        break;
      }
    }
  }
  CHECK(differ);
  CHECK(p.dataset().pixels == q.dataset().pixels);  // same spec, same pool

  SplitSizes odd = sizes;
  odd.val = 10;  // not divisible by 4 classes
  CHECK_THROWS_AS(make_split_protocol(spec, odd), ConfigError);
}

TEST_CASE("file-backed protocol slices contiguous ranges and checks the total") {
  LabeledDataset ds = tiny_dataset();  // 96 samples
  SplitSizes sizes;
  sizes.train = 60;
  sizes.val = 12;
  sizes.test_a = 12;
  sizes.test_b = 12;
  SplitProtocol p = make_split_protocol(ds, sizes);
  CHECK(p.train_indices().front() == 0);
  CHECK(p.train_indices().back() == 59);
  CHECK(p.val_indices().front() == 60);
  CHECK(p.test_a_indices().front() == 72);
  CHECK(p.test_b_indices("m").front() == 84);

  sizes.train = 90;  // 90+12+12+12 > 96
  CHECK_THROWS_AS(make_split_protocol(ds, sizes), ConfigError);
}

TEST_CASE("run_protocol gives identical models identical rows") {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.base_resolution = 32;
  spec.seed = 11;
  SplitSizes sizes;
  sizes.train = 16;
  sizes.val = 8;
  sizes.test_a = 8;
  sizes.test_b = 8;
  SplitProtocol protocol = make_split_protocol(spec, sizes);

  auto m1 = MicroNet<float>::build(tiny_model_config(), 5);
  auto m2 = m1.clone();
  TestPreproc preproc;
  GapReport report = run_protocol<float>({{"left", &m1}, {"right", &m2}}, protocol,
                                         {12, 16, 24}, preproc);
  REQUIRE(report.rows.size() == 2);
  const GapRow& a = report.rows[0];
  const GapRow& b = report.rows[1];
  CHECK(a.test_res == b.test_res);
  CHECK(a.on_a.top1 == b.on_a.top1);
  CHECK(a.on_b.top1 == b.on_b.top1);
  CHECK(a.gap() == doctest::Approx(a.on_a.top1 - a.on_b.top1));
  CHECK(a.params == m1.num_params());

  const std::string csv = report.csv();
  CHECK(csv.find("model,params,top1_A,top1_B,gap\n") == 0);
  CHECK(csv.find("left,") != std::string::npos);
  CHECK(csv.find("right,") != std::string::npos);

  // Each model consumed its single test_B read.
  CHECK(protocol.test_b_reads("left") == 1);
  CHECK_THROWS_AS(protocol.test_b_indices("left"), ProtocolError);
}

TEST_CASE("selecting the resolution on test_B burns the read and trips the guard") {
  DatasetSpec spec;
  spec.num_classes = 4;
  spec.base_resolution = 32;
  spec.seed = 12;
  SplitSizes sizes;
  sizes.train = 16;
  sizes.val = 8;
  sizes.test_a = 8;
  sizes.test_b = 8;
  SplitProtocol protocol = make_split_protocol(spec, sizes);
  auto model = MicroNet<float>::build(tiny_model_config(), 5);
  TestPreproc preproc;
  CHECK_THROWS_AS(run_protocol<float>({{"peeker", &model}}, protocol, {16}, preproc,
                                      "test_b"),
                  ProtocolError);
}

TEST_CASE("parameter counts format with one decimal above a thousand") {
  CHECK(format_params(5300000) == "5.3M");
  CHECK(format_params(5254000) == "5.3M");
  CHECK(format_params(66000000) == "66.0M");
  CHECK(format_params(12345) == "12.3K");
  CHECK(format_params(999) == "999");
  CHECK(format_params(25557032) == "25.6M");
}

TEST_CASE("percent formatting keeps one decimal, half away from zero") {
  CHECK(format_percent(0.802) == "80.2");
  CHECK(format_percent(0.954) == "95.4");
  CHECK(format_percent(0.9545) == "95.5");
  CHECK(format_percent(1.0) == "100.0");
  CHECK(format_percent(0.0) == "0.0");
}

TEST_CASE("summary table renders the reference row exactly") {
  TableRecord r;
  r.model = "B0";
  r.params = 5300000;
  r.train_res = 224;
  r.test_res = 320;
  r.top1 = 0.802;
  r.top5 = 0.954;
  const std::string md = emit_table_markdown({r});
  CHECK(md ==
        "| model | #params | train res | test res | top-1 (%) | top-5 (%) |\n"
        "|---|---|---|---|---|---|\n"
        "| B0 | 5.3M | 224 | 320 | 80.2 | 95.4 |\n");
  const std::string csv = emit_table_csv({r});
  CHECK(csv ==
        "model,params,train_res,test_res,top1,top5\n"
        "B0,5300000,224,320,80.2,95.4\n");
}

TEST_CASE("empty tables are just headers") {
  CHECK(emit_table_markdown({}) ==
        "| model | #params | train res | test res | top-1 (%) | top-5 (%) |\n"
        "|---|---|---|---|---|---|\n");
  CHECK(emit_table_csv({}) == "model,params,train_res,test_res,top1,top5\n");
}

TEST_CASE("table CSV round-trips through the parser") {
  std::vector<TableRecord> records(2);
  records[0] = {"tiny", 4321, 16, 24, 0.713, 0.951};
  records[1] = {"wide", 987654, 32, 48, 0.805, 0.99};
  auto back = parse_table_csv(emit_table_csv(records));
  REQUIRE(back.size() == 2);
  for (size_t i = 0; i < 2; ++i) {
    CHECK(back[i].model == records[i].model);
    CHECK(back[i].params == records[i].params);
    CHECK(back[i].train_res == records[i].train_res);
    CHECK(back[i].test_res == records[i].test_res);
    // One-decimal percent quantization is the only loss.
    CHECK(back[i].top1 == doctest::Approx(records[i].top1).epsilon(0.001));
    CHECK(back[i].top5 == doctest::Approx(records[i].top5).epsilon(0.001));
  }
  CHECK_THROWS_AS(parse_table_csv("nonsense\n"), IoError);
}

TEST_CASE("frontier rows sort by params and break ties by name") {
  std::vector<FrontierRecord> records = {
      {"zeta", 500, 0.5}, {"alpha", 500, 0.6}, {"tiny", 100, 0.4}};
  CHECK(emit_frontier(records) ==
        "name,params,top1\n"
        "tiny,100,0.400000\n"
        "alpha,500,0.600000\n"
        "zeta,500,0.500000\n");
}

TEST_CASE("sweep CSV has the documented schema") {
  SweepCurve curve = curve_from({{16, 0.5}, {24, 0.625}});
  CHECK(sweep_csv("m", curve) ==
        "model,test_res,top1,top5,n\n"
        "m,16,0.500000,1.000000,100\n"
        "m,24,0.625000,1.000000,100\n");
}
