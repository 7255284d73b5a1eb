#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <regex>

#include "helpers.hpp"

using namespace pcorrupt;

namespace {

struct Trained {
  ModelPtr<double> model;
  FlatParams<double> params;
  Dataset<double> data;
};

Trained trained_norm_mlp() {
  ModelSpec s;
  s.layer_sizes = {2, 16, 16, 2};
  s.normalization = Normalization::per_layer_scale_bias;
  DatasetSource src;
  src.noise = 0.2;
  src.points = 600;
  auto data = load_dataset<double>(src);
  AcrtConfig cfg;
  cfg.epochs = 30;
  cfg.learning_rate = 0.05;
  auto r = train(s, data, cfg);
  auto m = build_model<double>(s);
  return {m.model, r.params, data};
}

ScanReport synthetic_report() {
  ScanReport r;
  r.metric_name = "accuracy";
  for (const char* g : {"bias", "fully-connected"}) {
    for (double e : {0.001, 0.01, 0.1}) {
      ScanCell c;
      c.group_label = g;
      c.epsilon = e;
      c.metric_before = 0.9375;
      c.metric_after = 0.9375 - e;
      c.delta_loss = e * 1.2345678901234;
      c.first_order = e / 3.0;
      r.cells.push_back(c);
    }
  }
  r.cells.back().degenerate = true;
  return r;
}

}  // namespace

TEST(Scan, SingleGroupModelHasOneCellPerEpsilon) {
  QuadraticProbe<double> q(3);
  auto w = q.make_params({1.0, -2.0, 0.5});
  const auto r = scan(q, w, dummy_batch<double>(), dummy_batch<double>(), GroupAxis::kind, {1e-3, 1e-2, 1e-1, 1.0}, 2.0);
  ASSERT_EQ(r.cells.size(), 4u);
  EXPECT_EQ(r.metric_name, "mean-loss");
  for (const auto& c : r.cells) EXPECT_EQ(c.group_label, "other");
  // quadratic probe: dL = eps ||w|| + eps^2 / 2
  EXPECT_NEAR(r.cells[3].delta_loss, std::sqrt(5.25) + 0.5, 1e-12);
}

TEST(Scan, LeavesParametersBitIdenticalAndRespectsMasks) {
  auto t = trained_norm_mlp();
  auto w = t.params;
  const auto before = w.values;
  for (auto axis : {GroupAxis::kind, GroupAxis::layer}) {
    const auto groups = param_groups_by(w, axis);
    const auto r = scan(*t.model, w, t.data.train, t.data.eval, axis, {1e-3, 1e-1, 1.0}, 2.0, 4);
    EXPECT_EQ(r.cells.size(), groups.size() * 3);
    for (const auto& c : r.cells) {
      const auto g = std::find_if(groups.begin(), groups.end(), [&](const auto& x) { return x.label == c.group_label; });
      ASSERT_NE(g, groups.end());
      EXPECT_LE(c.touched.size(), 4u);
      for (auto i : c.touched) EXPECT_TRUE(std::binary_search(g->indices.begin(), g->indices.end(), i));
    }
  }
  EXPECT_EQ(w.values, before);
}

TEST(Scan, FloatParametersRestoredExactly) {
  ModelSpec s;
  s.layer_sizes = {2, 8, 2};
  auto m = build_model<float>(s);
  const auto data = load_dataset<float>(DatasetSource{});
  const auto before = m.params.values;
  scan(*m.model, m.params, data.train, data.eval, GroupAxis::layer, {0.3, 0.7}, kInfNorm);
  EXPECT_EQ(m.params.values, before);
}

TEST(Scan, MetricBeforeConstantAndCorruptionDoesNotHelp) {
  auto t = trained_norm_mlp();
  const auto r = scan(*t.model, t.params, t.data.train, t.data.eval, GroupAxis::kind, {1e-3}, 2.0);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.metric_before, r.cells.front().metric_before);
    EXPECT_LE(c.metric_after, c.metric_before + 0.01) << c.group_label;
    EXPECT_GE(c.delta_loss, 0.0) << c.group_label;
  }
}

// Regression values at eps 0.5, n 8. The scale group comes out less fragile
// than fully-connected for this affine-only normalization.
TEST(Scan, NormalizationScaleVersusFullyConnectedRecorded) {
  auto t = trained_norm_mlp();
  const auto r = scan(*t.model, t.params, t.data.train, t.data.eval, GroupAxis::kind, {0.5}, 2.0, 8);
  std::map<std::string, double> dl;
  for (const auto& c : r.cells) dl[c.group_label] = c.delta_loss;
  EXPECT_LT(testutil::rel_err(dl.at("normalization-scale"), 0.0238348762), 1e-6);
  EXPECT_LT(testutil::rel_err(dl.at("fully-connected"), 0.0972529643), 1e-6);
  EXPECT_LT(testutil::rel_err(dl.at("normalization-bias"), 0.103856233), 1e-6);
  EXPECT_LT(testutil::rel_err(dl.at("bias"), 0.174417661), 1e-6);
}

TEST(Scan, FlatGroupFlaggedDegenerate) {
  ConstantLossModel<double> c(3, 1.0);
  FlatParams<double> w{{1.0, 2.0, 3.0}, c.param_layout()};
  const auto r = scan(c, w, dummy_batch<double>(), dummy_batch<double>(), GroupAxis::kind, {0.1, 0.2}, 2.0);
  ASSERT_EQ(r.cells.size(), 2u);
  for (const auto& cell : r.cells) {
    EXPECT_TRUE(cell.degenerate);
    EXPECT_TRUE(cell.touched.empty());
    EXPECT_EQ(cell.delta_loss, 0.0);
  }
}

TEST(Scan, RejectsBadEpsilons) {
  QuadraticProbe<double> q(2);
  auto w = q.make_params({1.0, 1.0});
  EXPECT_THROW(scan(q, w, dummy_batch<double>(), dummy_batch<double>(), GroupAxis::kind, {}, 2.0), ValidationError);
  EXPECT_THROW(scan(q, w, dummy_batch<double>(), dummy_batch<double>(), GroupAxis::kind, {0.0}, 2.0), ValidationError);
}

TEST(Report, EmptyCsvIsHeaderOnly) {
  EXPECT_EQ(scan_to_csv(ScanReport{}), std::string(kScanCsvHeader) + "\n");
  EXPECT_TRUE(parse_scan_csv(scan_to_csv(ScanReport{})).empty());
}

TEST(Report, CsvRoundTrip) {
  const auto r = synthetic_report();
  const auto cells = parse_scan_csv(scan_to_csv(r));
  ASSERT_EQ(cells.size(), r.cells.size());
  for (std::size_t i = 0; i < cells.size(); ++i) {
    EXPECT_EQ(cells[i].group_label, r.cells[i].group_label);
    EXPECT_NEAR(cells[i].epsilon, r.cells[i].epsilon, 1e-9);
    EXPECT_NEAR(cells[i].metric_before, r.cells[i].metric_before, 1e-9);
    EXPECT_NEAR(cells[i].metric_after, r.cells[i].metric_after, 1e-9);
    EXPECT_NEAR(cells[i].delta_loss, r.cells[i].delta_loss, 1e-9);
    EXPECT_NEAR(cells[i].first_order, r.cells[i].first_order, 1e-9);
    EXPECT_EQ(cells[i].degenerate, r.cells[i].degenerate);
  }
}

TEST(Report, CsvUsesNineSignificantDigits) {
  const auto csv = scan_to_csv(synthetic_report());
  EXPECT_NE(csv.find("0.00123456789"), std::string::npos) << csv;
  EXPECT_THROW(parse_scan_csv("group,eps\n"), FormatError);
}

TEST(Report, SvgGridStructure) {
  const auto svg = scan_to_svg(synthetic_report());
  const std::regex cell("<rect class=\"cell\"");
  EXPECT_EQ(std::distance(std::sregex_iterator(svg.begin(), svg.end(), cell), std::sregex_iterator()), 6);
  EXPECT_EQ(svg.rfind("<svg", 0), 0u);
  EXPECT_NE(svg.find("fully-connected"), std::string::npos);
}

TEST(Report, HeatRampEndpoints) {
  EXPECT_EQ(heat_color(0.0), (std::array<int, 3>{255, 255, 204}));
  EXPECT_EQ(heat_color(1.0), (std::array<int, 3>{189, 0, 38}));
  EXPECT_EQ(heat_color(-5.0), heat_color(0.0));
  EXPECT_EQ(heat_color(5.0), heat_color(1.0));
}

TEST(Report, JsonMirrorsFields) {
  const auto j = scan_to_json(synthetic_report());
  EXPECT_EQ(j["metric"], "accuracy");
  EXPECT_EQ(j["cells"].size(), 6u);
  EXPECT_EQ(j["cells"][0]["group_label"], "bias");
  EXPECT_TRUE(j["cells"][5]["degenerate"].get<bool>());
}

TEST(Report, McAndRobustnessCsv) {
  const auto m = summarize_deltas({0.5, -1.0, 0.25});
  const auto csv = mc_to_csv(m);
  EXPECT_NE(csv.find("trials"), std::string::npos);
  const auto rows = robustness_to_csv({{0.0, 1.0, 1.0}, {0.5, 0.75, 0.875}});
  EXPECT_EQ(rows, "epsilon,metric_baseline,metric_acrt\n0,1,1\n0.5,0.75,0.875\n");
}

TEST(Report, WriteFailureNamesPath) {
  try {
    write_text("/nonexistent-dir/out.csv", "x");
    FAIL();
  } catch (const IoError& e) {
    EXPECT_NE(std::string(e.what()).find("/nonexistent-dir/out.csv"), std::string::npos);
  }
}
