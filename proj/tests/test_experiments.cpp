#include "oracles.hpp"

#include <gtest/gtest.h>

#include <cstdlib>

using namespace malspi;

namespace {

ExperimentConfig tiny() {
  ExperimentConfig c;
  c.n_agents = 3;
  c.n_x = c.n_u = 1;
  c.T = 100;
  c.T_eval = 100;
  c.iterations = 2;
  c.alpha = 1e-6;
  c.architectures = {Architecture::direct, Architecture::indirect};
  c.seeds = {1, 2};
  return c;
}

std::filesystem::path scratch(const std::string& name) {
  auto p = std::filesystem::temp_directory_path() / ("malspi_test_" + name);
  std::filesystem::remove_all(p);
  return p;
}

}  // namespace

TEST(Config, RoundTrip) {
  auto c = tiny();
  c.overrides.push_back({2, Matrix::Constant(1, 1, 0.5), Matrix::Constant(1, 1, 2.0)});
  const auto back = parse_config(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.seeds, c.seeds);
  EXPECT_EQ(back.architectures, c.architectures);
}

TEST(Config, RejectsUnknownKeys) {
  auto j = to_json(tiny());
  j["malspi"]["learning_rate"] = 0.1;
  try {
    parse_config(j);
    FAIL();
  } catch (const ValidationError& e) {
    EXPECT_NE(std::string(e.what()).find("learning_rate"), std::string::npos) << e.what();
  }
}

TEST(Config, ExplicitGraphs) {
  Json j = {{"n_agents", 2},
            {"graphs", {{"state", {{1, 1}, {2, 2}}}, {"observation", {{1, 1}, {2, 2}}}, {"cost", {{1, 1}, {2, 2}, {1, 2}}}}},
            {"dynamics", {{"n_x", 1}, {"n_u", 1}}}};
  const auto c = parse_config(j);
  const auto g = build_graphs(c);
  EXPECT_EQ(g.cost_set(1), (AgentSet{0, 1}));
  j["graphs"]["state"] = {{3, 1}};
  EXPECT_THROW(build_graphs(parse_config(j)), ValidationError);
}

TEST(CostBlocks, SingleAndPairCostSets) {
  const auto g = generate_example2(2);
  const auto blocks = build_cost_blocks(g, 1, 1);
  EXPECT_EQ(blocks[0].S, Matrix::Constant(1, 1, 200.0));
  Matrix pair(2, 2);
  pair << 100, -5, -5, 100;
  EXPECT_EQ(blocks[1].S, pair);
  EXPECT_EQ(blocks[1].R, Matrix::Identity(2, 2));
  EXPECT_THROW(build_cost_blocks(g, 1, 1, 1.0, -5.0), ValidationError);
  EXPECT_THROW(build_cost_blocks(g, 1, 1, 200.0, -10.0, 0.0), ValidationError);
}

TEST(Experiment, NoIterationsRecordsBaselineOnly) {
  auto c = tiny();
  c.iterations = 0;
  const auto t = run_experiment(c, false);
  EXPECT_EQ(t.costs.size(), 4u);
  EXPECT_EQ(t.last_iteration(), 0);
  EXPECT_EQ(t.mean_cost("direct", 0), t.mean_cost("indirect", 0));
}

TEST(Experiment, ArtifactsReingestExactly) {
  const auto dir = scratch("artifacts");
  auto c = tiny();
  c.output_dir = dir.string();
  const auto t = run_experiment(c);
  std::ifstream f(dir / "results.csv");
  EXPECT_EQ(read_costs_csv(f), t.costs);
  EXPECT_TRUE(std::filesystem::exists(dir / "indirect" / "seed_2.csv"));
  EXPECT_EQ(parse_config(Json::parse(std::ifstream(dir / "config.json"))).T, c.T);
  std::ifstream run(dir / "direct" / "seed_1.csv");
  std::string header;
  std::getline(run, header);
  EXPECT_EQ(header, kRunHeader);
  std::filesystem::remove_all(dir);
}

TEST(Experiment, OutputRootEnvironment) {
  ::setenv("MALSPI_OUTPUT_ROOT", "/tmp/root_x", 1);
  EXPECT_EQ(resolve_output_dir("results"), std::filesystem::path("/tmp/root_x/results"));
  EXPECT_EQ(resolve_output_dir("/abs"), std::filesystem::path("/abs"));
  ::unsetenv("MALSPI_OUTPUT_ROOT");
  EXPECT_EQ(resolve_output_dir("results"), std::filesystem::path("results"));
}

TEST(Csv, DoublesAndMissingValues) {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 123456789.123456789}) EXPECT_EQ(parse_double(format_double(v)), v);
  EXPECT_EQ(format_double(std::numeric_limits<double>::quiet_NaN()), "NA");
  EXPECT_TRUE(std::isnan(parse_double("NA")));
  EXPECT_TRUE(std::isinf(parse_double("inf")));
}

TEST(Timing, SkipsLargeFullArchitectures) {
  auto c = tiny();
  c.architectures = {Architecture::centralized, Architecture::indirect};
  c.T = 50;
  c.bench_n_agents = {2, 3};
  c.bench_centralized_max_agents = 2;
  c.bench_iterations = 2;
  const auto rows = timing_benchmark(c);
  ASSERT_EQ(rows.size(), 4u);
  EXPECT_FALSE(rows[0].skipped());
  EXPECT_TRUE(rows[2].skipped());
  EXPECT_DOUBLE_EQ(rows[1].ratio_to_indirect, 1.0);
  std::stringstream s;
  write_timing_csv(s, rows);
  const auto back = read_timing_csv(s);
  ASSERT_EQ(back.size(), rows.size());
  EXPECT_TRUE(back[2].skipped());
  EXPECT_EQ(back[0].mean_ms, rows[0].mean_ms);
}

TEST(Report, GraphReportIsOneBased) {
  const auto r = graph_report(generate_example2(3));
  EXPECT_EQ(r["n_agents"], 3);
  EXPECT_EQ(r["agents"][0]["direct"], Json::array({1, 2, 3}));
  EXPECT_EQ(r["agents"][0]["condition_a"], false);
  EXPECT_EQ(r["agents"][1]["value"], Json::array({1, 2}));
}

TEST(Report, BoundsReportCoversAgents) {
  auto c = tiny();
  const auto r = bounds_report(c, 0.1, 1.0, std::nullopt);
  EXPECT_EQ(r["agents"].size(), 3u);
  EXPECT_GT(r["agents"][0]["direct"]["T_min"].get<double>(), 0.0);
}

TEST(Example2, TwoAgents) {
  auto c = tiny();
  c.example = "example2";
  c.n_agents = 2;
  const auto t = run_experiment(c, false);
  EXPECT_EQ(t.last_iteration(), 2);
  for (const auto& r : t.costs) EXPECT_TRUE(std::isfinite(r.eval_cost));
}
