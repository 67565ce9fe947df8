// malspi: run sweeps, inspect dependency sets, evaluate bounds, verify, bench.

#include "acceptance_suites.hpp"

#if __has_include(<CLI/CLI.hpp>)
#include <CLI/CLI.hpp>
#else
#include <CLI11.hpp>
#endif

#include <iostream>

namespace {

using namespace malspi;

struct Overrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> arch;
  std::optional<int> n_agents;
  std::optional<std::string> output_dir;
};

void add_overrides(CLI::App* cmd, Overrides& o) {
  cmd->add_option("--seed", o.seed, "Run a single seed instead of the config's list");
  cmd->add_option("--arch", o.arch, "Run a single architecture")
      ->check(CLI::IsMember({"centralized", "undecomposed_direct", "direct", "indirect"}));
  cmd->add_option("--n-agents", o.n_agents, "Agent count (example configs only)")->check(CLI::PositiveNumber);
  cmd->add_option("--output-dir", o.output_dir, "Output directory (relative paths go under $MALSPI_OUTPUT_ROOT)");
}

ExperimentConfig apply(ExperimentConfig c, const Overrides& o) {
  if (o.seed) c.seeds = {*o.seed};
  if (o.arch) c.architectures = {parse_architecture(*o.arch)};
  if (o.n_agents) {
    if (!c.example) throw ValidationError("--n-agents needs a config that names an example");
    c.n_agents = *o.n_agents;
    c.bench_n_agents = {*o.n_agents};
  }
  if (o.output_dir) c.output_dir = *o.output_dir;
  validate(c);
  return c;
}

int cmd_run(const std::string& path, const Overrides& o) {
  const auto cfg = apply(load_config(path), o);
  const auto table = run_experiment(cfg);
  Json summary;
  summary["output_dir"] = resolve_output_dir(cfg.output_dir).string();
  const int last = table.last_iteration();
  for (auto a : cfg.architectures) {
    const double first = table.mean_cost(to_string(a), 0), final = table.mean_cost(to_string(a), last);
    summary["mean_cost"][to_string(a)] = {{"initial", std::isfinite(first) ? Json(first) : Json("inf")},
                                          {"final", std::isfinite(final) ? Json(final) : Json("inf")}};
  }
  summary["iterations"] = last;
  std::cout << summary.dump(2) << "\n";
  return 0;
}

int cmd_graphs(const std::string& path, const std::string& example, const Overrides& o) {
  CouplingGraphs g;
  if (!path.empty()) {
    g = build_graphs(apply(load_config(path), o));
  } else {
    if (!o.n_agents) throw ValidationError("graphs needs a config path or --example with --n-agents");
    g = generate_example(example, *o.n_agents);
  }
  std::cout << graph_report(g).dump(2) << "\n";
  return 0;
}

int cmd_bounds(const std::string& path, const Overrides& o, double epsilon, double constant, std::optional<double> T) {
  const auto cfg = apply(load_config(path), o);
  std::cout << bounds_report(cfg, epsilon, constant, T).dump(2) << "\n";
  return 0;
}

int cmd_verify(const std::string& config_dir, const std::vector<int>& only) {
  bool ok = true;
  for (const auto& suite : acceptance::all_suites(config_dir)) {
    if (!only.empty() && std::find(only.begin(), only.end(), suite.id) == only.end()) continue;
    const auto r = acceptance::run_suite(suite);
    std::cout << acceptance::format_line(r) << std::endl;
    ok = ok && r.passed;
  }
  return ok ? 0 : 1;
}

int cmd_bench(const std::string& path, const Overrides& o) {
  const auto cfg = apply(load_config(path), o);
  const auto rows = timing_benchmark(cfg);
  const auto out = resolve_output_dir(cfg.output_dir);
  std::filesystem::create_directories(out);
  std::ofstream f(out / "timing.csv");
  write_timing_csv(f, rows);
  write_timing_csv(std::cout, rows);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Multi-agent least-squares policy iteration for networked LQR"};
  app.require_subcommand(1);
  Overrides o;

  std::string config;
  auto* run = app.add_subcommand("run", "Run every architecture and seed of a config");
  run->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  add_overrides(run, o);

  std::string example = "example1";
  auto* graphs = app.add_subcommand("graphs", "Print dependency sets and the graphical-condition report");
  graphs->add_option("config", config, "Experiment config (JSON)")->check(CLI::ExistingFile);
  graphs->add_option("--example", example, "Example network when no config is given")
      ->check(CLI::IsMember({"example1", "example2"}));
  add_overrides(graphs, o);

  double epsilon = 0.0, constant = 1.0;
  std::optional<double> at_T;
  auto* bounds = app.add_subcommand("bounds", "Evaluate the sample-complexity bounds at K_0");
  bounds->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  bounds->add_option("--epsilon", epsilon, "Target accuracy for the epsilon form (0 disables)");
  bounds->add_option("--constant", constant, "Unidentified absolute constant")->check(CLI::PositiveNumber);
  bounds->add_option("--T", at_T, "Trajectory length for the error bound (default: config T)");
  add_overrides(bounds, o);

  std::string config_dir = "configs";
  std::vector<int> only;
  auto* verify = app.add_subcommand("verify", "Run the oracle and acceptance suites");
  verify->add_option("--config-dir", config_dir, "Directory holding example1.json, example2.json, bench_example1.json");
  verify->add_option("--criterion", only, "Run only these criteria (1-8)")->check(CLI::Range(1, 8));

  auto* bench = app.add_subcommand("bench", "Per-iteration learning time across agent counts");
  bench->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
  add_overrides(bench, o);

  CLI11_PARSE(app, argc, argv);
  try {
    if (*run) return cmd_run(config, o);
    if (*graphs) return cmd_graphs(config, example, o);
    if (*bounds) return cmd_bounds(config, o, epsilon, constant, at_T);
    if (*verify) return cmd_verify(config_dir, only);
    if (*bench) return cmd_bench(config, o);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 1;
}
