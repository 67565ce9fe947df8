#pragma once

// Example networks, JSON experiment configs, architecture sweeps and timing.

#include "malspi/bounds.hpp"
#include "malspi/policy_iteration.hpp"

#include <nlohmann/json.hpp>

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <set>
#include <sstream>

namespace malspi {

using Json = nlohmann::json;

// ---------------------------------------------------------------- examples

/// Example 1: odd agents drive their even neighbours, agent 1 also drives
/// agent N (and N drives 1 when N is odd). Costs are purely local.
inline CouplingGraphs generate_example1(int n) {
  if (n < 2) throw ValidationError("example 1 needs at least 2 agents");
  EdgeList so;
  for (int j = 1; j <= n; j += 2) {
    if (j - 1 >= 1) so.emplace_back(j, j - 1);
    if (j + 1 <= n) so.emplace_back(j, j + 1);
  }
  so.emplace_back(1, n);
  if (n % 2 == 1) so.emplace_back(n, 1);
  EdgeList self;
  for (int i = 1; i <= n; ++i) self.emplace_back(i, i);
  so.insert(so.end(), self.begin(), self.end());
  return build_coupling_graphs(n, so, so, self);
}

/// Example 2: leader-follower. Agent 1 is observed by and enters the cost of
/// every agent; the dynamics are decoupled.
inline CouplingGraphs generate_example2(int n) {
  if (n < 2) throw ValidationError("example 2 needs at least 2 agents");
  EdgeList self, lead;
  for (int i = 1; i <= n; ++i) self.emplace_back(i, i);
  lead = self;
  for (int j = 2; j <= n; ++j) lead.emplace_back(1, j);
  return build_coupling_graphs(n, self, lead, lead);
}

inline CouplingGraphs generate_example(const std::string& id, int n) {
  if (id == "example1") return generate_example1(n);
  if (id == "example2") return generate_example2(n);
  throw ValidationError("unknown example '" + id + "' (expected example1 or example2)");
}

/// S_i = s_i ⊗ I_{n_x}, R_i = r_i ⊗ I_{n_u} with s_i = (diag on the diagonal,
/// offdiag elsewhere) / |I^i_C| and r_i = r_diag · I.
inline std::vector<CostBlock> build_cost_blocks(const CouplingGraphs& g, int n_x, int n_u, double diag = 200.0,
                                                double offdiag = -10.0, double r_diag = 1.0) {
  std::vector<CostBlock> out;
  for (Agent i = 0; i < g.n_agents(); ++i) {
    const auto c = static_cast<Eigen::Index>(g.cost_set(i).size());
    Matrix s = Matrix::Constant(c, c, offdiag / double(c));
    s.diagonal().setConstant(diag / double(c));
    const Matrix r = r_diag * Matrix::Identity(c, c);
    CostBlock b{Eigen::kroneckerProduct(s, Matrix::Identity(n_x, n_x)).eval(),
                Eigen::kroneckerProduct(r, Matrix::Identity(n_u, n_u)).eval()};
    Eigen::SelfAdjointEigenSolver<Matrix> es_s(b.S), es_r(b.R);
    if (es_s.eigenvalues().minCoeff() < -1e-12)
      throw ValidationError("state cost of agent " + std::to_string(i + 1) + " is not positive semidefinite");
    if (es_r.eigenvalues().minCoeff() <= 0.0)
      throw ValidationError("control cost of agent " + std::to_string(i + 1) + " is not positive definite");
    out.push_back(std::move(b));
  }
  return out;
}

// ------------------------------------------------------------------ config

struct DynamicsOverride {
  int agent = 1;  // 1-based
  Matrix A, B;    // self blocks
};

struct ExperimentConfig {
  int n_agents = 8;
  std::optional<std::string> example = "example1";
  std::optional<std::array<EdgeList, 3>> graphs;  // state, observation, cost; 1-based

  int n_x = 3, n_u = 3;
  double self_diagonal = 0.95, self_offdiagonal = 0.01, coupling = 0.02, input_gain = 1.0;
  std::vector<DynamicsOverride> overrides;
  std::optional<Matrix> A, B;  // explicit global matrices replace the generator

  double sigma_w = 1.0, sigma_eta = 1.0;
  double x0_mean = 0.0, sigma0 = 0.0;  // x(0) ~ N(x0_mean·1, sigma0·I)

  double cost_diagonal = 200.0, cost_offdiagonal = -10.0, r_diagonal = 1.0;

  Eigen::Index T = 500, T_eval = 500;
  int iterations = 15;
  double alpha = 1e-3, zeta = 1e-6;
  std::optional<Matrix> K0;

  std::vector<Architecture> architectures{std::begin(kAllArchitectures), std::end(kAllArchitectures)};
  std::vector<std::uint64_t> seeds{1};
  std::string output_dir = "results";
  unsigned threads = 1;
  bool compute_q_error = false;
  bool force_full_sets = false;

  std::vector<int> bench_n_agents{8, 20, 40};
  int bench_centralized_max_agents = 20;
  int bench_iterations = 3;
};

namespace detail {

inline Json matrix_to_json(const Matrix& m) {
  Json rows = Json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    Json row = Json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

inline Matrix matrix_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array of rows");
  const auto rows = static_cast<Eigen::Index>(j.size());
  const Eigen::Index cols = rows ? static_cast<Eigen::Index>(j[0].size()) : 0;
  Matrix m(rows, cols);
  for (Eigen::Index r = 0; r < rows; ++r) {
    const Json& row = j[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != cols)
      throw ValidationError(what + " has ragged rows");
    for (Eigen::Index c = 0; c < cols; ++c) {
      if (!row[static_cast<std::size_t>(c)].is_number()) throw ValidationError(what + " must contain numbers");
      m(r, c) = row[static_cast<std::size_t>(c)].get<double>();
    }
  }
  return m;
}

inline Json edges_to_json(const EdgeList& e) {
  Json out = Json::array();
  for (auto [a, b] : e) out.push_back({a, b});
  return out;
}

inline EdgeList edges_from_json(const Json& j, const std::string& what) {
  if (!j.is_array()) throw ValidationError(what + " must be an array of [from, to] pairs");
  EdgeList out;
  for (const Json& e : j) {
    if (!e.is_array() || e.size() != 2 || !e[0].is_number_integer() || !e[1].is_number_integer())
      throw ValidationError(what + " entries must be [from, to] integer pairs");
    out.emplace_back(e[0].get<int>(), e[1].get<int>());
  }
  return out;
}

inline void reject_unknown(const Json& obj, std::initializer_list<const char*> allowed, const std::string& where) {
  if (!obj.is_object()) throw ValidationError(where + " must be an object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    bool ok = false;
    for (const char* a : allowed) ok = ok || it.key() == a;
    if (!ok) throw ValidationError("unknown key '" + it.key() + "' in " + where);
  }
}

template <typename T>
void read(const Json& obj, const char* key, T& out, const std::string& where) {
  if (!obj.contains(key)) return;
  try {
    out = obj.at(key).get<T>();
  } catch (const Json::exception&) {
    throw ValidationError("'" + std::string(key) + "' in " + where + " has the wrong type");
  }
}

}  // namespace detail

inline Json to_json(const ExperimentConfig& c) {
  using detail::matrix_to_json;
  Json j;
  j["n_agents"] = c.n_agents;
  if (c.example) j["example"] = *c.example;
  if (c.graphs)
    j["graphs"] = {{"state", detail::edges_to_json((*c.graphs)[0])},
                   {"observation", detail::edges_to_json((*c.graphs)[1])},
                   {"cost", detail::edges_to_json((*c.graphs)[2])}};
  Json dyn = {{"n_x", c.n_x},
              {"n_u", c.n_u},
              {"self_diagonal", c.self_diagonal},
              {"self_offdiagonal", c.self_offdiagonal},
              {"coupling", c.coupling},
              {"input_gain", c.input_gain}};
  Json ov = Json::array();
  for (const auto& o : c.overrides) ov.push_back({{"agent", o.agent}, {"A", matrix_to_json(o.A)}, {"B", matrix_to_json(o.B)}});
  dyn["overrides"] = ov;
  if (c.A) dyn["A"] = matrix_to_json(*c.A);
  if (c.B) dyn["B"] = matrix_to_json(*c.B);
  j["dynamics"] = dyn;
  j["noise"] = {{"sigma_w", c.sigma_w}, {"sigma_eta", c.sigma_eta}};
  j["initial_state"] = {{"mean", c.x0_mean}, {"variance", c.sigma0}};
  j["cost"] = {{"diagonal", c.cost_diagonal}, {"offdiagonal", c.cost_offdiagonal}, {"r_diagonal", c.r_diagonal}};
  j["malspi"] = {{"T", c.T}, {"T_eval", c.T_eval}, {"iterations", c.iterations}, {"alpha", c.alpha}, {"zeta", c.zeta}};
  if (c.K0) j["malspi"]["K0"] = matrix_to_json(*c.K0);
  Json arch = Json::array();
  for (auto a : c.architectures) arch.push_back(to_string(a));
  j["architectures"] = arch;
  j["seeds"] = c.seeds;
  j["output_dir"] = c.output_dir;
  j["threads"] = c.threads;
  j["compute_q_error"] = c.compute_q_error;
  j["force_full_sets"] = c.force_full_sets;
  j["bench"] = {{"n_agents", c.bench_n_agents},
                {"centralized_max_agents", c.bench_centralized_max_agents},
                {"iterations", c.bench_iterations}};
  return j;
}

inline void validate(const ExperimentConfig& c) {
  if (c.n_agents < 1) throw ValidationError("n_agents must be positive");
  if (c.example.has_value() == c.graphs.has_value())
    throw ValidationError("exactly one of 'example' and 'graphs' must be given");
  if (c.n_x < 1 || c.n_u < 1) throw ValidationError("n_x and n_u must be positive");
  if (c.sigma_w < 0.0 || c.sigma_eta < 0.0 || c.sigma0 < 0.0)
    throw ValidationError("noise levels and initial variance must be non-negative");
  if (c.T < 1 || c.T_eval < 1) throw ValidationError("T and T_eval must be positive");
  if (c.iterations < 0) throw ValidationError("iterations must be non-negative");
  if (c.zeta < 0.0) throw ValidationError("zeta must be non-negative");
  if (c.architectures.empty()) throw ValidationError("at least one architecture is required");
  if (c.seeds.empty()) throw ValidationError("at least one seed is required");
  for (const auto& o : c.overrides) {
    if (o.agent < 1 || o.agent > c.n_agents)
      throw ValidationError("dynamics override for agent " + std::to_string(o.agent) + " is out of range");
    if (o.A.rows() != c.n_x || o.A.cols() != c.n_x || o.B.rows() != c.n_x || o.B.cols() != c.n_u)
      throw ValidationError("dynamics override for agent " + std::to_string(o.agent) + " has the wrong shape");
  }
  if (c.bench_n_agents.empty()) throw ValidationError("bench.n_agents must not be empty");
  if (c.bench_iterations < 2) throw ValidationError("bench.iterations must be at least 2 (the first is warm-up)");
}

inline ExperimentConfig parse_config(const Json& j) {
  using detail::read;
  detail::reject_unknown(j,
                         {"n_agents", "example", "graphs", "dynamics", "noise", "initial_state", "cost", "malspi",
                          "architectures", "seeds", "output_dir", "threads", "compute_q_error", "force_full_sets",
                          "bench"},
                         "config");
  ExperimentConfig c;
  read(j, "n_agents", c.n_agents, "config");
  if (j.contains("graphs")) {
    c.example.reset();
    const Json& g = j["graphs"];
    detail::reject_unknown(g, {"state", "observation", "cost"}, "graphs");
    for (const char* k : {"state", "observation", "cost"})
      if (!g.contains(k)) throw ValidationError(std::string("graphs is missing '") + k + "'");
    c.graphs = std::array<EdgeList, 3>{detail::edges_from_json(g["state"], "graphs.state"),
                                       detail::edges_from_json(g["observation"], "graphs.observation"),
                                       detail::edges_from_json(g["cost"], "graphs.cost")};
  }
  if (j.contains("example")) {
    std::string id;
    read(j, "example", id, "config");
    c.example = id;
  }
  if (j.contains("dynamics")) {
    const Json& d = j["dynamics"];
    detail::reject_unknown(
        d, {"n_x", "n_u", "self_diagonal", "self_offdiagonal", "coupling", "input_gain", "overrides", "A", "B"},
        "dynamics");
    read(d, "n_x", c.n_x, "dynamics");
    read(d, "n_u", c.n_u, "dynamics");
    read(d, "self_diagonal", c.self_diagonal, "dynamics");
    read(d, "self_offdiagonal", c.self_offdiagonal, "dynamics");
    read(d, "coupling", c.coupling, "dynamics");
    read(d, "input_gain", c.input_gain, "dynamics");
    if (d.contains("overrides")) {
      if (!d["overrides"].is_array()) throw ValidationError("dynamics.overrides must be an array");
      for (const Json& o : d["overrides"]) {
        detail::reject_unknown(o, {"agent", "A", "B"}, "dynamics.overrides");
        if (!o.contains("agent") || !o.contains("A") || !o.contains("B"))
          throw ValidationError("each dynamics override needs agent, A and B");
        DynamicsOverride ov;
        read(o, "agent", ov.agent, "dynamics.overrides");
        ov.A = detail::matrix_from_json(o["A"], "override A");
        ov.B = detail::matrix_from_json(o["B"], "override B");
        c.overrides.push_back(std::move(ov));
      }
    }
    if (d.contains("A")) c.A = detail::matrix_from_json(d["A"], "dynamics.A");
    if (d.contains("B")) c.B = detail::matrix_from_json(d["B"], "dynamics.B");
    if (c.A.has_value() != c.B.has_value()) throw ValidationError("dynamics.A and dynamics.B must be given together");
  }
  if (j.contains("noise")) {
    detail::reject_unknown(j["noise"], {"sigma_w", "sigma_eta"}, "noise");
    read(j["noise"], "sigma_w", c.sigma_w, "noise");
    read(j["noise"], "sigma_eta", c.sigma_eta, "noise");
  }
  if (j.contains("initial_state")) {
    detail::reject_unknown(j["initial_state"], {"mean", "variance"}, "initial_state");
    read(j["initial_state"], "mean", c.x0_mean, "initial_state");
    read(j["initial_state"], "variance", c.sigma0, "initial_state");
  }
  if (j.contains("cost")) {
    detail::reject_unknown(j["cost"], {"diagonal", "offdiagonal", "r_diagonal"}, "cost");
    read(j["cost"], "diagonal", c.cost_diagonal, "cost");
    read(j["cost"], "offdiagonal", c.cost_offdiagonal, "cost");
    read(j["cost"], "r_diagonal", c.r_diagonal, "cost");
  }
  if (j.contains("malspi")) {
    const Json& m = j["malspi"];
    detail::reject_unknown(m, {"T", "T_eval", "iterations", "alpha", "zeta", "K0"}, "malspi");
    read(m, "T", c.T, "malspi");
    read(m, "T_eval", c.T_eval, "malspi");
    read(m, "iterations", c.iterations, "malspi");
    read(m, "alpha", c.alpha, "malspi");
    read(m, "zeta", c.zeta, "malspi");
    if (m.contains("K0")) c.K0 = detail::matrix_from_json(m["K0"], "malspi.K0");
  }
  if (j.contains("architectures")) {
    std::vector<std::string> names;
    read(j, "architectures", names, "config");
    c.architectures.clear();
    for (const auto& s : names) c.architectures.push_back(parse_architecture(s));
  }
  read(j, "seeds", c.seeds, "config");
  read(j, "output_dir", c.output_dir, "config");
  read(j, "threads", c.threads, "config");
  read(j, "compute_q_error", c.compute_q_error, "config");
  read(j, "force_full_sets", c.force_full_sets, "config");
  if (j.contains("bench")) {
    detail::reject_unknown(j["bench"], {"n_agents", "centralized_max_agents", "iterations"}, "bench");
    read(j["bench"], "n_agents", c.bench_n_agents, "bench");
    read(j["bench"], "centralized_max_agents", c.bench_centralized_max_agents, "bench");
    read(j["bench"], "iterations", c.bench_iterations, "bench");
  }
  validate(c);
  return c;
}

inline ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config " + path.string());
  Json j;
  try {
    in >> j;
  } catch (const Json::parse_error& e) {
    throw ValidationError("config " + path.string() + " is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

// ------------------------------------------------------------------ system

inline CouplingGraphs build_graphs(const ExperimentConfig& c) {
  if (c.example) return generate_example(*c.example, c.n_agents);
  return build_coupling_graphs(c.n_agents, (*c.graphs)[0], (*c.graphs)[1], (*c.graphs)[2]);
}

/// Per-agent block: self_diagonal on the diagonal and self_offdiagonal on the
/// first super- and sub-diagonal. Neighbours couple through coupling·I; B is
/// input_gain·I on the self block only.
inline MultiAgentSystem build_system(const ExperimentConfig& c) {
  validate(c);
  CouplingGraphs g = build_graphs(c);
  Matrix a, b;
  if (c.A) {
    a = *c.A;
    b = *c.B;
  } else {
    Matrix self = Matrix::Zero(c.n_x, c.n_x);
    self.diagonal().setConstant(c.self_diagonal);
    for (int k = 0; k + 1 < c.n_x; ++k) self(k, k + 1) = self(k + 1, k) = c.self_offdiagonal;
    const Matrix self_b = c.input_gain * Matrix::Identity(c.n_x, c.n_u);
    std::tie(a, b) = assemble_dynamics(g, c.n_x, c.n_u, [&](Agent i, Agent j) -> std::pair<Matrix, Matrix> {
      if (i != j) return {c.coupling * Matrix::Identity(c.n_x, c.n_x), Matrix::Zero(c.n_x, c.n_u)};
      for (const auto& o : c.overrides)
        if (o.agent - 1 == i) return {o.A, o.B};
      return {self, self_b};
    });
  }
  auto costs = build_cost_blocks(g, c.n_x, c.n_u, c.cost_diagonal, c.cost_offdiagonal, c.r_diagonal);
  return MultiAgentSystem(std::move(g), c.n_x, c.n_u, std::move(a), std::move(b), std::move(costs), c.sigma_w);
}

inline MalspiConfig malspi_config(const ExperimentConfig& c, const MultiAgentSystem& sys, std::uint64_t seed) {
  MalspiConfig m;
  m.k0 = c.K0 ? StructuredPolicy(sys.graphs(), c.n_x, c.n_u, *c.K0)
              : StructuredPolicy::zero(sys.graphs(), c.n_x, c.n_u);
  m.iterations = c.iterations;
  m.T = c.T;
  m.T_eval = c.T_eval;
  m.sigma_eta = c.sigma_eta;
  m.zeta = c.zeta;
  m.alpha = c.alpha;
  m.init.mean = Vector::Constant(sys.state_dim(), c.x0_mean);
  if (c.sigma0 > 0.0) m.init.covariance = c.sigma0 * Matrix::Identity(sys.state_dim(), sys.state_dim());
  m.seed = seed;
  m.threads = c.threads;
  m.compute_q_error = c.compute_q_error;
  m.force_full_sets = c.force_full_sets;
  return m;
}

/// Relative output directories are placed under $MALSPI_OUTPUT_ROOT when set.
inline std::filesystem::path resolve_output_dir(const std::string& dir) {
  std::filesystem::path p(dir);
  if (p.is_relative())
    if (const char* root = std::getenv("MALSPI_OUTPUT_ROOT"); root && *root) return std::filesystem::path(root) / p;
  return p;
}

// ------------------------------------------------------------------ tables

inline std::string format_double(double v) {
  if (std::isnan(v)) return "NA";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline double parse_double(const std::string& s) {
  if (s == "NA") return std::numeric_limits<double>::quiet_NaN();
  std::size_t used = 0;
  double v = 0;
  try {
    v = std::stod(s, &used);
  } catch (const std::exception&) {
    throw ValidationError("cannot parse number '" + s + "'");
  }
  if (used != s.size()) throw ValidationError("cannot parse number '" + s + "'");
  return v;
}

inline std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  if (!line.empty() && line.back() == ',') out.emplace_back();
  return out;
}

struct CostRow {
  std::string architecture;
  std::uint64_t seed = 0;
  int iteration = 0;
  double eval_cost = 0.0;
  bool diverged = false;
  friend bool operator==(const CostRow&, const CostRow&) = default;
};

struct TimingRow {
  std::string architecture;
  int n_agents = 0;
  double mean_ms = std::numeric_limits<double>::quiet_NaN();  // NaN = NA (skipped)
  double median_ms = std::numeric_limits<double>::quiet_NaN();
  double ratio_to_indirect = std::numeric_limits<double>::quiet_NaN();
  bool skipped() const { return std::isnan(mean_ms); }
};

struct ResultTable {
  std::vector<CostRow> costs;
  std::vector<TimingRow> timing;

  /// Mean over seeds; NaN when no seed has a finite cost.
  double mean_cost(const std::string& arch, int iteration) const {
    double sum = 0.0;
    int count = 0;
    for (const auto& r : costs)
      if (r.architecture == arch && r.iteration == iteration) {
        sum += r.eval_cost;
        ++count;
      }
    return count ? sum / count : std::numeric_limits<double>::quiet_NaN();
  }

  int last_iteration() const {
    int l = 0;
    for (const auto& r : costs) l = std::max(l, r.iteration);
    return l;
  }
};

inline constexpr const char* kCostHeader = "architecture,seed,iteration,eval_cost,diverged";
inline constexpr const char* kTimingHeader = "architecture,n_agents,mean_ms,median_ms,ratio_to_indirect";
inline constexpr const char* kRunHeader = "iteration,agent,eval_cost,q_err_if_oracle_known,wall_ms_eval,wall_ms_update,flags";

inline void write_costs_csv(std::ostream& os, const std::vector<CostRow>& rows) {
  os << kCostHeader << "\n";
  for (const auto& r : rows)
    os << r.architecture << "," << r.seed << "," << r.iteration << "," << format_double(r.eval_cost) << ","
       << (r.diverged ? 1 : 0) << "\n";
}

inline std::vector<CostRow> read_costs_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kCostHeader) throw ValidationError("unexpected cost table header");
  std::vector<CostRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ValidationError("malformed cost row: " + line);
    rows.push_back({f[0], std::stoull(f[1]), std::stoi(f[2]), parse_double(f[3]), f[4] == "1"});
  }
  return rows;
}

inline void write_timing_csv(std::ostream& os, const std::vector<TimingRow>& rows) {
  os << kTimingHeader << "\n";
  for (const auto& r : rows)
    os << r.architecture << "," << r.n_agents << "," << format_double(r.mean_ms) << ","
       << format_double(r.median_ms) << "," << format_double(r.ratio_to_indirect) << "\n";
}

inline std::vector<TimingRow> read_timing_csv(std::istream& is) {
  std::string line;
  if (!std::getline(is, line) || line != kTimingHeader) throw ValidationError("unexpected timing table header");
  std::vector<TimingRow> rows;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw ValidationError("malformed timing row: " + line);
    rows.push_back({f[0], std::stoi(f[1]), parse_double(f[2]), parse_double(f[3]), parse_double(f[4])});
  }
  return rows;
}

/// Per-run CSV. Phase times are per iteration and repeated on each agent row.
inline void write_run_csv(std::ostream& os, const std::vector<IterationRecord>& records) {
  os << kRunHeader << "\n";
  for (const auto& rec : records)
    for (std::size_t i = 0; i < rec.agents.size(); ++i) {
      const auto& a = rec.agents[i];
      os << rec.iteration << "," << i + 1 << "," << format_double(rec.eval.value) << ","
         << (a.q_error ? format_double(*a.q_error) : "NA") << "," << format_double(rec.wall_ms_eval) << ","
         << format_double(rec.wall_ms_update) << "," << a.flags << "\n";
    }
}

// ------------------------------------------------------------------- sweeps

struct RunOutcome {
  Architecture architecture;
  std::uint64_t seed;
  std::vector<IterationRecord> records;
};

/// Runs every (architecture, seed) pair. With `write_artifacts` the config,
/// per-run CSVs and the cost table are written under the output directory.
inline ResultTable run_experiment(const ExperimentConfig& c, bool write_artifacts = true,
                                  std::vector<RunOutcome>* outcomes = nullptr) {
  const MultiAgentSystem sys = build_system(c);
  std::filesystem::path out;
  if (write_artifacts) {
    out = resolve_output_dir(c.output_dir);
    std::filesystem::create_directories(out);
    std::ofstream(out / "config.json") << to_json(c).dump(2) << "\n";
  }
  ResultTable table;
  for (Architecture arch : c.architectures) {
    for (std::uint64_t seed : c.seeds) {
      auto records = run_malspi(sys, arch, malspi_config(c, sys, seed));
      for (const auto& r : records)
        table.costs.push_back({to_string(arch), seed, r.iteration, r.eval.value, r.eval.diverged});
      if (write_artifacts) {
        const auto dir = out / to_string(arch);
        std::filesystem::create_directories(dir);
        std::ofstream f(dir / ("seed_" + std::to_string(seed) + ".csv"));
        write_run_csv(f, records);
      }
      if (outcomes) outcomes->push_back({arch, seed, std::move(records)});
    }
  }
  if (write_artifacts) {
    std::ofstream f(out / "results.csv");
    write_costs_csv(f, table.costs);
  }
  return table;
}

/// Mean and median learning time per iteration (evaluation plus update) for
/// each architecture and agent count, first iteration excluded as warm-up.
/// Centralized and undecomposed runs above `bench_centralized_max_agents`
/// are recorded as NA.
inline std::vector<TimingRow> timing_benchmark(ExperimentConfig c) {
  std::vector<TimingRow> rows;
  for (int n : c.bench_n_agents) {
    c.n_agents = n;
    c.iterations = c.bench_iterations;
    const MultiAgentSystem sys = build_system(c);
    std::vector<TimingRow> block;
    for (Architecture arch : c.architectures) {
      TimingRow row;
      row.architecture = to_string(arch);
      row.n_agents = n;
      const bool full = arch == Architecture::centralized || arch == Architecture::undecomposed_direct;
      if (!(full && n > c.bench_centralized_max_agents)) {
        auto mc = malspi_config(c, sys, c.seeds.front());
        mc.T_eval = 1;
        const auto records = run_malspi(sys, arch, mc);
        std::vector<double> ms;
        for (std::size_t k = 2; k < records.size(); ++k)
          ms.push_back(records[k].wall_ms_eval + records[k].wall_ms_update);
        std::sort(ms.begin(), ms.end());
        row.mean_ms = std::accumulate(ms.begin(), ms.end(), 0.0) / double(ms.size());
        const std::size_t h = ms.size() / 2;
        row.median_ms = ms.size() % 2 ? ms[h] : 0.5 * (ms[h - 1] + ms[h]);
      }
      block.push_back(row);
    }
    const auto ind = std::find_if(block.begin(), block.end(), [](const TimingRow& r) {
      return r.architecture == to_string(Architecture::indirect);
    });
    if (ind != block.end() && !ind->skipped())
      for (auto& r : block) r.ratio_to_indirect = r.mean_ms / ind->mean_ms;
    rows.insert(rows.end(), block.begin(), block.end());
  }
  return rows;
}

// ------------------------------------------------------------------ reports

inline Json set_to_json(const AgentSet& s) {
  Json j = Json::array();
  for (Agent a : s) j.push_back(a + 1);
  return j;
}

/// Dependency sets and graphical-condition report, 1-based.
inline Json graph_report(const CouplingGraphs& g) {
  const DependencySets d = dependency_sets(g);
  Json agents = Json::array();
  for (Agent i = 0; i < g.n_agents(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    Json a;
    a["agent"] = i + 1;
    a["reachability"] = set_to_json(d.reach[si]);
    a["value"] = set_to_json(d.value[si]);
    a["gradient"] = set_to_json(d.gradient[si]);
    a["direct"] = set_to_json(d.direct[si]);
    const auto rep = check_graphical_conditions(g, i);
    a["condition_a"] = rep.cond_a;
    a["direct_proper"] = rep.direct_proper;
    Json members = Json::array();
    for (Agent j : d.gradient[si]) {
      const auto rj = check_graphical_conditions(g, i, j);
      members.push_back(Json{{"j", j + 1}, {"condition_b", *rj.cond_b}, {"value_proper", *rj.value_proper}});
    }
    a["condition_b"] = members;
    agents.push_back(std::move(a));
  }
  Json out;
  out["n_agents"] = g.n_agents();
  out["agents"] = agents;
  out["max_direct_gap"] = max_direct_gap(d);
  Json edges = Json::array();
  for (auto [a, b] : value_dependency_edges(d)) edges.push_back({a + 1, b + 1});
  out["value_edges"] = edges;
  return out;
}

inline Json bound_to_json(const SampleBound& b) {
  Json j{{"T_min", b.T_min}, {"error_coefficient", b.error_coefficient}, {"sigma_bar", b.sigma_bar}};
  j["T_epsilon"] = b.T_epsilon ? Json(*b.T_epsilon) : Json(nullptr);
  if (!b.weights.empty()) j["weights"] = b.weights;
  return j;
}

/// Direct bound on I^i_Q̂ and indirect bound over I^j_Q, j ∈ I^i_GD, for every
/// agent at the config's K_0, plus the centralized bound on the full set.
inline Json bounds_report(const ExperimentConfig& c, double epsilon, double constant, std::optional<double> at_T) {
  const MultiAgentSystem sys = build_system(c);
  const MalspiConfig mc = malspi_config(c, sys, c.seeds.front());
  const StructuredPolicy& k = mc.k0;
  const DependencySets d = dependency_sets(sys.graphs());
  const double sigma0 = c.sigma0;
  const double T = at_T.value_or(double(c.T));
  Json agents = Json::array();
  for (Agent i = 0; i < sys.n_agents(); ++i) {
    const auto si = static_cast<std::size_t>(i);
    if (d.gradient[si].empty()) continue;
    Json a;
    a["agent"] = i + 1;
    a["direct_set"] = set_to_json(d.direct[si]);
    auto direct = sample_bound_direct(
        bound_inputs(sys, k, k, d.direct[si], d.gradient[si], c.sigma_eta, sigma0, epsilon, constant));
    a["direct"] = bound_to_json(direct);
    a["direct"]["error_at_T"] = direct.error_at(T);
    std::vector<BoundInputs> members;
    for (Agent j : d.gradient[si])
      members.push_back(bound_inputs(sys, k, k, d.value[static_cast<std::size_t>(j)], {j}, c.sigma_eta, sigma0,
                                     epsilon, constant));
    auto indirect = sample_bound_indirect(members);
    a["indirect"] = bound_to_json(indirect);
    a["indirect"]["error_at_T"] = indirect.error_at(T);
    agents.push_back(std::move(a));
  }
  const AgentSet all = full_set(sys.n_agents());
  auto central = sample_bound_direct(bound_inputs(sys, k, k, all, all, c.sigma_eta, sigma0, epsilon, constant));
  Json out;
  out["agents"] = agents;
  out["centralized"] = bound_to_json(central);
  out["centralized"]["error_at_T"] = central.error_at(T);
  out["T"] = T;
  out["constant"] = constant;
  out["constant_note"] = "unidentified absolute constant; values are only comparable with each other";
  return out;
}

}  // namespace malspi
