#pragma once

// Multi-agent least-squares policy iteration.
//
// Every iteration collects one trajectory under the play policy, then each
// agent evaluates a quadratic Q-function on its architecture-specific agent
// set and takes a deterministic policy-gradient step on its own gain block.

#include "malspi/lstdq.hpp"

#include <atomic>
#include <chrono>
#include <map>
#include <thread>

namespace malspi {

enum class Architecture { centralized, undecomposed_direct, direct, indirect };

inline const char* to_string(Architecture a) {
  switch (a) {
    case Architecture::centralized: return "centralized";
    case Architecture::undecomposed_direct: return "undecomposed_direct";
    case Architecture::direct: return "direct";
    case Architecture::indirect: return "indirect";
  }
  return "?";
}

inline Architecture parse_architecture(const std::string& s) {
  if (s == "centralized") return Architecture::centralized;
  if (s == "undecomposed_direct") return Architecture::undecomposed_direct;
  if (s == "direct") return Architecture::direct;
  if (s == "indirect") return Architecture::indirect;
  throw ValidationError("unknown architecture '" + s + "'");
}

inline constexpr Architecture kAllArchitectures[] = {Architecture::centralized, Architecture::undecomposed_direct,
                                                     Architecture::direct, Architecture::indirect};

/// One LSTDQ regression: features over `index_set`, target Σ_{j ∈ cost_owners} c_j.
struct RegressionTask {
  AgentSet index_set;
  AgentSet cost_owners;
  friend auto operator<=>(const RegressionTask&, const RegressionTask&) = default;
};

struct AgentPlan {
  AgentSet target_set;              // coordinates of the aggregated Q̂_i
  AgentSet truth_owners;            // cost owners of the matching exact Q
  std::vector<std::size_t> tasks;   // regressions summed into Q̂_i
};

struct ArchitecturePlan {
  Architecture architecture = Architecture::direct;
  std::vector<RegressionTask> tasks;
  std::vector<AgentPlan> agents;
};

/// Evaluation and update scopes per architecture:
///  - centralized: Q of the summed cost of all agents on the full set;
///  - undecomposed direct: Q̂_i (costs of I^i_GD) on the full set;
///  - direct: Q̂_i on I^i_Q̂;
///  - indirect: Q_j on I^j_Q for j ∈ I^i_GD, summed on I^i_Q̂. Members of
///    I^i_GD sharing a value set share one regression whose target is their
///    summed cost; LSTDQ is linear in the target so this equals the sum of the
///    separate estimates.
inline ArchitecturePlan make_plan(Architecture arch, const DependencySets& deps) {
  const int n = deps.n_agents();
  const AgentSet all = full_set(n);
  ArchitecturePlan plan;
  plan.architecture = arch;
  plan.agents.resize(static_cast<std::size_t>(n));
  std::map<RegressionTask, std::size_t> shared;
  auto add_task = [&](RegressionTask t, bool dedupe) {
    if (dedupe) {
      if (auto it = shared.find(t); it != shared.end()) return it->second;
      shared.emplace(t, plan.tasks.size());
    }
    plan.tasks.push_back(std::move(t));
    return plan.tasks.size() - 1;
  };
  for (Agent i = 0; i < n; ++i) {
    const auto si = static_cast<std::size_t>(i);
    AgentPlan& ap = plan.agents[si];
    const AgentSet& gd = deps.gradient[si];
    switch (arch) {
      case Architecture::centralized:
        ap.target_set = all;
        ap.truth_owners = all;
        break;
      case Architecture::undecomposed_direct:
        ap.target_set = all;
        ap.truth_owners = gd;
        break;
      case Architecture::direct:
      case Architecture::indirect:
        ap.target_set = deps.direct[si];
        ap.truth_owners = gd;
        break;
    }
    if (ap.truth_owners.empty()) continue;  // K_i affects no cost
    if (arch == Architecture::indirect) {
      std::map<AgentSet, AgentSet> groups;
      for (Agent j : gd) groups[deps.value[static_cast<std::size_t>(j)]].push_back(j);
      for (auto& [set, members] : groups) ap.tasks.push_back(add_task({set, members}, true));
    } else {
      ap.tasks.push_back(add_task({ap.target_set, ap.truth_owners}, false));
    }
  }
  return plan;
}

/// Runs `fn(k)` for k in [0, count) on up to `threads` workers. Each k must
/// write only to its own output slot.
template <typename Fn>
void parallel_for(std::size_t count, unsigned threads, Fn&& fn) {
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, count));
  if (threads <= 1) {
    for (std::size_t k = 0; k < count; ++k) fn(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::vector<std::exception_ptr> errors(threads);
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w) {
    pool.emplace_back([&, w] {
      try {
        for (std::size_t k = next++; k < count; k = next++) fn(k);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

/// Ê[J_i Q̂ [x_set; K_set x_set] x_{I^i_O}ᵀ] given the empirical second moment
/// of x_set. Returns an n_u × n_x|I^i_O| matrix.
inline Matrix policy_gradient_term(const StructuredPolicy& policy, Agent i, const Matrix& q_hat,
                                   const AgentSet& set, const Matrix& second_moment, int n_x, int n_u) {
  if (!contains(set, i) || !detail::is_subset(policy.observation_set(i), set))
    throw ValidationError("Q-function set " + format_set(set) + " must contain agent " + std::to_string(i + 1) +
                          " and its observations " + format_set(policy.observation_set(i)));
  const auto xi = coordinates(set, n_x);
  const auto ui = coordinates(set, n_u);
  const auto nx = static_cast<Eigen::Index>(xi.size());
  if (q_hat.rows() != nx + static_cast<Eigen::Index>(ui.size()))
    throw ValidationError("Q-function dimension does not match its set");
  const Matrix lift = state_to_joint(policy.K()(ui, xi));
  const Eigen::Index row = nx + static_cast<Eigen::Index>(positions_in({i}, set)[0]) * n_u;
  const auto obs = local_coordinates(policy.observation_set(i), set, n_x);
  return q_hat.middleRows(row, n_u) * lift * second_moment(Eigen::all, obs);
}

/// Empirical E[x(t) x(t)ᵀ] over the transition samples t = 0..T-1.
inline Matrix state_second_moment(const TrajectoryBatch& batch) {
  const auto samples = batch.x.topRows(batch.length());
  return samples.transpose() * samples / double(batch.length());
}

/// K_i ← K_i − 2α Ê[J_i Q̂ [x; K x] x_{I^i_O}ᵀ] with the expectation taken
/// over the batch states and u replaced by the current policy's action.
inline StructuredPolicy policy_gradient_update(const StructuredPolicy& policy, Agent i, const Matrix& q_hat,
                                               const AgentSet& set, const TrajectoryBatch& batch, double alpha,
                                               int n_x, int n_u) {
  const auto xi = coordinates(set, n_x);
  const Matrix moment = state_second_moment(batch)(xi, xi);
  StructuredPolicy next = policy;
  next.set_local_gain(i, policy.local_gain(i) - 2.0 * alpha * policy_gradient_term(policy, i, q_hat, set, moment, n_x, n_u));
  return next;
}

struct MalspiConfig {
  StructuredPolicy k0;
  std::optional<StructuredPolicy> k_play;  // defaults to k0
  int iterations = 15;
  Eigen::Index T = 500;
  Eigen::Index T_eval = 500;
  double sigma_eta = 1.0;
  double zeta = 1e-6;
  double alpha = 1e-3;
  InitialState init;
  std::uint64_t seed = 1;
  unsigned threads = 1;
  bool compute_q_error = false;
  bool force_full_sets = false;  // every dependency set replaced by V
};

namespace flags {
inline constexpr const char* singular = "lstdq_singular";
inline constexpr const char* no_dependents = "no_gradient_dependents";
inline constexpr const char* diverged = "diverged";
}  // namespace flags

struct AgentDiagnostics {
  double min_rel_pivot = 0.0;
  std::optional<double> q_error;  // ‖q̂ − q_true‖ before projection
  std::string flags;
};

struct IterationRecord {
  int iteration = 0;
  StructuredPolicy policy;
  CostEstimate eval;
  double wall_ms_eval = 0.0;
  double wall_ms_update = 0.0;
  std::vector<AgentDiagnostics> agents;
};

/// Stream ids for the random draws of iteration l.
inline constexpr std::uint64_t kRolloutStream = 0;
inline constexpr std::uint64_t kEvaluationStream = 1ull << 32;

inline std::vector<IterationRecord> run_malspi(const MultiAgentSystem& sys, Architecture arch,
                                               const MalspiConfig& cfg) {
  using clock = std::chrono::steady_clock;
  const StructuredPolicy& play = cfg.k_play ? *cfg.k_play : cfg.k0;
  for (const StructuredPolicy* k : {&cfg.k0, &play}) {
    const double rho = spectral_radius(sys.A() + sys.B() * k->K());
    if (rho >= 1.0) throw InstabilityError("initial or play policy does not stabilise the system", rho);
  }
  if (cfg.iterations < 0) throw ValidationError("iteration count must be non-negative");
  const int n = sys.n_agents();
  const DependencySets deps = cfg.force_full_sets ? DependencySets::full(n) : dependency_sets(sys.graphs());
  const ArchitecturePlan plan = make_plan(arch, deps);

  std::vector<IterationRecord> records;
  records.reserve(static_cast<std::size_t>(cfg.iterations) + 1);
  IterationRecord first;
  first.iteration = 0;
  first.policy = cfg.k0;
  first.eval = average_cost(sys, cfg.k0, cfg.T_eval, cfg.seed, cfg.init, kEvaluationStream);
  first.agents.resize(static_cast<std::size_t>(n));
  records.push_back(std::move(first));

  for (int l = 1; l <= cfg.iterations; ++l) {
    const StructuredPolicy& current = records.back().policy;
    IterationRecord rec;
    rec.iteration = l;
    rec.agents.resize(static_cast<std::size_t>(n));

    const auto t0 = clock::now();
    const TrajectoryBatch batch =
        rollout(sys, play, cfg.T, cfg.sigma_eta, cfg.init, cfg.seed, kRolloutStream + std::uint64_t(l));

    std::vector<std::optional<QEstimate>> solved(plan.tasks.size());
    parallel_for(plan.tasks.size(), cfg.threads, [&](std::size_t k) {
      const RegressionTask& task = plan.tasks[k];
      try {
        solved[k] = lstdq_solve(build_regression(sys, batch, task.index_set, current, task.cost_owners));
      } catch (const SingularRegressionError&) {
        solved[k].reset();
      }
    });

    std::vector<std::optional<Matrix>> q_hat(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t si) {
      const AgentPlan& ap = plan.agents[si];
      AgentDiagnostics& diag = rec.agents[si];
      if (ap.tasks.empty()) {
        diag.flags = flags::no_dependents;
        return;
      }
      const Eigen::Index m = Eigen::Index(ap.target_set.size()) * (sys.n_x() + sys.n_u());
      Matrix sum = Matrix::Zero(m, m);
      diag.min_rel_pivot = std::numeric_limits<double>::infinity();
      for (std::size_t k : ap.tasks) {
        if (!solved[k]) {
          diag.flags = flags::singular;
          diag.min_rel_pivot = 0.0;
          return;
        }
        const RegressionTask& task = plan.tasks[k];
        std::vector<Eigen::Index> idx = local_coordinates(task.index_set, ap.target_set, sys.n_x());
        for (Eigen::Index c : local_coordinates(task.index_set, ap.target_set, sys.n_u()))
          idx.push_back(Eigen::Index(ap.target_set.size()) * sys.n_x() + c);
        sum(idx, idx) += solved[k]->Q;
        diag.min_rel_pivot = std::min(diag.min_rel_pivot, solved[k]->min_rel_pivot);
      }
      if (cfg.compute_q_error) {
        try {
          const Matrix truth = true_q_matrix(extract_subsystem(sys, current, ap.target_set, ap.truth_owners));
          diag.q_error = (svec(sum) - svec(truth)).norm();
        } catch (const InstabilityError&) {
        }
      }
      q_hat[si] = psd_project(sum, cfg.zeta);
    });
    const auto t1 = clock::now();

    const Matrix moment = state_second_moment(batch);
    std::vector<std::optional<Matrix>> gains(static_cast<std::size_t>(n));
    parallel_for(static_cast<std::size_t>(n), cfg.threads, [&](std::size_t si) {
      if (!q_hat[si]) return;
      const Agent i = static_cast<Agent>(si);
      const AgentSet& set = plan.agents[si].target_set;
      const auto xi = coordinates(set, sys.n_x());
      gains[si] = current.local_gain(i) -
                  2.0 * cfg.alpha * policy_gradient_term(current, i, *q_hat[si], set, moment(xi, xi), sys.n_x(), sys.n_u());
    });
    StructuredPolicy next = current;
    for (Agent i = 0; i < n; ++i)
      if (gains[static_cast<std::size_t>(i)]) next.set_local_gain(i, *gains[static_cast<std::size_t>(i)]);
    const auto t2 = clock::now();

    rec.policy = std::move(next);
    rec.eval = average_cost(sys, rec.policy, cfg.T_eval, cfg.seed, cfg.init, kEvaluationStream + std::uint64_t(l));
    if (rec.eval.diverged)
      for (auto& a : rec.agents) a.flags += a.flags.empty() ? flags::diverged : std::string("|") + flags::diverged;
    rec.wall_ms_eval = std::chrono::duration<double, std::milli>(t1 - t0).count();
    rec.wall_ms_update = std::chrono::duration<double, std::milli>(t2 - t1).count();
    records.push_back(std::move(rec));
  }
  return records;
}

}  // namespace malspi
