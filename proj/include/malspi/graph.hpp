#pragma once

// Coupling graphs and the dependency sets derived from them.
//
// An edge (i, j) in a graph means agent i enters agent j's dynamics
// (state graph), observation (observation graph) or cost (cost graph).
// The in-neighbours of j are therefore j's index set for that graph.

#include "malspi/common.hpp"

#include <optional>
#include <queue>
#include <set>
#include <utility>

namespace malspi {

using Edge = std::pair<Agent, Agent>;
using EdgeList = std::vector<Edge>;

class CouplingGraphs {
 public:
  CouplingGraphs() = default;

  /// Edges are 0-based. Duplicates are dropped; self-loops are kept as given
  /// and never inserted implicitly.
  CouplingGraphs(int n_agents, const EdgeList& state, const EdgeList& observation,
                 const EdgeList& cost)
      : n_(n_agents) {
    if (n_agents <= 0) throw ValidationError("coupling graphs need at least one agent");
    state_ = normalize(state, "state");
    observation_ = normalize(observation, "observation");
    cost_ = normalize(cost, "cost");
    in_state_ = in_neighbours(state_);
    in_observation_ = in_neighbours(observation_);
    in_cost_ = in_neighbours(cost_);
  }

  int n_agents() const noexcept { return n_; }
  const EdgeList& state_edges() const noexcept { return state_; }
  const EdgeList& observation_edges() const noexcept { return observation_; }
  const EdgeList& cost_edges() const noexcept { return cost_; }

  /// I^i_S: agents whose state/control enter agent i's dynamics.
  const AgentSet& state_set(Agent i) const { return in_state_.at(checked(i)); }
  /// I^i_O: agents whose state agent i observes.
  const AgentSet& observation_set(Agent i) const { return in_observation_.at(checked(i)); }
  /// I^i_C: agents whose state/control enter agent i's cost.
  const AgentSet& cost_set(Agent i) const { return in_cost_.at(checked(i)); }

  std::size_t checked(Agent i) const {
    if (i < 0 || i >= n_)
      throw ValidationError("agent index " + std::to_string(i + 1) + " outside 1.." +
                            std::to_string(n_));
    return static_cast<std::size_t>(i);
  }

  friend bool operator==(const CouplingGraphs& a, const CouplingGraphs& b) {
    return a.n_ == b.n_ && a.state_ == b.state_ && a.observation_ == b.observation_ &&
           a.cost_ == b.cost_;
  }

 private:
  EdgeList normalize(const EdgeList& edges, const char* name) const {
    std::set<Edge> unique;
    for (const auto& [from, to] : edges) {
      if (from < 0 || from >= n_ || to < 0 || to >= n_)
        throw ValidationError(std::string(name) + " edge (" + std::to_string(from + 1) + ", " +
                              std::to_string(to + 1) + ") has an endpoint outside 1.." +
                              std::to_string(n_));
      unique.insert({from, to});
    }
    return {unique.begin(), unique.end()};
  }

  std::vector<AgentSet> in_neighbours(const EdgeList& edges) const {
    std::vector<AgentSet> in(static_cast<std::size_t>(n_));
    for (const auto& [from, to] : edges) in[static_cast<std::size_t>(to)].push_back(from);
    for (auto& s : in) std::sort(s.begin(), s.end());
    return in;
  }

  int n_ = 0;
  EdgeList state_, observation_, cost_;
  std::vector<AgentSet> in_state_, in_observation_, in_cost_;
};

/// Validating constructor taking 1-based edge lists, as written in configs.
inline CouplingGraphs build_coupling_graphs(int n_agents, const EdgeList& state_1based,
                                            const EdgeList& observation_1based,
                                            const EdgeList& cost_1based) {
  auto shift = [](const EdgeList& in) {
    EdgeList out;
    out.reserve(in.size());
    for (const auto& [a, b] : in) out.emplace_back(a - 1, b - 1);
    return out;
  };
  return CouplingGraphs(n_agents, shift(state_1based), shift(observation_1based),
                        shift(cost_1based));
}

namespace detail {

/// Breadth-first search from `start` following `adjacency`; includes `start`.
inline AgentSet bfs(const std::vector<AgentSet>& adjacency, Agent start) {
  std::vector<char> seen(adjacency.size(), 0);
  std::queue<Agent> frontier;
  frontier.push(start);
  seen[static_cast<std::size_t>(start)] = 1;
  while (!frontier.empty()) {
    const Agent v = frontier.front();
    frontier.pop();
    for (Agent w : adjacency[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        frontier.push(w);
      }
    }
  }
  AgentSet out;
  for (std::size_t k = 0; k < seen.size(); ++k)
    if (seen[k]) out.push_back(static_cast<Agent>(k));
  return out;
}

/// Adjacency of E_S ∪ E_O, either along edges (forward) or against them.
inline std::vector<AgentSet> so_adjacency(const CouplingGraphs& g, bool reversed) {
  std::vector<AgentSet> adj(static_cast<std::size_t>(g.n_agents()));
  auto add = [&](const EdgeList& edges) {
    for (const auto& [from, to] : edges) {
      if (reversed)
        adj[static_cast<std::size_t>(to)].push_back(from);
      else
        adj[static_cast<std::size_t>(from)].push_back(to);
    }
  };
  add(g.state_edges());
  add(g.observation_edges());
  for (auto& s : adj) {
    std::sort(s.begin(), s.end());
    s.erase(std::unique(s.begin(), s.end()), s.end());
  }
  return adj;
}

inline AgentSet set_union(const AgentSet& a, const AgentSet& b) {
  AgentSet out;
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline AgentSet set_intersection(const AgentSet& a, const AgentSet& b) {
  AgentSet out;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(out));
  return out;
}

inline bool is_subset(const AgentSet& inner, const AgentSet& outer) {
  return std::includes(outer.begin(), outer.end(), inner.begin(), inner.end());
}

}  // namespace detail

/// R^i_SO: agents with a directed path to i in E_S ∪ E_O, plus i itself.
inline AgentSet reachability_set(const CouplingGraphs& g, Agent i) {
  g.checked(i);
  return detail::bfs(detail::so_adjacency(g, /*reversed=*/true), i);
}

/// I^i_Q = ∪_{k ∈ I^i_C} R^k_SO.
inline AgentSet value_dependence_set(const CouplingGraphs& g, Agent i) {
  const auto reversed = detail::so_adjacency(g, true);
  AgentSet out;
  for (Agent k : g.cost_set(i)) out = detail::set_union(out, detail::bfs(reversed, k));
  return out;
}

/// All per-agent dependency sets, computed together.
struct DependencySets {
  std::vector<AgentSet> reach;      // R^i_SO
  std::vector<AgentSet> value;      // I^i_Q
  std::vector<AgentSet> gradient;   // I^i_GD
  std::vector<AgentSet> direct;     // I^i_Q̂

  int n_agents() const noexcept { return static_cast<int>(value.size()); }

  /// Every set replaced by the full agent set. Used to collapse the
  /// decomposed architectures onto the undecomposed ones.
  static DependencySets full(int n_agents) {
    DependencySets d;
    const AgentSet all = full_set(n_agents);
    d.reach.assign(static_cast<std::size_t>(n_agents), all);
    d.value = d.reach;
    d.gradient = d.reach;
    d.direct = d.reach;
    return d;
  }
};

inline DependencySets dependency_sets(const CouplingGraphs& g) {
  const int n = g.n_agents();
  const auto reversed = detail::so_adjacency(g, true);
  DependencySets d;
  d.reach.resize(static_cast<std::size_t>(n));
  d.value.resize(static_cast<std::size_t>(n));
  d.gradient.resize(static_cast<std::size_t>(n));
  d.direct.resize(static_cast<std::size_t>(n));
  for (Agent i = 0; i < n; ++i) d.reach[static_cast<std::size_t>(i)] = detail::bfs(reversed, i);
  for (Agent i = 0; i < n; ++i)
    for (Agent k : g.cost_set(i))
      d.value[static_cast<std::size_t>(i)] =
          detail::set_union(d.value[static_cast<std::size_t>(i)], d.reach[static_cast<std::size_t>(k)]);
  // Transpose of the value dependency graph; iterating j ascending keeps sets sorted.
  for (Agent j = 0; j < n; ++j)
    for (Agent i : d.value[static_cast<std::size_t>(j)])
      d.gradient[static_cast<std::size_t>(i)].push_back(j);
  for (Agent i = 0; i < n; ++i)
    for (Agent j : d.gradient[static_cast<std::size_t>(i)])
      d.direct[static_cast<std::size_t>(i)] =
          detail::set_union(d.direct[static_cast<std::size_t>(i)], d.value[static_cast<std::size_t>(j)]);
  return d;
}

/// I^i_GD = { j : i ∈ I^j_Q }.
inline AgentSet gradient_dependence_set(const CouplingGraphs& g, Agent i) {
  g.checked(i);
  return dependency_sets(g).gradient[static_cast<std::size_t>(i)];
}

/// I^i_Q̂ = ∪_{j ∈ I^i_GD} I^j_Q.
inline AgentSet direct_dependence_set(const CouplingGraphs& g, Agent i) {
  g.checked(i);
  return dependency_sets(g).direct[static_cast<std::size_t>(i)];
}

/// Edge list (0-based) of the value dependency graph: (j, i) for j ∈ I^i_Q.
inline EdgeList value_dependency_edges(const DependencySets& d) {
  EdgeList edges;
  for (Agent i = 0; i < d.n_agents(); ++i)
    for (Agent j : d.value[static_cast<std::size_t>(i)]) edges.emplace_back(j, i);
  std::sort(edges.begin(), edges.end());
  return edges;
}

inline int max_direct_gap(const DependencySets& d) {
  int gap = 0;
  for (std::size_t i = 0; i < d.value.size(); ++i)
    gap = std::max(gap, static_cast<int>(d.direct[i].size()) - static_cast<int>(d.value[i].size()));
  return gap;
}

/// Graphical characterisation of strictly better sample complexity.
struct ConditionReport {
  bool cond_a = false;            // graphical test: I^i_Q̂ ⊂ V
  bool direct_proper = false;     // set test: |I^i_Q̂| < N
  std::optional<bool> cond_b;     // graphical test: I^j_Q ⊂ I^i_Q̂ (strict)
  std::optional<bool> value_proper;  // set test for the same
  std::optional<Agent> witness_k;    // agent outside I^i_Q̂ found by cond_a
};

namespace detail {

/// ∪_{m ∈ R^i_(SO)ᵀ} I^m_Cᵀ, where R^i_(SO)ᵀ is forward reachability from i
/// (self included) and I^m_Cᵀ are the out-neighbours of m in the cost graph.
inline AgentSet cost_successors_of_forward_reach(const std::vector<AgentSet>& forward,
                                                 const std::vector<AgentSet>& cost_out, Agent i) {
  AgentSet out;
  for (Agent m : bfs(forward, i)) out = set_union(out, cost_out[static_cast<std::size_t>(m)]);
  return out;
}

}  // namespace detail

/// Evaluates the graphical conditions for agent i (and optionally j ∈ I^i_GD)
/// from forward reachability and transposed cost edges only; the plain set
/// comparisons are reported alongside so the equivalence can be tested.
inline ConditionReport check_graphical_conditions(const CouplingGraphs& g, Agent i,
                                                  std::optional<Agent> j = std::nullopt) {
  g.checked(i);
  const int n = g.n_agents();
  const auto forward = detail::so_adjacency(g, /*reversed=*/false);
  std::vector<AgentSet> cost_out(static_cast<std::size_t>(n));
  for (const auto& [from, to] : g.cost_edges()) cost_out[static_cast<std::size_t>(from)].push_back(to);
  for (auto& s : cost_out) std::sort(s.begin(), s.end());

  std::vector<AgentSet> reach_cost(static_cast<std::size_t>(n));
  for (Agent k = 0; k < n; ++k)
    reach_cost[static_cast<std::size_t>(k)] = detail::cost_successors_of_forward_reach(forward, cost_out, k);

  const DependencySets d = dependency_sets(g);
  ConditionReport r;
  const AgentSet& from_i = reach_cost[static_cast<std::size_t>(i)];
  for (Agent k = 0; k < n && !r.cond_a; ++k) {
    if (detail::set_intersection(from_i, reach_cost[static_cast<std::size_t>(k)]).empty()) {
      r.cond_a = true;
      r.witness_k = k;
    }
  }
  r.direct_proper = static_cast<int>(d.direct[static_cast<std::size_t>(i)].size()) < n;

  if (j) {
    g.checked(*j);
    const AgentSet& gd = d.gradient[static_cast<std::size_t>(i)];
    if (!contains(gd, *j))
      throw ValidationError("agent " + std::to_string(*j + 1) +
                            " is not in the gradient dependency set of agent " +
                            std::to_string(i + 1));
    const AgentSet& value_j = d.value[static_cast<std::size_t>(*j)];
    bool b = false;
    for (Agent k = 0; k < n && !b; ++k) {
      if (contains(value_j, k)) continue;
      const AgentSet shared = detail::set_intersection(from_i, reach_cost[static_cast<std::size_t>(k)]);
      // Any such intersection already lies inside I^i_GD; the condition needs it non-empty.
      b = !shared.empty() && detail::is_subset(shared, gd);
    }
    r.cond_b = b;
    const AgentSet& direct_i = d.direct[static_cast<std::size_t>(i)];
    r.value_proper = detail::is_subset(value_j, direct_i) && value_j.size() < direct_i.size();
  }
  return r;
}

}  // namespace malspi
