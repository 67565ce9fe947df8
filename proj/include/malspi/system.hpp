#pragma once

// Block-structured multi-agent LQR system, structured static policies and the
// exact restriction of both to a dependency set.

#include "malspi/graph.hpp"
#include "malspi/linalg.hpp"

#include <functional>

namespace malspi {

/// Per-agent cost over the coordinates of I^i_C (raw, not averaged).
struct CostBlock {
  Matrix S;  // (n_x·|I^i_C|)²
  Matrix R;  // (n_u·|I^i_C|)²
};

class MultiAgentSystem {
 public:
  MultiAgentSystem() = default;

  /// `a` and `b` are global matrices; entries outside the state-graph
  /// pattern must be zero. `costs[i]` lives on agent i's cost coordinates.
  MultiAgentSystem(CouplingGraphs graphs, int n_x, int n_u, Matrix a, Matrix b,
                   std::vector<CostBlock> costs, double sigma_w)
      : graphs_(std::move(graphs)), n_x_(n_x), n_u_(n_u), a_(std::move(a)), b_(std::move(b)),
        costs_(std::move(costs)), sigma_w_(sigma_w) {
    validate();
    assemble_cost();
  }

  const CouplingGraphs& graphs() const noexcept { return graphs_; }
  int n_agents() const noexcept { return graphs_.n_agents(); }
  int n_x() const noexcept { return n_x_; }
  int n_u() const noexcept { return n_u_; }
  Eigen::Index state_dim() const noexcept { return Eigen::Index(n_agents()) * n_x_; }
  Eigen::Index control_dim() const noexcept { return Eigen::Index(n_agents()) * n_u_; }
  double sigma_w() const noexcept { return sigma_w_; }

  const Matrix& A() const noexcept { return a_; }
  const Matrix& B() const noexcept { return b_; }
  /// Global cost matrices of the averaged cost (1/N)·Σ c_i.
  const Matrix& S() const noexcept { return s_; }
  const Matrix& R() const noexcept { return r_; }

  const CostBlock& cost(Agent i) const { return costs_.at(graphs_.checked(i)); }
  const std::vector<CostBlock>& costs() const noexcept { return costs_; }

  /// Agent j's raw cost matrix embedded in the full state/control space.
  Matrix embedded_state_cost(Agent j) const {
    Matrix out = Matrix::Zero(state_dim(), state_dim());
    const auto idx = coordinates(graphs_.cost_set(j), n_x_);
    out(idx, idx) = cost(j).S;
    return out;
  }
  Matrix embedded_control_cost(Agent j) const {
    Matrix out = Matrix::Zero(control_dim(), control_dim());
    const auto idx = coordinates(graphs_.cost_set(j), n_u_);
    out(idx, idx) = cost(j).R;
    return out;
  }

  /// c_j(x_{I^j_C}, u_{I^j_C}) from global state and control.
  double stage_cost(Agent j, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& u) const {
    const AgentSet& cset = graphs_.cost_set(j);
    const Vector xc = x(coordinates(cset, n_x_));
    const Vector uc = u(coordinates(cset, n_u_));
    const CostBlock& c = costs_[static_cast<std::size_t>(j)];
    return xc.dot(c.S * xc) + uc.dot(c.R * uc);
  }

  void set_sigma_w(double sigma_w) {
    if (!(sigma_w >= 0.0)) throw ValidationError("sigma_w must be non-negative");
    sigma_w_ = sigma_w;
  }

 private:
  void validate() const {
    const int n = n_agents();
    if (n_x_ <= 0 || n_u_ <= 0) throw ValidationError("state and control dimensions must be positive");
    if (a_.rows() != state_dim() || a_.cols() != state_dim())
      throw ValidationError("A must be " + std::to_string(state_dim()) + " square");
    if (b_.rows() != state_dim() || b_.cols() != control_dim())
      throw ValidationError("B has the wrong shape");
    if (!(sigma_w_ >= 0.0)) throw ValidationError("sigma_w must be non-negative");
    for (Agent i = 0; i < n; ++i) {
      for (Agent j = 0; j < n; ++j) {
        if (contains(graphs_.state_set(i), j)) continue;
        if (!a_.block(i * n_x_, j * n_x_, n_x_, n_x_).isZero(0.0) ||
            !b_.block(i * n_x_, j * n_u_, n_x_, n_u_).isZero(0.0))
          throw ValidationError("dynamics block (" + std::to_string(i + 1) + ", " +
                                std::to_string(j + 1) + ") is non-zero but agent " +
                                std::to_string(j + 1) + " is not in the state set of agent " +
                                std::to_string(i + 1));
      }
    }
    if (costs_.size() != static_cast<std::size_t>(n)) throw ValidationError("one cost block per agent required");
    for (Agent i = 0; i < n; ++i) {
      const auto m = static_cast<Eigen::Index>(graphs_.cost_set(i).size());
      const CostBlock& c = costs_[static_cast<std::size_t>(i)];
      if (c.S.rows() != m * n_x_ || c.S.cols() != m * n_x_ || c.R.rows() != m * n_u_ ||
          c.R.cols() != m * n_u_)
        throw ValidationError("cost block of agent " + std::to_string(i + 1) +
                              " does not match its cost set " + format_set(graphs_.cost_set(i)));
    }
  }

  void assemble_cost() {
    s_ = Matrix::Zero(state_dim(), state_dim());
    r_ = Matrix::Zero(control_dim(), control_dim());
    for (Agent j = 0; j < n_agents(); ++j) {
      s_ += embedded_state_cost(j);
      r_ += embedded_control_cost(j);
    }
    s_ /= double(n_agents());
    r_ /= double(n_agents());
  }

  CouplingGraphs graphs_;
  int n_x_ = 0, n_u_ = 0;
  Matrix a_, b_;
  std::vector<CostBlock> costs_;
  double sigma_w_ = 0.0;
  Matrix s_, r_;
};

/// Assembles global A and B by asking `blocks(i, j)` for every j ∈ I^i_S.
inline std::pair<Matrix, Matrix> assemble_dynamics(
    const CouplingGraphs& g, int n_x, int n_u,
    const std::function<std::pair<Matrix, Matrix>(Agent, Agent)>& blocks) {
  const Eigen::Index nx = Eigen::Index(g.n_agents()) * n_x, nu = Eigen::Index(g.n_agents()) * n_u;
  Matrix a = Matrix::Zero(nx, nx), b = Matrix::Zero(nx, nu);
  for (Agent i = 0; i < g.n_agents(); ++i) {
    for (Agent j : g.state_set(i)) {
      auto [aij, bij] = blocks(i, j);
      if (aij.rows() != n_x || aij.cols() != n_x || bij.rows() != n_x || bij.cols() != n_u)
        throw ValidationError("dynamics block has the wrong shape");
      a.block(i * n_x, j * n_x, n_x, n_x) = aij;
      b.block(i * n_x, j * n_u, n_x, n_u) = bij;
    }
  }
  return {a, b};
}

/// Global static gain K with K_ij = 0 for j ∉ I^i_O.
class StructuredPolicy {
 public:
  StructuredPolicy() = default;

  StructuredPolicy(const CouplingGraphs& g, int n_x, int n_u, Matrix k)
      : n_x_(n_x), n_u_(n_u), observe_(static_cast<std::size_t>(g.n_agents())), k_(std::move(k)) {
    const int n = g.n_agents();
    for (Agent i = 0; i < n; ++i) observe_[static_cast<std::size_t>(i)] = g.observation_set(i);
    if (k_.rows() != Eigen::Index(n) * n_u || k_.cols() != Eigen::Index(n) * n_x)
      throw ValidationError("policy gain has the wrong shape");
    for (Agent i = 0; i < n; ++i)
      for (Agent j = 0; j < n; ++j)
        if (!contains(observe_[static_cast<std::size_t>(i)], j) &&
            !k_.block(i * n_u, j * n_x, n_u, n_x).isZero(0.0))
          throw ValidationError("policy block (" + std::to_string(i + 1) + ", " + std::to_string(j + 1) +
                                ") violates the observation graph");
  }

  static StructuredPolicy zero(const CouplingGraphs& g, int n_x, int n_u) {
    return {g, n_x, n_u, Matrix::Zero(Eigen::Index(g.n_agents()) * n_u, Eigen::Index(g.n_agents()) * n_x)};
  }

  int n_agents() const noexcept { return static_cast<int>(observe_.size()); }
  const Matrix& K() const noexcept { return k_; }
  const AgentSet& observation_set(Agent i) const { return observe_.at(static_cast<std::size_t>(i)); }

  /// K_i restricted to its observed agents: n_u × n_x|I^i_O|.
  Matrix local_gain(Agent i) const {
    return k_(Eigen::seqN(Eigen::Index(i) * n_u_, n_u_), coordinates(observation_set(i), n_x_));
  }

  void set_local_gain(Agent i, const Matrix& gain) {
    const auto cols = coordinates(observation_set(i), n_x_);
    if (gain.rows() != n_u_ || gain.cols() != static_cast<Eigen::Index>(cols.size()))
      throw ValidationError("local gain has the wrong shape");
    k_(Eigen::seqN(Eigen::Index(i) * n_u_, n_u_), cols) = gain;
  }

 private:
  int n_x_ = 0, n_u_ = 0;
  std::vector<AgentSet> observe_;
  Matrix k_;
};

/// Restriction of the system, policy and a chosen cost aggregate to an
/// agent set. Cost matrices are raw sums over `cost_owners` (no 1/N).
struct Subsystem {
  AgentSet index_set;
  AgentSet cost_owners;
  int n_x = 0, n_u = 0;
  Matrix A, B, K, S, R;

  Eigen::Index state_dim() const { return A.rows(); }
  Eigen::Index control_dim() const { return B.cols(); }
  Eigen::Index joint_dim() const { return state_dim() + control_dim(); }
};

/// First agent of R^j_SO outside `set` for some j in `set`, if any.
inline std::optional<std::pair<Agent, Agent>> closure_violation(const CouplingGraphs& g, const AgentSet& set) {
  for (Agent j : set)
    for (Agent k : reachability_set(g, j))
      if (!contains(set, k)) return std::make_pair(j, k);
  return std::nullopt;
}

inline Subsystem extract_subsystem(const MultiAgentSystem& sys, const StructuredPolicy& policy,
                                   const AgentSet& index_set, const AgentSet& cost_owners,
                                   bool require_closed = true) {
  const CouplingGraphs& g = sys.graphs();
  if (!std::is_sorted(index_set.begin(), index_set.end()) ||
      std::adjacent_find(index_set.begin(), index_set.end()) != index_set.end())
    throw ValidationError("index set must be sorted and duplicate-free");
  for (Agent a : index_set) g.checked(a);
  if (require_closed) {
    if (auto v = closure_violation(g, index_set))
      throw ValidationError("index set " + format_set(index_set) + " is not closed: agent " +
                            std::to_string(v->second + 1) + " reaches agent " +
                            std::to_string(v->first + 1) + " but is missing");
  }
  Subsystem sub;
  sub.index_set = index_set;
  sub.cost_owners = cost_owners;
  sub.n_x = sys.n_x();
  sub.n_u = sys.n_u();
  const auto xi = coordinates(index_set, sys.n_x());
  const auto ui = coordinates(index_set, sys.n_u());
  sub.A = sys.A()(xi, xi);
  sub.B = sys.B()(xi, ui);
  sub.K = policy.K()(ui, xi);
  sub.S = Matrix::Zero(static_cast<Eigen::Index>(xi.size()), static_cast<Eigen::Index>(xi.size()));
  sub.R = Matrix::Zero(static_cast<Eigen::Index>(ui.size()), static_cast<Eigen::Index>(ui.size()));
  for (Agent j : cost_owners) {
    const AgentSet& cset = g.cost_set(j);
    if (!detail::is_subset(cset, index_set))
      throw ValidationError("cost of agent " + std::to_string(j + 1) + " depends on " + format_set(cset) +
                            ", which is not inside " + format_set(index_set));
    const auto px = local_coordinates(cset, index_set, sys.n_x());
    const auto pu = local_coordinates(cset, index_set, sys.n_u());
    sub.S(px, px) += sys.cost(j).S;
    sub.R(pu, pu) += sys.cost(j).R;
  }
  return sub;
}

/// Exact Q-matrix of the subsystem under its policy, over z = [x; u]:
///   Q = blkdiag(S, R) + [A B]ᵀ P [A B],  P = (A+BK)ᵀ P (A+BK) + S + Kᵀ R K.
inline Matrix true_q_matrix(const Subsystem& sub) {
  const Matrix closed = sub.A + sub.B * sub.K;
  const Matrix p = lyapunov_solve(closed.transpose(), sub.S + sub.K.transpose() * sub.R * sub.K);
  Matrix ab(sub.state_dim(), sub.joint_dim());
  ab << sub.A, sub.B;
  Matrix q = ab.transpose() * p * ab;
  q.topLeftCorner(sub.state_dim(), sub.state_dim()) += sub.S;
  q.bottomRightCorner(sub.control_dim(), sub.control_dim()) += sub.R;
  return symmetrize(q);
}

/// [I; K] for a subsystem gain, mapping x to z = [x; Kx].
inline Matrix state_to_joint(const Matrix& k) {
  Matrix m(k.cols() + k.rows(), k.cols());
  m << Matrix::Identity(k.cols(), k.cols()), k;
  return m;
}

/// Closed-loop stationary state covariance L(A+BK, σ²_w I).
inline Matrix stationary_covariance(const MultiAgentSystem& sys, const Matrix& k) {
  const Matrix closed = sys.A() + sys.B() * k;
  return lyapunov_solve(closed, sys.sigma_w() * sys.sigma_w() * Matrix::Identity(sys.state_dim(), sys.state_dim()));
}

}  // namespace malspi
