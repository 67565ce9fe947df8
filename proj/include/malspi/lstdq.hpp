#pragma once

// LSTDQ policy evaluation on a dependency set.
//
// For samples restricted to an index set with z_t = [x_t; u_t] the quadratic
// Q-function satisfies the error-in-variables regression
//
//   ĉ = (Φ − Ξ + F) q,   φ_t = svec(z_t z_tᵀ),  f = svec(σ²_w [I;K][I;K]ᵀ),
//
// where Ξ holds expected next-step on-policy features. The estimator replaces
// Ξ with the realised Ψ₊ (rows ψ_{t+1} = svec(z'z'ᵀ), z' = [x_{t+1}; K x_{t+1}])
// and solves Φᵀ(Φ − Ψ₊ + F) q = Φᵀ ĉ.

#include "malspi/rollout.hpp"

#include <iomanip>

namespace malspi {

struct RegressionBundle {
  Matrix phi;       // T × d
  Matrix psi_next;  // T × d
  Vector f;         // d; every row of F equals fᵀ
  Vector c_hat;     // T
  AgentSet index_set;
  AgentSet cost_owners;
  Eigen::Index joint_dim = 0;  // m = (n_x + n_u)|set|

  Eigen::Index samples() const noexcept { return phi.rows(); }
  Eigen::Index features() const noexcept { return phi.cols(); }
  Matrix F() const { return Vector::Ones(samples()) * f.transpose(); }
};

/// Features over coordinates ordered [x_set; u_set].
inline RegressionBundle build_regression(const MultiAgentSystem& sys, const TrajectoryBatch& batch,
                                         const AgentSet& index_set, const StructuredPolicy& eval_policy,
                                         const AgentSet& cost_owners, bool require_closed = true) {
  const Subsystem sub = extract_subsystem(sys, eval_policy, index_set, cost_owners, require_closed);
  const Eigen::Index nx = sub.state_dim(), nu = sub.control_dim(), m = nx + nu;
  const Eigen::Index d = triangular_size(m);
  const Eigen::Index T = batch.length();
  if (T < d) throw UnderdeterminedError(static_cast<std::size_t>(T), static_cast<std::size_t>(d));

  RegressionBundle r;
  r.index_set = index_set;
  r.cost_owners = cost_owners;
  r.joint_dim = m;
  r.phi.resize(T, d);
  r.psi_next.resize(T, d);
  r.c_hat = Vector::Zero(T);

  const auto xi = coordinates(index_set, sys.n_x());
  const auto ui = coordinates(index_set, sys.n_u());
  const Matrix xs = batch.x(Eigen::all, xi);  // (T+1) × nx
  const Matrix us = batch.u(Eigen::all, ui);  // T × nu
  const Matrix next_u = xs.bottomRows(T) * sub.K.transpose();

  Vector z(m), row(d);
  for (Eigen::Index t = 0; t < T; ++t) {
    z << xs.row(t).transpose(), us.row(t).transpose();
    svec_outer(z, row);
    r.phi.row(t) = row.transpose();
    z << xs.row(t + 1).transpose(), next_u.row(t).transpose();
    svec_outer(z, row);
    r.psi_next.row(t) = row.transpose();
  }
  for (Agent j : cost_owners)
    for (Eigen::Index t = 0; t < T; ++t)
      r.c_hat(t) += sys.stage_cost(j, batch.x.row(t).transpose(), batch.u.row(t).transpose());

  const Matrix lift = state_to_joint(sub.K);
  r.f = svec(sys.sigma_w() * sys.sigma_w() * lift * lift.transpose());
  return r;
}

struct QEstimate {
  Vector q;
  Matrix Q;
  double zeta = 0.0;           // eigenvalue floor applied; 0 before projection
  double min_rel_pivot = 0.0;  // min |R_kk| / max |R_kk| of the pivoted QR
};

/// Relative pivot threshold below which the LSTDQ operator is treated as singular.
inline constexpr double kSingularityThreshold = 1e-10;

inline QEstimate lstdq_solve(const RegressionBundle& b, double threshold = kSingularityThreshold) {
  const Eigen::Index d = b.features();
  Matrix op = b.phi.transpose() * (b.phi - b.psi_next);
  op.noalias() += (b.phi.transpose() * Vector::Ones(b.samples())) * b.f.transpose();
  const Vector rhs = b.phi.transpose() * b.c_hat;

  Eigen::ColPivHouseholderQR<Matrix> qr(op);
  const auto diag = qr.matrixQR().diagonal().cwiseAbs();
  QEstimate est;
  const double largest = d ? diag.maxCoeff() : 0.0;
  est.min_rel_pivot = largest > 0.0 ? diag.minCoeff() / largest : 0.0;
  if (!(est.min_rel_pivot > threshold))
    throw SingularRegressionError("LSTDQ operator is singular (relative pivot " +
                                  std::to_string(est.min_rel_pivot) +
                                  "); increase the trajectory length or the exploration noise");
  est.q = qr.solve(rhs);
  est.Q = smat(est.q);
  return est;
}

/// Frobenius-nearest matrix in { M : M ⪰ ζ I }.
inline Matrix psd_project(const Matrix& q, double zeta) {
  if (zeta < 0.0) throw ValidationError("eigenvalue floor must be non-negative");
  Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(q));
  const Vector clamped = es.eigenvalues().cwiseMax(zeta);
  return symmetrize(es.eigenvectors() * clamped.asDiagonal() * es.eigenvectors().transpose());
}

inline QEstimate psd_project(const QEstimate& est, double zeta) {
  QEstimate out = est;
  out.Q = psd_project(est.Q, zeta);
  out.q = svec(out.Q);
  out.zeta = zeta;
  return out;
}

/// Two-column CSV: diagnostics first, then q_1..q_d.
inline void write_qestimate_csv(std::ostream& os, const QEstimate& est) {
  os << "name,value\n" << std::setprecision(17);
  os << "zeta," << est.zeta << "\n";
  os << "min_rel_pivot," << est.min_rel_pivot << "\n";
  for (Eigen::Index k = 0; k < est.q.size(); ++k) os << "q_" << k + 1 << "," << est.q(k) << "\n";
}

}  // namespace malspi
