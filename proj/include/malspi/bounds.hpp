#pragma once

// Sample-complexity calculators for the LSTDQ evaluation step.
//
// All bounds hide an unidentified absolute constant (polylogarithmic in T/δ
// and the problem norms). It is exposed as `constant` and defaults to 1, so
// the numbers are only meaningful relative to each other.

#include "malspi/system.hpp"

#include <cmath>

namespace malspi {

struct BoundInputs {
  double n_x = 0;  // state dimension of the evaluated set
  double n_u = 0;  // control dimension of the evaluated set
  double tau = 1.0;
  double rho = 0.5;
  double sigma_w = 1.0;
  double sigma_eta = 1.0;
  double norm_A = 0.0;
  double norm_B = 0.0;
  double norm_K = 0.0;       // ‖K_set‖; the bound uses max(1, ·)
  double norm_K_play = 0.0;  // ‖K_play,set‖
  double norm_Sigma0 = 0.0;
  double norm_P_inf = 0.0;
  double norm_Q = 0.0;  // ‖Q_true‖_F
  double epsilon = 0.0;  // target accuracy; ≤ 0 disables the ε form
  double constant = 1.0;

  void validate() const {
    if (!(n_x > 0) || !(n_u >= 0)) throw ValidationError("bound dimensions must be positive");
    if (!(rho > 0.0 && rho < 1.0)) throw ValidationError("rho must lie in (0, 1)");
    if (!(tau >= 1.0)) throw ValidationError("tau must be at least 1");
    if (!(sigma_eta > 0.0)) throw ValidationError("sigma_eta must be positive");
    if (sigma_eta > sigma_w) throw ValidationError("the bounds require sigma_eta <= sigma_w");
    if (!(constant > 0.0)) throw ValidationError("bound constant must be positive");
    for (double v : {norm_A, norm_B, norm_K, norm_K_play, norm_Sigma0, norm_P_inf, norm_Q})
      if (!(v >= 0.0)) throw ValidationError("norms must be non-negative");
  }

  double sigma_bar() const {
    return std::sqrt(tau * tau * std::pow(rho, 4) * norm_Sigma0 + norm_P_inf + sigma_w * sigma_w +
                     sigma_eta * sigma_eta * norm_B * norm_B);
  }

  /// ‖K_play‖₊² σ_w σ̄ τ² ‖K‖₊⁴ (‖A‖² + ‖B‖²) / (ρ² (1 − ρ²)), common to every form.
  double shape_factor() const {
    const double kp = std::max(1.0, norm_K_play), k = std::max(1.0, norm_K);
    return kp * kp * sigma_w * sigma_bar() * tau * tau * std::pow(k, 4) * (norm_A * norm_A + norm_B * norm_B) /
           (rho * rho * (1.0 - rho * rho));
  }
};

struct SampleBound {
  double T_min = 0.0;
  double error_coefficient = 0.0;  // ‖q_true − q̂‖ ≤ error_coefficient / √T
  std::optional<double> T_epsilon;  // samples for error ≤ ε
  double sigma_bar = 0.0;
  std::vector<double> weights;  // indirect only

  double error_at(double T) const {
    if (!(T > 0.0)) throw ValidationError("T must be positive");
    return error_coefficient / std::sqrt(T);
  }
};

namespace detail {

struct SingleBound {
  double T_min, coefficient, shape;
};

inline SingleBound single_bound(const BoundInputs& in) {
  in.validate();
  const double n = in.n_x + in.n_u;
  const double w = in.shape_factor();
  const double s4 = std::pow(in.sigma_eta, 4);
  SingleBound b{};
  b.shape = w;
  b.T_min = in.constant * std::max(n * n, in.n_x * in.n_x * n * n * w * w / s4);
  b.coefficient = in.constant * n * w * in.norm_Q / (in.sigma_eta * in.sigma_eta);
  return b;
}

/// Samples for error ≤ ε on one member carrying weight `weight` of the budget.
inline double epsilon_samples(const BoundInputs& in, double shape, double weight, double epsilon) {
  const double n = in.n_x + in.n_u;
  const double s4 = std::pow(in.sigma_eta, 4);
  const double accuracy = in.constant * in.constant * shape * shape * n * n * n * in.norm_Q * in.norm_Q /
                          (s4 * weight * weight * epsilon * epsilon);
  const double burn_in = in.constant * shape * shape * in.n_x * in.n_x * n * n / s4;
  return std::max(accuracy, burn_in);
}

}  // namespace detail

/// Single regression on one set (direct, undecomposed or centralized scope).
inline SampleBound sample_bound_direct(const BoundInputs& in) {
  const auto b = detail::single_bound(in);
  SampleBound out;
  out.T_min = b.T_min;
  out.error_coefficient = b.coefficient;
  out.sigma_bar = in.sigma_bar();
  if (in.epsilon > 0.0) out.T_epsilon = detail::epsilon_samples(in, b.shape, 1.0, in.epsilon);
  return out;
}

/// One regression per j ∈ I^i_GD on I^j_Q. The ε budget is split by
/// `weights` (default ∝ ‖Q_j‖_F), which must sum to one.
inline SampleBound sample_bound_indirect(const std::vector<BoundInputs>& members, std::vector<double> weights = {}) {
  if (members.empty()) throw ValidationError("indirect bound needs at least one member");
  if (weights.empty()) {
    double total = 0.0;
    for (const auto& m : members) total += m.norm_Q;
    for (const auto& m : members)
      weights.push_back(total > 0.0 ? m.norm_Q / total : 1.0 / double(members.size()));
  }
  if (weights.size() != members.size()) throw ValidationError("one weight per member is required");
  double sum = 0.0;
  for (double w : weights) {
    if (!(w > 0.0)) throw ValidationError("weights must be positive");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ValidationError("weights must sum to 1, got " + std::to_string(sum));

  SampleBound out;
  out.weights = weights;
  const double eps = members.front().epsilon;
  if (eps > 0.0) out.T_epsilon = 0.0;
  for (std::size_t k = 0; k < members.size(); ++k) {
    const auto b = detail::single_bound(members[k]);
    out.T_min = std::max(out.T_min, b.T_min);
    out.error_coefficient += b.coefficient;
    out.sigma_bar = std::max(out.sigma_bar, members[k].sigma_bar());
    if (eps > 0.0)
      out.T_epsilon = std::max(*out.T_epsilon, detail::epsilon_samples(members[k], b.shape, weights[k], eps));
  }
  return out;
}

/// Fills the norms and certificates for evaluating `policy` on `index_set`
/// with the summed cost of `cost_owners`.
inline BoundInputs bound_inputs(const MultiAgentSystem& sys, const StructuredPolicy& policy,
                                const StructuredPolicy& play, const AgentSet& index_set,
                                const AgentSet& cost_owners, double sigma_eta, double norm_sigma0 = 0.0,
                                double epsilon = 0.0, double constant = 1.0) {
  const Subsystem sub = extract_subsystem(sys, policy, index_set, cost_owners);
  const Matrix k_play = play.K()(coordinates(index_set, sys.n_u()), coordinates(index_set, sys.n_x()));
  const auto eval = stability_report(sub.A + sub.B * sub.K);
  const auto data = stability_report(sub.A + sub.B * k_play);
  if (eval.rho >= 1.0) throw InstabilityError("evaluated policy does not stabilise the subsystem", eval.rho);
  if (data.rho >= 1.0) throw InstabilityError("play policy does not stabilise the subsystem", data.rho);
  BoundInputs in;
  in.n_x = double(sub.state_dim());
  in.n_u = double(sub.control_dim());
  in.tau = std::max(eval.tau, data.tau);
  // Clamp away from 0 so nilpotent closed loops still give a finite bound.
  in.rho = std::max({eval.rho, data.rho, 1e-3});
  in.sigma_w = sys.sigma_w();
  in.sigma_eta = sigma_eta;
  in.norm_A = spectral_norm(sub.A);
  in.norm_B = spectral_norm(sub.B);
  in.norm_K = spectral_norm(sub.K);
  in.norm_K_play = spectral_norm(k_play);
  in.norm_Sigma0 = norm_sigma0;
  const Matrix noise = sys.sigma_w() * sys.sigma_w() * Matrix::Identity(sub.state_dim(), sub.state_dim()) +
                       sigma_eta * sigma_eta * sub.B * sub.B.transpose();
  in.norm_P_inf = spectral_norm(lyapunov_solve(sub.A + sub.B * sub.K, noise));
  in.norm_Q = true_q_matrix(sub).norm();
  in.epsilon = epsilon;
  in.constant = constant;
  return in;
}

}  // namespace malspi
