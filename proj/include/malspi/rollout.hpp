#pragma once

#include "malspi/system.hpp"

#include <limits>
#include <ostream>
#include <random>

namespace malspi {

/// Independent, reproducible random streams derived from a base seed.
inline std::mt19937_64 make_rng(std::uint64_t seed, std::uint64_t stream = 0, std::uint64_t substream = 0) {
  std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                    static_cast<std::uint32_t>(stream), static_cast<std::uint32_t>(stream >> 32),
                    static_cast<std::uint32_t>(substream), static_cast<std::uint32_t>(substream >> 32)};
  return std::mt19937_64(seq);
}

inline Vector standard_normal(std::mt19937_64& rng, Eigen::Index n) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Vector v(n);
  for (Eigen::Index k = 0; k < n; ++k) v(k) = gauss(rng);
  return v;
}

/// Distribution of x(0).
struct InitialState {
  Vector mean;        // empty means zero
  Matrix covariance;  // empty means zero

  Vector sample(std::mt19937_64& rng, Eigen::Index dim) const {
    Vector x = mean.size() ? mean : Vector::Zero(dim);
    if (x.size() != dim) throw ValidationError("initial state mean has the wrong dimension");
    // Draw unconditionally so the noise sequence does not depend on Σ0.
    const Vector e = standard_normal(rng, dim);
    if (covariance.size()) {
      if (covariance.rows() != dim || covariance.cols() != dim)
        throw ValidationError("initial state covariance has the wrong dimension");
      Eigen::SelfAdjointEigenSolver<Matrix> es(symmetrize(covariance));
      const Vector root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
      x += es.eigenvectors() * root.asDiagonal() * es.eigenvectors().transpose() * e;
    }
    return x;
  }
};

/// One rollout. Row t of `x` is x(t) for t = 0..T; row t of `u` is u(t) for
/// t = 0..T-1, so the transition samples are (x.row(t), u.row(t), x.row(t+1)).
struct TrajectoryBatch {
  Matrix x;  // (T+1) × N n_x
  Matrix u;  // T × N n_u
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  double sigma_eta = 0.0;
  Matrix play_gain;

  Eigen::Index length() const noexcept { return u.rows(); }
};

/// u(t) = K_play x(t) + η(t), x(t+1) = A x(t) + B u(t) + w(t).
/// Per step the exploration draw precedes the process-noise draw.
inline TrajectoryBatch rollout(const MultiAgentSystem& sys, const StructuredPolicy& play, Eigen::Index T,
                               double sigma_eta, const InitialState& init, std::uint64_t seed,
                               std::uint64_t stream = 0) {
  if (T < 1) throw ValidationError("rollout length must be at least 1");
  if (play.K().rows() != sys.control_dim() || play.K().cols() != sys.state_dim())
    throw ValidationError("play policy does not match the system dimensions");
  auto rng = make_rng(seed, stream);
  TrajectoryBatch batch;
  batch.seed = seed;
  batch.stream = stream;
  batch.sigma_eta = sigma_eta;
  batch.play_gain = play.K();
  batch.x.resize(T + 1, sys.state_dim());
  batch.u.resize(T, sys.control_dim());
  Vector x = init.sample(rng, sys.state_dim());
  batch.x.row(0) = x.transpose();
  const double sw = sys.sigma_w();
  for (Eigen::Index t = 0; t < T; ++t) {
    const Vector u = play.K() * x + sigma_eta * standard_normal(rng, sys.control_dim());
    const Vector w = sw * standard_normal(rng, sys.state_dim());
    x = sys.A() * x + sys.B() * u + w;
    batch.u.row(t) = u.transpose();
    batch.x.row(t + 1) = x.transpose();
  }
  return batch;
}

/// CSV with columns t, x_1..x_{N n_x}, u_1..u_{N n_u}; the final row carries
/// x(T) with empty control columns.
inline void write_trajectory_csv(std::ostream& os, const TrajectoryBatch& batch) {
  os << "t";
  for (Eigen::Index k = 0; k < batch.x.cols(); ++k) os << ",x_" << k + 1;
  for (Eigen::Index k = 0; k < batch.u.cols(); ++k) os << ",u_" << k + 1;
  os << "\n";
  os.precision(17);
  for (Eigen::Index t = 0; t < batch.x.rows(); ++t) {
    os << t;
    for (Eigen::Index k = 0; k < batch.x.cols(); ++k) os << "," << batch.x(t, k);
    for (Eigen::Index k = 0; k < batch.u.cols(); ++k) {
      os << ",";
      if (t < batch.u.rows()) os << batch.u(t, k);
    }
    os << "\n";
  }
}

struct CostEstimate {
  double value = std::numeric_limits<double>::infinity();
  bool diverged = true;
  double spectral_radius = 0.0;
};

/// (1/T)·Σ_t x(t)ᵀ S x(t) + u(t)ᵀ R u(t) under u = Kx with process noise
/// only, using the averaged global cost. Unstable closed loops are flagged
/// rather than simulated.
inline CostEstimate average_cost(const MultiAgentSystem& sys, const StructuredPolicy& policy, Eigen::Index T_eval,
                                 std::uint64_t seed, const InitialState& init = {}, std::uint64_t stream = 0) {
  CostEstimate out;
  const Matrix closed = sys.A() + sys.B() * policy.K();
  out.spectral_radius = spectral_radius(closed);
  if (out.spectral_radius >= 1.0 || T_eval < 1) return out;
  auto rng = make_rng(seed, stream);
  Vector x = init.sample(rng, sys.state_dim());
  const Matrix cost_x = sys.S() + policy.K().transpose() * sys.R() * policy.K();
  double total = 0.0;
  for (Eigen::Index t = 0; t < T_eval; ++t) {
    total += x.dot(cost_x * x);
    x = closed * x + sys.sigma_w() * standard_normal(rng, sys.state_dim());
  }
  out.value = total / double(T_eval);
  out.diverged = !std::isfinite(out.value);
  return out;
}

}  // namespace malspi
