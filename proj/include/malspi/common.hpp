#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace malspi {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Agents are 0-based internally. Anything user-facing (JSON, CSV, CLI)
/// uses 1-based ids.
using Agent = int;

/// Sorted ascending, duplicate-free list of agents. Every block layout in the
/// library follows this order.
using AgentSet = std::vector<Agent>;

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ValidationError : public Error {
 public:
  using Error::Error;
};

/// Raised when a matrix that must be Schur stable is not.
class InstabilityError : public Error {
 public:
  InstabilityError(const std::string& what, double spectral_radius)
      : Error(what + " (spectral radius " + std::to_string(spectral_radius) + ")"),
        spectral_radius_(spectral_radius) {}
  double spectral_radius() const noexcept { return spectral_radius_; }

 private:
  double spectral_radius_;
};

/// LSTDQ operator is singular or too ill-conditioned to trust.
class SingularRegressionError : public Error {
 public:
  using Error::Error;
};

/// Trajectory shorter than the number of regression features.
class UnderdeterminedError : public SingularRegressionError {
 public:
  UnderdeterminedError(std::size_t have, std::size_t need)
      : SingularRegressionError("trajectory of length " + std::to_string(have) +
                                " is shorter than the " + std::to_string(need) +
                                " regression features; use T >= " + std::to_string(need)),
        required_(need) {}
  std::size_t required_length() const noexcept { return required_; }

 private:
  std::size_t required_;
};

inline bool contains(const AgentSet& set, Agent a) {
  return std::binary_search(set.begin(), set.end(), a);
}

inline AgentSet full_set(int n_agents) {
  AgentSet all(static_cast<std::size_t>(n_agents));
  for (int i = 0; i < n_agents; ++i) all[static_cast<std::size_t>(i)] = i;
  return all;
}

/// Scalar coordinate indices of `set` when each agent owns `block` coordinates.
inline std::vector<Eigen::Index> coordinates(const AgentSet& set, int block) {
  std::vector<Eigen::Index> idx;
  idx.reserve(set.size() * static_cast<std::size_t>(block));
  for (Agent a : set)
    for (int k = 0; k < block; ++k) idx.push_back(static_cast<Eigen::Index>(a) * block + k);
  return idx;
}

/// Position of each member of `inner` inside `outer` (both sorted). Throws if
/// `inner` is not a subset.
inline std::vector<Eigen::Index> positions_in(const AgentSet& inner, const AgentSet& outer) {
  std::vector<Eigen::Index> pos;
  pos.reserve(inner.size());
  for (Agent a : inner) {
    auto it = std::lower_bound(outer.begin(), outer.end(), a);
    if (it == outer.end() || *it != a)
      throw ValidationError("agent " + std::to_string(a + 1) + " is not in the enclosing set");
    pos.push_back(static_cast<Eigen::Index>(it - outer.begin()));
  }
  return pos;
}

/// Scalar coordinates of `inner` inside the coordinate layout of `outer`.
inline std::vector<Eigen::Index> local_coordinates(const AgentSet& inner, const AgentSet& outer,
                                                   int block) {
  std::vector<Eigen::Index> idx;
  idx.reserve(inner.size() * static_cast<std::size_t>(block));
  for (Eigen::Index p : positions_in(inner, outer))
    for (int k = 0; k < block; ++k) idx.push_back(p * block + k);
  return idx;
}

inline std::string format_set(const AgentSet& set) {
  std::string s = "{";
  for (std::size_t k = 0; k < set.size(); ++k) {
    if (k) s += ",";
    s += std::to_string(set[k] + 1);
  }
  return s + "}";
}

}  // namespace malspi
