#pragma once

#include "malspi/common.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/KroneckerProduct>

#include <cmath>

namespace malspi {

inline Eigen::Index triangular_size(Eigen::Index n) { return n * (n + 1) / 2; }

/// Symmetric vectorisation: diagonal entries as-is, strict upper triangle
/// scaled by √2, row-major over the upper triangle. ⟨svec(A), svec(B)⟩ equals
/// the Frobenius inner product of A and B.
inline Vector svec(const Matrix& m) {
  if (m.rows() != m.cols()) throw ValidationError("svec needs a square matrix");
  const Eigen::Index n = m.rows();
  Vector v(triangular_size(n));
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    v(k++) = m(r, r);
    for (Eigen::Index c = r + 1; c < n; ++c) v(k++) = M_SQRT2 * 0.5 * (m(r, c) + m(c, r));
  }
  return v;
}

/// svec of z zᵀ without forming the outer product.
inline void svec_outer(const Eigen::Ref<const Vector>& z, Eigen::Ref<Vector> out) {
  const Eigen::Index n = z.size();
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    out(k++) = z(r) * z(r);
    const double scaled = M_SQRT2 * z(r);
    for (Eigen::Index c = r + 1; c < n; ++c) out(k++) = scaled * z(c);
  }
}

inline Eigen::Index side_from_triangular(Eigen::Index len) {
  const auto n = static_cast<Eigen::Index>(std::llround((std::sqrt(8.0 * double(len) + 1.0) - 1.0) / 2.0));
  if (n < 0 || triangular_size(n) != len)
    throw ValidationError("vector length " + std::to_string(len) + " is not a triangular number");
  return n;
}

inline Matrix smat(const Vector& v) {
  const Eigen::Index n = side_from_triangular(v.size());
  Matrix m(n, n);
  Eigen::Index k = 0;
  for (Eigen::Index r = 0; r < n; ++r) {
    m(r, r) = v(k++);
    for (Eigen::Index c = r + 1; c < n; ++c) {
      m(r, c) = m(c, r) = v(k++) * M_SQRT1_2;
    }
  }
  return m;
}

inline Matrix symmetrize(const Matrix& m) { return 0.5 * (m + m.transpose()); }

inline double spectral_radius(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::EigenSolver<Matrix> es(x, /*computeEigenvectors=*/false);
  return es.eigenvalues().cwiseAbs().maxCoeff();
}

inline double spectral_norm(const Matrix& x) {
  if (x.size() == 0) return 0.0;
  Eigen::JacobiSVD<Matrix> svd(x);
  return svd.singularValues()(0);
}

/// Solves P = X P Xᵀ + Y for Schur-stable X.
///
/// Small problems go through the Kronecker system (I − X⊗X) vec P = vec Y.
/// Above `kKroneckerLimit` states the squared system no longer fits
/// comfortably in memory and the Smith doubling iteration is used instead.
inline Matrix lyapunov_solve(const Matrix& x, const Matrix& y) {
  constexpr Eigen::Index kKroneckerLimit = 40;
  if (x.rows() != x.cols() || y.rows() != x.rows() || y.cols() != x.cols())
    throw ValidationError("lyapunov_solve: dimension mismatch");
  const double rho = spectral_radius(x);
  if (rho >= 1.0) throw InstabilityError("Lyapunov equation has no solution", rho);
  const Eigen::Index n = x.rows();
  if (n == 0) return Matrix(0, 0);
  const Matrix ys = symmetrize(y);
  if (n <= kKroneckerLimit) {
    const Matrix lhs = Matrix::Identity(n * n, n * n) - Eigen::kroneckerProduct(x, x).eval();
    const Vector rhs = Eigen::Map<const Vector>(ys.data(), n * n);
    const Vector p = lhs.partialPivLu().solve(rhs);
    return symmetrize(Eigen::Map<const Matrix>(p.data(), n, n));
  }
  Matrix p = ys;
  Matrix xk = x;
  for (int it = 0; it < 64; ++it) {
    const Matrix step = xk * p * xk.transpose();
    p += step;
    xk = xk * xk;
    if (step.norm() <= 1e-15 * p.norm()) break;
  }
  return symmetrize(p);
}

/// Empirical (τ, ρ) certificate: ρ is the spectral radius and
/// τ = max_{k ≤ horizon} ‖X^k‖₂ / ρ^k.
struct StabilityReport {
  double rho = 0.0;
  double tau = 1.0;
};

inline StabilityReport stability_report(const Matrix& x, int horizon = 200) {
  StabilityReport r;
  r.rho = spectral_radius(x);
  if (x.size() == 0) return r;
  Matrix power = Matrix::Identity(x.rows(), x.cols());
  double tau = 1.0;
  for (int k = 1; k <= horizon; ++k) {
    power = power * x;
    const double norm = spectral_norm(power);
    if (norm == 0.0) break;
    // Nilpotent part with ρ = 0: report the largest power norm.
    const double scale = r.rho > 0.0 ? std::pow(r.rho, k) : 1.0;
    tau = std::max(tau, norm / scale);
    if (!std::isfinite(tau)) break;
  }
  r.tau = tau;
  return r;
}

/// Selects rows/cols of `m` given by `idx`.
inline Matrix submatrix(const Matrix& m, const std::vector<Eigen::Index>& rows,
                        const std::vector<Eigen::Index>& cols) {
  return m(rows, cols);
}

}  // namespace malspi
