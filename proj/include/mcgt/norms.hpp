#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <vector>

#include "mcgt/common.hpp"
#include "mcgt/topology.hpp"

namespace mcgt {

namespace detail {

inline void require_rows_match(const Matrix& A, const Vector& w,
                               const char* what) {
  if (A.rows() != w.size())
    throw ValidationError(std::string(what) + ": weight length " +
                          std::to_string(w.size()) + " does not match " +
                          std::to_string(A.rows()) + " rows");
}

// Largest singular value by power iteration on the Gram operator
// z -> X^T (X z). Deterministic start, relative tolerance 1e-12.
inline double power_sigma_max(const Matrix& X) {
  constexpr double kRelTol = 1e-12;
  constexpr long kMaxIter = 1'000'000;
  const int n = static_cast<int>(X.cols());
  if (n == 0 || X.rows() == 0) return 0.0;
  Rng rng(0x5eed5u);
  Vector z(n);
  for (int i = 0; i < n; ++i) z[i] = 1.0 + uniform01(rng);
  z.normalize();
  double sigma = 0.0;
  for (long it = 0; it < kMaxIter; ++it) {
    Vector Xz = X * z;
    const double next = Xz.norm();
    if (next == 0.0) return 0.0;
    Vector g = X.transpose() * Xz;
    const double gn = g.norm();
    if (gn == 0.0) return next;  // z is a null direction of the Gram operator
    z = g / gn;
    const bool settled = std::abs(next - sigma) <= kRelTol * std::max(1.0, next);
    sigma = next;
    if (settled && it > 0) return sigma;
  }
  throw NumericalError("spectral norm: power iteration did not converge");
}

}  // namespace detail

/// u-weighted Frobenius norm: || diag(sqrt(u)) A ||_F.
inline double frobenius_norm_u(const Matrix& A, const Vector& u) {
  detail::require_rows_match(A, u, "frobenius_norm_u");
  double s = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    s += u[i] * A.row(i).squaredNorm();
  return std::sqrt(s);
}

/// v-weighted Frobenius norm: || diag(sqrt(v))^{-1} A ||_F.
inline double frobenius_norm_v(const Matrix& A, const Vector& v) {
  detail::require_rows_match(A, v, "frobenius_norm_v");
  double s = 0.0;
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    s += A.row(i).squaredNorm() / v[i];
  return std::sqrt(s);
}

/// Plain spectral norm (largest singular value).
inline double spectral_norm(const Matrix& X) {
  return detail::power_sigma_max(X);
}

/// u-weighted spectral norm of a square X:
/// || diag(sqrt(u)) X diag(sqrt(u))^{-1} ||_2.
inline double spectral_norm_u(const Matrix& X, const Vector& u) {
  if (X.rows() != X.cols())
    throw ValidationError("spectral_norm_u: matrix must be square");
  detail::require_rows_match(X, u, "spectral_norm_u");
  const Vector s = u.array().sqrt();
  Matrix W = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) W(i, j) *= s[i] / s[j];
  return detail::power_sigma_max(W);
}

/// v-weighted spectral norm of a square X:
/// || diag(sqrt(v))^{-1} X diag(sqrt(v)) ||_2.
inline double spectral_norm_v(const Matrix& X, const Vector& v) {
  if (X.rows() != X.cols())
    throw ValidationError("spectral_norm_v: matrix must be square");
  detail::require_rows_match(X, v, "spectral_norm_v");
  const Vector s = v.array().sqrt();
  Matrix W = X;
  for (Eigen::Index i = 0; i < X.rows(); ++i)
    for (Eigen::Index j = 0; j < X.cols(); ++j) W(i, j) *= s[j] / s[i];
  return detail::power_sigma_max(W);
}

/// Contraction factor of the row-stochastic mixing step in the u-weighted
/// Frobenius norm: the u-weighted spectral norm of R - 1 u^T. Must be < 1
/// for a valid strongly connected topology with positive diagonal.
inline double contraction_factor_row(const Matrix& R, const Vector& u) {
  const Matrix residual =
      R - Vector::Ones(R.rows()) * u.transpose();
  const double sigma = spectral_norm_u(residual, u);
  if (sigma >= 1.0)
    throw ValidationError(
        "contraction_factor_row: factor >= 1; R/u are not a valid "
        "row-stochastic matrix with its left eigenvector");
  return sigma;
}

/// Contraction factor of a column-stochastic mixing step in the v-weighted
/// Frobenius norm: the v-weighted spectral norm of C - v 1^T.
inline double contraction_factor_col(const Matrix& C, const Vector& v) {
  const Matrix residual =
      C - v * RowVector::Ones(C.cols());
  const double sigma = spectral_norm_v(residual, v);
  if (sigma >= 1.0)
    throw ValidationError(
        "contraction_factor_col: factor >= 1; C/v are not a valid "
        "column-stochastic matrix with its right eigenvector");
  return sigma;
}

/// Tight constants relating the weighted Frobenius norms to the plain one:
///   |||A|||_F^u  <= delta_u_frob * |||A|||_F      (delta_u_frob = max_i sqrt(u_i))
///   |||A|||_F    <= delta_frob_u * |||A|||_F^u    (delta_frob_u = max_i 1/sqrt(u_i))
///   |||A|||_F^v  <= delta_v_frob * |||A|||_F      (delta_v_frob = max_{h,i} 1/sqrt(v_i))
///   |||A|||_F    <= delta_frob_v * |||A|||_F^v    (delta_frob_v = max_{h,i} sqrt(v_i))
struct EquivalenceConstants {
  double delta_u_frob;
  double delta_frob_u;
  double delta_v_frob;
  double delta_frob_v;
};

inline EquivalenceConstants equivalence_constants(
    const Vector& u, const std::vector<Vector>& v) {
  if (u.size() == 0 || u.minCoeff() <= 0)
    throw ValidationError("equivalence_constants: u must be positive");
  EquivalenceConstants e{};
  e.delta_u_frob = std::sqrt(u.maxCoeff());
  e.delta_frob_u = 1.0 / std::sqrt(u.minCoeff());
  double vmax = 0.0, vmin = std::numeric_limits<double>::infinity();
  for (const Vector& vh : v) {
    if (vh.size() == 0 || vh.minCoeff() <= 0)
      throw ValidationError("equivalence_constants: v must be positive");
    vmax = std::max(vmax, vh.maxCoeff());
    vmin = std::min(vmin, vh.minCoeff());
  }
  if (v.empty())
    throw ValidationError("equivalence_constants: no cluster weights");
  e.delta_v_frob = 1.0 / std::sqrt(vmin);
  e.delta_frob_v = std::sqrt(vmax);
  return e;
}

}  // namespace mcgt
