#pragma once

#include <Eigen/Dense>
#include <array>
#include <cmath>
#include <complex>
#include <optional>
#include <vector>

#include "mcgt/common.hpp"
#include "mcgt/game.hpp"
#include "mcgt/norms.hpp"
#include "mcgt/solver.hpp"
#include "mcgt/topology.hpp"

namespace mcgt {

/// Every scalar constant feeding the 3x3 bound matrix, computed from the
/// topology, the mixing weights, and the game's regularity constants.
struct ConstantsLedger {
  double sigma_R = 0.0;   // row-mixing contraction factor (u-weighted)
  double sigma_C = 0.0;   // worst column-mixing contraction factor over clusters
  double sigma_2 = 0.0;   // || R - 1 u^T ||_2
  double sigma_I = 0.0;   // max_h || I - v^h 1^T ||_F
  double delta_u_frob = 0.0;
  double delta_frob_u = 0.0;
  double delta_v_frob = 0.0;
  double delta_frob_v = 0.0;
  double L = 0.0;      // uniform gradient Lipschitz constant
  double L_v = 0.0;    // L * max_{i,h} v_i^h
  double mu = 0.0;     // strong monotonicity constant of the game mapping
  double eta_min = 0.0;  // min_h (v^h . u^h) / n_h, u^h = u restricted to cluster h
  int cluster_count = 0;
  double norm_one_uT = 0.0;     // || 1 u^T ||_2
  double norm_R_minus_I = 0.0;  // || R - I ||_2
};

inline ConstantsLedger assemble_constants(const Game& game,
                                          const ClusterTopology& topo,
                                          const WeightPair& w) {
  ConstantsLedger c;
  const int n = topo.agent_count();
  c.cluster_count = topo.cluster_count();
  c.sigma_R = contraction_factor_row(w.R, w.u);
  for (int h = 0; h < c.cluster_count; ++h)
    c.sigma_C = std::max(c.sigma_C, contraction_factor_col(w.C[h], w.v[h]));
  c.sigma_2 = spectral_norm(w.R - Vector::Ones(n) * w.u.transpose());
  double vmax = 0.0;
  for (int h = 0; h < c.cluster_count; ++h) {
    const int nh = topo.partition().sizes[h];
    const Matrix residual =
        Matrix::Identity(nh, nh) - w.v[h] * RowVector::Ones(nh);
    c.sigma_I = std::max(c.sigma_I, residual.norm());
    vmax = std::max(vmax, w.v[h].maxCoeff());
  }
  const EquivalenceConstants eq = equivalence_constants(w.u, w.v);
  c.delta_u_frob = eq.delta_u_frob;
  c.delta_frob_u = eq.delta_frob_u;
  c.delta_v_frob = eq.delta_v_frob;
  c.delta_frob_v = eq.delta_frob_v;
  c.L = lipschitz_constant(game);
  c.mu = monotonicity_constant(game);
  if (c.mu <= 0)
    throw ValidationError(
        "ledger: game mapping is not strongly monotone (mu = " +
        std::to_string(c.mu) + ")");
  c.L_v = c.L * vmax;
  c.eta_min = std::numeric_limits<double>::infinity();
  for (int h = 0; h < c.cluster_count; ++h) {
    const int off = topo.partition().offsets[h];
    const int nh = topo.partition().sizes[h];
    const double eta = w.v[h].dot(w.u.segment(off, nh)) / nh;
    c.eta_min = std::min(c.eta_min, eta);
  }
  if (!(c.eta_min > 0))
    throw ValidationError("ledger: eta lower bound is not positive");
  // rank-one matrix: the spectral norm is exactly ||1|| * ||u||
  c.norm_one_uT = std::sqrt(static_cast<double>(n)) * w.u.norm();
  c.norm_R_minus_I = spectral_norm(w.R - Matrix::Identity(n, n));
  return c;
}

/// Largest eigenvalue modulus of a 3x3 matrix via its characteristic cubic.
/// The cubic is solved in closed form (trigonometric for three real roots,
/// Cardano otherwise) and each root is polished by Newton steps.
inline double spectral_radius_3x3(const Eigen::Matrix3d& A) {
  const double scale = A.cwiseAbs().maxCoeff();
  if (scale == 0.0) return 0.0;
  const Eigen::Matrix3d S = A / scale;

  const double c2 = S.trace();
  const double c1 = (S(0, 0) * S(1, 1) - S(0, 1) * S(1, 0)) +
                    (S(0, 0) * S(2, 2) - S(0, 2) * S(2, 0)) +
                    (S(1, 1) * S(2, 2) - S(1, 2) * S(2, 1));
  const double c0 = S.determinant();
  // characteristic polynomial: l^3 - c2 l^2 + c1 l - c0
  const double p = c1 - c2 * c2 / 3.0;
  const double q = -2.0 * c2 * c2 * c2 / 27.0 + c2 * c1 / 3.0 - c0;

  std::array<std::complex<double>, 3> roots;
  constexpr double kTiny = 1e-300;
  if (std::abs(p) < 1e-14 && std::abs(q) < 1e-14) {
    roots.fill(0.0);
  } else {
    const double disc = -4.0 * p * p * p - 27.0 * q * q;
    if (disc >= 0.0 && p < 0.0) {
      const double m = 2.0 * std::sqrt(-p / 3.0);
      const double arg =
          std::clamp(3.0 * q / (p * m), -1.0, 1.0);
      const double theta = std::acos(arg) / 3.0;
      for (int k = 0; k < 3; ++k)
        roots[k] = m * std::cos(theta - 2.0 * M_PI * k / 3.0);
    } else {
      const double s = std::sqrt(std::max(0.0, q * q / 4.0 + p * p * p / 27.0));
      const double w = (q <= 0.0) ? (-q / 2.0 + s) : (-q / 2.0 - s);
      const double cr = std::cbrt(w);
      const double t1 = (std::abs(cr) < kTiny) ? 0.0 : cr - p / (3.0 * cr);
      const double quad_disc = 3.0 * t1 * t1 + 4.0 * p;
      roots[0] = t1;
      if (quad_disc >= 0.0) {
        const double im = std::sqrt(quad_disc) / 2.0;
        roots[1] = std::complex<double>(-t1 / 2.0, im);
        roots[2] = std::complex<double>(-t1 / 2.0, -im);
      } else {
        const double re = std::sqrt(-quad_disc) / 2.0;
        roots[1] = -t1 / 2.0 + re;
        roots[2] = -t1 / 2.0 - re;
      }
    }
  }

  const auto poly = [&](std::complex<double> l) {
    return ((l - c2) * l + c1) * l - c0;
  };
  const auto dpoly = [&](std::complex<double> l) {
    return (3.0 * l - 2.0 * c2) * l + c1;
  };
  double rho = 0.0;
  for (auto t : roots) {
    std::complex<double> l = t + c2 / 3.0;
    for (int it = 0; it < 3; ++it) {
      const auto d = dpoly(l);
      if (std::abs(d) < kTiny) break;
      l -= poly(l) / d;
    }
    rho = std::max(rho, std::abs(l));
  }
  return rho * scale;
}

/// The 3x3 bound matrix of the linear inequality system that drives the
/// three error norms (optimality gap, consensus residual, tracking
/// dispersion), assembled for one step size.
struct BoundMatrix {
  double alpha = 0.0;
  Eigen::Matrix3d A = Eigen::Matrix3d::Zero();
  double phi = 0.0;
  double rho = 0.0;
};

inline double phi_radicand(const ConstantsLedger& c, double alpha) {
  const double lw = c.L_v * c.norm_one_uT;
  return 1.0 - 2.0 * alpha * c.eta_min * c.mu + alpha * alpha * lw * lw;
}

inline BoundMatrix bound_matrix(const ConstantsLedger& c, double alpha) {
  const double rad = phi_radicand(c, alpha);
  if (rad < 0)
    throw ValidationError("bound matrix: negative radicand at alpha = " +
                          std::to_string(alpha));
  BoundMatrix bm;
  bm.alpha = alpha;
  bm.phi = std::sqrt(rad);
  const double sqrtH = std::sqrt(static_cast<double>(c.cluster_count));
  const double a12 = c.delta_frob_u * c.L_v * c.norm_one_uT;
  const double a13 = c.norm_one_uT * c.delta_frob_v;
  const double a21 = c.delta_u_frob * c.sigma_2 * sqrtH * c.L_v;
  const double a22 = c.delta_u_frob * c.sigma_2 * sqrtH * c.delta_frob_u * c.L_v;
  const double a23 = c.delta_u_frob * c.delta_frob_v * c.sigma_2;
  const double a31 = c.delta_v_frob * c.sigma_I * c.L * c.cluster_count * c.L_v;
  const double a32 =
      c.delta_v_frob * c.sigma_I * c.delta_frob_u * c.L * sqrtH * c.norm_R_minus_I;
  const double a32p =
      c.delta_v_frob * c.sigma_I * c.L * c.cluster_count * c.delta_frob_u * c.L_v;
  const double a33 = c.delta_v_frob * c.sigma_I * c.L * sqrtH * c.delta_frob_v;
  bm.A << bm.phi, alpha * a12, alpha * a13,
      alpha * a21, c.sigma_R + alpha * a22, alpha * a23,
      alpha * a31, a32 + alpha * a32p, c.sigma_C + alpha * a33;
  bm.rho = spectral_radius_3x3(bm.A);
  return bm;
}

struct StepSizeCertificate {
  double alpha = 0.0;
  double rho = 0.0;
};

inline std::vector<double> default_alpha_grid(int points = 64,
                                              double lo = 1e-6,
                                              double hi = 1.0) {
  std::vector<double> grid(points);
  const double llo = std::log10(lo), lhi = std::log10(hi);
  for (int i = 0; i < points; ++i)
    grid[i] = std::pow(10.0, llo + (lhi - llo) * i / (points - 1));
  return grid;
}

/// Largest grid step size whose bound matrix has spectral radius strictly
/// below one. The grid is scanned exhaustively; the radius need not be
/// unimodal in alpha. An empty result is valid: the bound is sufficient
/// only, and an uncertified step size may still converge in practice.
inline std::optional<StepSizeCertificate> certify_stepsize(
    const ConstantsLedger& c, const std::vector<double>& alpha_grid) {
  std::optional<StepSizeCertificate> best;
  for (double alpha : alpha_grid) {
    if (alpha < 0 || phi_radicand(c, alpha) < 0) continue;
    const BoundMatrix bm = bound_matrix(c, alpha);
    if (bm.rho < 1.0 - 1e-9)
      if (!best || alpha > best->alpha) best = StepSizeCertificate{alpha, bm.rho};
  }
  return best;
}

/// Elementwise check of v(k+1) <= A v(k) + tol along a stride-1 trace
/// recorded with a reference solution.
struct TrajectoryCheck {
  bool ok = true;
  long first_violation_k = -1;
  double max_excess = 0.0;  // largest lhs - rhs over all steps/components
  long steps_checked = 0;
};

inline TrajectoryCheck check_trajectory_bound(const IterateTrace& trace,
                                              const BoundMatrix& bm,
                                              double tol) {
  if (trace.size() < 2)
    throw ValidationError("trajectory check: need at least two trace rows");
  for (std::size_t i = 0; i < trace.size(); ++i) {
    if (!std::isfinite(trace[i].e_opt))
      throw ValidationError(
          "trajectory check: trace must be recorded with a reference solution");
    if (i > 0 && trace[i].k != trace[i - 1].k + 1)
      throw ValidationError("trajectory check: trace must have stride 1");
  }
  TrajectoryCheck out;
  for (std::size_t i = 0; i + 1 < trace.size(); ++i) {
    const Eigen::Vector3d v(trace[i].e_opt, trace[i].e_cons, trace[i].e_track);
    const Eigen::Vector3d v_next(trace[i + 1].e_opt, trace[i + 1].e_cons,
                                 trace[i + 1].e_track);
    const Eigen::Vector3d bound = bm.A * v;
    for (int j = 0; j < 3; ++j) {
      const double excess = v_next[j] - bound[j] - tol;
      if (excess > out.max_excess) out.max_excess = excess;
      if (excess > 0 && out.ok) {
        out.ok = false;
        out.first_violation_k = trace[i + 1].k;
      }
    }
    ++out.steps_checked;
  }
  return out;
}

/// Margins (rhs - lhs) of the four supporting inequalities behind the bound
/// matrix, evaluated on full state snapshots. Nonnegative margins mean the
/// inequality held at that snapshot.
struct AppendixCheck {
  std::vector<std::array<double, 4>> margins;  // one entry per snapshot
  std::array<double, 4> min_margin{};
  bool all_hold(double tol = 0.0) const {
    for (double m : min_margin)
      if (m < -tol) return false;
    return true;
  }
};

inline AppendixCheck check_appendix_inequalities(
    const std::vector<SolverState>& states, const Game& game,
    const WeightPair& w, const ConstantsLedger& c, const Vector& x_star,
    double alpha) {
  AppendixCheck out;
  out.min_margin.fill(std::numeric_limits<double>::infinity());
  const int n = game.agent_count();
  const int q = game.decision_dim();
  const int H = game.cluster_count();
  const Vector ones = Vector::Ones(n);
  const double phi = std::sqrt(phi_radicand(c, alpha));
  const double sqrtH = std::sqrt(static_cast<double>(H));

  for (const SolverState& s : states) {
    const RowVector x_mean = w.u.transpose() * s.x;
    Matrix lambda_gbar = Matrix::Zero(n, q);
    Matrix lambda_y = Matrix::Zero(n, q);
    Matrix Y = Matrix::Zero(n, q);
    double track_weighted = 0.0;  // sum_h |||y^h - v^h ybar^h|||_F^{v^h}
    double track_plain = 0.0;     // sum_h ||y^h - v^h ybar^h||_F
    for (int h = 0; h < H; ++h) {
      const int off_a = game.agents().offsets[h];
      const int nh = game.agents().sizes[h];
      const int off_q = game.layout().offset(h);
      const int qh = game.layout().dim(h);
      const RowVector y_mean = s.y[h].colwise().sum() / nh;
      const RowVector g_mean =
          cluster_gradient(game, h, x_mean.transpose()).transpose() / nh;
      lambda_gbar.block(off_a, off_q, nh, qh) = w.v[h] * g_mean;
      lambda_y.block(off_a, off_q, nh, qh) = w.v[h] * y_mean;
      Y.block(off_a, off_q, nh, qh) = s.y[h];
      const Matrix disp = s.y[h] - w.v[h] * y_mean;
      track_weighted += frobenius_norm_v(disp, w.v[h]);
      track_plain += disp.norm();
    }
    const Matrix opt_gap = ones * (x_mean - x_star.transpose());
    const double e_opt = opt_gap.norm();
    const double e_cons =
        frobenius_norm_u(s.x - ones * x_mean, w.u);

    std::array<double, 4> m{};
    m[0] = phi * e_opt -
           (opt_gap - alpha * ones * (w.u.transpose() * lambda_gbar)).norm();
    m[1] = alpha * c.delta_frob_u * c.L_v * c.norm_one_uT * e_cons -
           (alpha * ones * (w.u.transpose() * (lambda_gbar - lambda_y))).norm();
    m[2] = alpha * c.norm_one_uT * c.delta_frob_v * track_weighted -
           (alpha * ones * (w.u.transpose() * (lambda_y - Y))).norm();
    m[3] = track_plain + sqrtH * c.delta_frob_u * c.L_v * e_cons +
           sqrtH * c.L_v * e_opt - Y.norm();
    for (int j = 0; j < 4; ++j)
      out.min_margin[j] = std::min(out.min_margin[j], m[j]);
    out.margins.push_back(m);
  }
  return out;
}

}  // namespace mcgt
