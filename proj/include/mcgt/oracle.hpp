#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>

#include "mcgt/common.hpp"
#include "mcgt/game.hpp"

namespace mcgt {

enum class SolutionMethod { linear_solve, centralized_iteration, closed_form };

inline const char* to_string(SolutionMethod m) {
  switch (m) {
    case SolutionMethod::linear_solve: return "linear-solve";
    case SolutionMethod::centralized_iteration: return "centralized-iteration";
    case SolutionMethod::closed_form: return "closed-form";
  }
  return "unknown";
}

struct ReferenceSolution {
  Vector x_star;
  double residual = 0.0;  // ||M(x*)||_2, recomputed by gradient summation
  SolutionMethod method = SolutionMethod::linear_solve;
};

/// Equilibrium of a quadratic game by solving B x = -d from the affine form
/// of the game mapping. Requires a strongly monotone mapping.
inline ReferenceSolution solve_quadratic_ne(const Game& game) {
  const AffineMapping f = AffineMapping::from_game(game);
  const double mu = monotonicity_constant(f);
  if (mu <= 0)
    throw ValidationError(
        "equilibrium: game mapping is not strongly monotone (mu = " +
        std::to_string(mu) + ")");
  Eigen::FullPivLU<Matrix> lu(f.B);
  if (!lu.isInvertible())
    throw ValidationError("equilibrium: singular mapping matrix");
  ReferenceSolution sol;
  sol.x_star = lu.solve(-f.d);
  sol.residual = game_mapping(game, sol.x_star).norm();
  sol.method = SolutionMethod::linear_solve;
  if (sol.residual > 1e-10)
    throw NumericalError("equilibrium: linear solve residual " +
                         std::to_string(sol.residual) + " exceeds 1e-10");
  return sol;
}

/// Independent cross-check: fixed-point iteration x <- x - tau M(x), which
/// contracts for strongly monotone Lipschitz mappings when
/// tau in (0, 2 mu / L_M^2). tau <= 0 selects the midpoint mu / L_M^2.
inline ReferenceSolution solve_ne_centralized(const Game& game, double tol,
                                              double tau = 0.0,
                                              Vector x0 = Vector(),
                                              long max_iter = 1'000'000) {
  const int q = game.decision_dim();
  if (tau <= 0.0) {
    const AffineMapping f = AffineMapping::from_game(game);
    const double mu = monotonicity_constant(f);
    if (mu <= 0)
      throw ValidationError(
          "equilibrium: game mapping is not strongly monotone");
    const double Lm = spectral_norm(f.B);
    tau = mu / (Lm * Lm);
  }
  Vector x = x0.size() == q ? x0 : Vector::Zero(q);
  for (long it = 0; it <= max_iter; ++it) {
    const Vector m = game_mapping(game, x);
    const double res = m.norm();
    if (res <= tol)
      return ReferenceSolution{x, res, SolutionMethod::centralized_iteration};
    x -= tau * m;
    if (!x.allFinite())
      throw NumericalError("equilibrium: centralized iteration diverged");
  }
  throw NumericalError(
      "equilibrium: centralized iteration exceeded its iteration cap");
}

/// Check of the three optimality conditions on a stacked estimate matrix
/// (one row per agent): consensus across rows, vanishing cluster-summed
/// gradients at the row mean, and the equilibrium condition, which for
/// convex cluster costs follows from the first two.
struct OptimalityReport {
  double tol = 0.0;
  bool consensus_ok = false;
  double consensus_residual = 0.0;  // max_{i,j} |x_i - x_j|_inf
  bool welfare_ok = false;
  Vector welfare_residuals;  // ||g^h(x_mean)||_2 per cluster
  bool nash_ok = false;
};

inline OptimalityReport verify_optimality(const Game& game,
                                          const Matrix& x_rows, double tol) {
  if (x_rows.rows() != game.agent_count() ||
      x_rows.cols() != game.decision_dim())
    throw ValidationError("verify_optimality: estimate matrix has wrong shape");
  OptimalityReport rep;
  rep.tol = tol;
  rep.consensus_residual =
      (x_rows.colwise().maxCoeff() - x_rows.colwise().minCoeff()).maxCoeff();
  rep.consensus_ok = rep.consensus_residual <= tol;
  const Vector x_mean = x_rows.colwise().mean().transpose();
  rep.welfare_residuals.resize(game.cluster_count());
  for (int h = 0; h < game.cluster_count(); ++h)
    rep.welfare_residuals[h] = cluster_gradient(game, h, x_mean).norm();
  rep.welfare_ok = rep.welfare_residuals.maxCoeff() <= tol;
  rep.nash_ok = rep.consensus_ok && rep.welfare_ok;
  return rep;
}

}  // namespace mcgt
