#pragma once

#include <Eigen/Dense>
#include <memory>
#include <utility>
#include <vector>

#include "mcgt/common.hpp"
#include "mcgt/norms.hpp"
#include "mcgt/topology.hpp"

namespace mcgt {

/// A multi-cluster game: each agent carries a private convex cost over the
/// full decision vector x (length q) and exposes the gradient with respect
/// to its own cluster's decision block.
class Game {
public:
  Game(AgentPartition agents, DecisionLayout layout)
      : agents_(std::move(agents)), layout_(std::move(layout)) {
    if (layout_.block_count() != agents_.cluster_count())
      throw ValidationError("game: layout blocks != cluster count");
  }
  virtual ~Game() = default;

  const AgentPartition& agents() const { return agents_; }
  const DecisionLayout& layout() const { return layout_; }
  int agent_count() const { return agents_.total; }
  int cluster_count() const { return agents_.cluster_count(); }
  int cluster_of(int agent) const { return agents_.cluster_of(agent); }
  int decision_dim() const { return layout_.total; }

  virtual double cost(int agent, const Vector& x) const = 0;
  /// Gradient of the agent's cost with respect to its cluster's block,
  /// length q_h for the agent's cluster h.
  virtual Vector own_block_gradient(int agent, const Vector& x) const = 0;

private:
  AgentPartition agents_;
  DecisionLayout layout_;
};

/// Cluster cost F^h(x): sum of the member agents' costs.
inline double cluster_cost(const Game& game, int h, const Vector& x) {
  double s = 0.0;
  const auto& p = game.agents();
  for (int i = p.offsets[h]; i < p.offsets[h + 1]; ++i) s += game.cost(i, x);
  return s;
}

/// Cluster-summed own-block gradient g^h(x), length q_h.
inline Vector cluster_gradient(const Game& game, int h, const Vector& x) {
  Vector g = Vector::Zero(game.layout().dim(h));
  const auto& p = game.agents();
  for (int i = p.offsets[h]; i < p.offsets[h + 1]; ++i)
    g += game.own_block_gradient(i, x);
  return g;
}

/// The stacked game mapping M(x) = [g^1(x)^T, ..., g^H(x)^T]^T, length q.
/// Its zeros are exactly the points satisfying the social-welfare condition
/// in every cluster.
inline Vector game_mapping(const Game& game, const Vector& x) {
  if (x.size() != game.decision_dim())
    throw ValidationError("game_mapping: x has wrong length");
  Vector m(game.decision_dim());
  for (int h = 0; h < game.cluster_count(); ++h)
    m.segment(game.layout().offset(h), game.layout().dim(h)) =
        cluster_gradient(game, h, x);
  return m;
}

/// Affine form of the game mapping, M(x) = B x + d. Exact for games whose
/// agent costs are quadratic in x.
struct AffineMapping {
  Matrix B;
  Vector d;

  Vector evaluate(const Vector& x) const { return B * x + d; }

  /// Recovers B and d by probing M at 0 and at the unit vectors, then
  /// verifies affinity at one interior point (rejects non-quadratic games).
  static AffineMapping from_game(const Game& game) {
    const int q = game.decision_dim();
    AffineMapping f;
    f.d = game_mapping(game, Vector::Zero(q));
    f.B.resize(q, q);
    for (int j = 0; j < q; ++j) {
      Vector e = Vector::Zero(q);
      e[j] = 1.0;
      f.B.col(j) = game_mapping(game, e) - f.d;
    }
    Vector probe(q);
    for (int j = 0; j < q; ++j) probe[j] = 0.5 + 0.125 * (j % 7);
    const Vector direct = game_mapping(game, probe);
    const double scale = 1.0 + direct.lpNorm<Eigen::Infinity>();
    if ((f.evaluate(probe) - direct).lpNorm<Eigen::Infinity>() > 1e-9 * scale)
      throw ValidationError(
          "affine mapping: game mapping is not affine in x");
    return f;
  }
};

/// Strong monotonicity constant of an affine mapping: the smallest
/// eigenvalue of the symmetric part of B. Positive iff the game has a
/// unique equilibrium.
inline double monotonicity_constant(const AffineMapping& f) {
  const Matrix sym = 0.5 * (f.B + f.B.transpose());
  Eigen::SelfAdjointEigenSolver<Matrix> es(sym);
  return es.eigenvalues().minCoeff();
}

inline double monotonicity_constant(const Game& game) {
  return monotonicity_constant(AffineMapping::from_game(game));
}

/// Uniform Lipschitz constant of the own-block gradients with respect to
/// the full decision vector: the largest spectral norm among the agents'
/// (constant) gradient Jacobians. Exact for quadratic games.
inline double lipschitz_constant(const Game& game) {
  const int q = game.decision_dim();
  double L = 0.0;
  for (int i = 0; i < game.agent_count(); ++i) {
    const Vector g0 = game.own_block_gradient(i, Vector::Zero(q));
    Matrix J(g0.size(), q);
    for (int j = 0; j < q; ++j) {
      Vector e = Vector::Zero(q);
      e[j] = 1.0;
      J.col(j) = game.own_block_gradient(i, e) - g0;
    }
    L = std::max(L, spectral_norm(J));
  }
  return L;
}

/// Cournot oligopoly over n factories with scalar production levels.
/// Factory i pays C_i(x_i) = a_i x_i^2 + b_i x_i + c_i to produce x_i units
/// and sells at the shared price P(x) = P_c - sum_j x_j, giving the cost
/// f_i(x) = C_i(x_i) - x_i P(x). Factories are grouped into companies
/// (clusters), each company minimizing the sum over its factories; every
/// factory owns exactly one decision coordinate, so q_h = n_h.
class QuadraticCournotGame : public Game {
public:
  QuadraticCournotGame(AgentPartition agents, Vector a, Vector b, Vector c,
                       double price_constant)
      : Game(agents, DecisionLayout::from_dims(agents.sizes)),
        a_(std::move(a)),
        b_(std::move(b)),
        c_(std::move(c)),
        price_constant_(price_constant) {
    const int n = agent_count();
    if (a_.size() != n || b_.size() != n || c_.size() != n)
      throw ValidationError("cournot: coefficient vectors must have length n");
    if (a_.minCoeff() <= 0)
      throw ValidationError("cournot: every a_i must be positive");
    if (price_constant_ <= 0)
      throw ValidationError("cournot: price constant must be positive");
  }

  double price(const Vector& x) const { return price_constant_ - x.sum(); }
  double production_cost(int i, double xi) const {
    return a_[i] * xi * xi + b_[i] * xi + c_[i];
  }

  double cost(int i, const Vector& x) const override {
    return production_cost(i, x[i]) - x[i] * price(x);
  }

  Vector own_block_gradient(int i, const Vector& x) const override {
    const int h = cluster_of(i);
    const auto& p = agents();
    Vector g = Vector::Constant(p.sizes[h], x[i]);
    const int local = p.local_index(i);
    g[local] = 2.0 * a_[i] * x[i] + b_[i] - price_constant_ + x.sum() + x[i];
    return g;
  }

  const Vector& a() const { return a_; }
  const Vector& b() const { return b_; }
  const Vector& c() const { return c_; }
  double price_constant() const { return price_constant_; }

private:
  Vector a_, b_, c_;
  double price_constant_;
};

}  // namespace mcgt
