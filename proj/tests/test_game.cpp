#include <catch2/catch_amalgamated.hpp>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "mcgt/game.hpp"
#include "support/test_support.hpp"

using namespace mcgt;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;
using testsup::random_vector;

namespace {

QuadraticCournotGame symmetric3() {
  return QuadraticCournotGame(AgentPartition::from_sizes({1, 1, 1}),
                              Vector::Ones(3), Vector::Zero(3),
                              Vector::Zero(3), 10.0);
}

QuadraticCournotGame heterogeneous10(std::uint64_t seed) {
  detail::Rng rng(seed);
  const int n = 10;
  Vector a(n), b(n), c(n);
  for (int i = 0; i < n; ++i) {
    a[i] = detail::uniform_in(rng, 1.0, 2.0);
    b[i] = detail::uniform_in(rng, 0.0, 2.0);
    c[i] = detail::uniform_in(rng, 0.0, 1.0);
  }
  return QuadraticCournotGame(AgentPartition::from_sizes({4, 3, 3}), a, b, c,
                              50.0);
}

}  // namespace

TEST_CASE("cournot construction rejects bad coefficients") {
  REQUIRE_THROWS_AS(
      QuadraticCournotGame(AgentPartition::from_sizes({2}), Vector::Zero(2),
                           Vector::Zero(2), Vector::Zero(2), 10.0),
      ValidationError);
  REQUIRE_THROWS_AS(
      QuadraticCournotGame(AgentPartition::from_sizes({2}), Vector::Ones(2),
                           Vector::Zero(2), Vector::Zero(2), -1.0),
      ValidationError);
  REQUIRE_THROWS_AS(
      QuadraticCournotGame(AgentPartition::from_sizes({2}), Vector::Ones(3),
                           Vector::Zero(3), Vector::Zero(3), 10.0),
      ValidationError);
}

TEST_CASE("cournot cost") {
  const auto game = heterogeneous10(1);
  SECTION("at zero production only the fixed cost remains") {
    const Vector zero = Vector::Zero(10);
    for (int i = 0; i < 10; ++i)
      REQUIRE_THAT(game.cost(i, zero), WithinAbs(game.c()[i], 1e-15));
  }
  SECTION("hand value on the symmetric instance") {
    // production cost 1, revenue 1 * (10 - 3) = 7
    const auto sym = symmetric3();
    REQUIRE_THAT(sym.cost(0, Vector::Ones(3)), WithinAbs(-6.0, 1e-15));
    // independent composition of the two published pieces
    REQUIRE_THAT(sym.production_cost(0, 1.0) - 1.0 * sym.price(Vector::Ones(3)),
                 WithinAbs(-6.0, 1e-15));
  }
  SECTION("own quadratic coefficient matches the finite-difference curvature") {
    for (int i : {0, 4, 9}) {
      // f restricted to x_i with everything else zero
      auto f = [&](double t) {
        Vector x = Vector::Zero(10);
        x[i] = t;
        return game.cost(i, x);
      };
      const double h = 1e-4;
      const double curvature = (f(h) - 2.0 * f(0.0) + f(-h)) / (h * h);
      REQUIRE_THAT(curvature, WithinRel(2.0 * (game.a()[i] + 1.0), 1e-6));
      // the production term alone scales by 4 when production doubles
      const double quad1 =
          game.production_cost(i, 1.0) - game.b()[i] - game.c()[i];
      const double quad2 =
          game.production_cost(i, 2.0) - 2.0 * game.b()[i] - game.c()[i];
      REQUIRE_THAT(quad2, WithinAbs(4.0 * quad1, 1e-12));
    }
  }
}

TEST_CASE("cournot own-block gradient") {
  SECTION("hand value on the symmetric instance") {
    const auto sym = symmetric3();
    const Vector g = sym.own_block_gradient(0, Vector::Ones(3));
    REQUIRE(g.size() == 1);
    REQUIRE_THAT(g[0], WithinAbs(-4.0, 1e-15));  // 2 + 0 - 10 + 3 + 1
  }
  SECTION("matches central finite differences, 50 points per agent") {
    const auto game = heterogeneous10(2);
    for (int i = 0; i < game.agent_count(); ++i) {
      for (std::uint64_t s = 0; s < 50; ++s) {
        const Vector x = random_vector(10, 5000 + 100 * i + s, -2.0, 4.0);
        const Vector g = game.own_block_gradient(i, x);
        const Vector g_fd = testsup::own_block_gradient_fd(game, i, x);
        REQUIRE((g - g_fd).lpNorm<Eigen::Infinity>() <=
                1e-6 * (1.0 + g.lpNorm<Eigen::Infinity>()));
      }
    }
  }
  SECTION("same-cluster off-diagonal component equals x_i") {
    const auto game = heterogeneous10(3);
    const Vector x = random_vector(10, 77, 0.0, 3.0);
    const Vector g = game.own_block_gradient(1, x);  // agent 1, cluster 0
    REQUIRE(g.size() == 4);
    for (int d = 0; d < 4; ++d)
      if (d != 1) REQUIRE_THAT(g[d], WithinAbs(x[1], 1e-15));
  }
}

TEST_CASE("game mapping") {
  SECTION("vanishes at the symmetric closed-form equilibrium") {
    // x* = (P_c - b) / (2a + n + 1), uniform across agents
    const auto sym = symmetric3();
    const Vector x_star = Vector::Constant(3, 10.0 / 6.0);
    REQUIRE(game_mapping(sym, x_star).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
  SECTION("a single cluster reduces to the gradient of the social cost") {
    detail::Rng rng(4);
    Vector a(4), b(4), c(4);
    for (int i = 0; i < 4; ++i) {
      a[i] = detail::uniform_in(rng, 1.0, 2.0);
      b[i] = detail::uniform_in(rng, 0.0, 1.0);
      c[i] = detail::uniform_in(rng, 0.0, 1.0);
    }
    const QuadraticCournotGame game(AgentPartition::from_sizes({4}), a, b, c,
                                    20.0);
    for (std::uint64_t s = 0; s < 10; ++s) {
      const Vector x = random_vector(4, 1500 + s, -1.0, 3.0);
      const Vector m = game_mapping(game, x);
      // total-cost gradient by central differences
      Vector grad_fd(4);
      for (int d = 0; d < 4; ++d) {
        Vector xp = x, xm = x;
        xp[d] += 1e-6;
        xm[d] -= 1e-6;
        double fp = 0, fm = 0;
        for (int i = 0; i < 4; ++i) {
          fp += game.cost(i, xp);
          fm += game.cost(i, xm);
        }
        grad_fd[d] = (fp - fm) / 2e-6;
      }
      REQUIRE((m - grad_fd).lpNorm<Eigen::Infinity>() <=
              1e-5 * (1.0 + m.lpNorm<Eigen::Infinity>()));
    }
  }
  SECTION("affine form matches direct summation on 100 random points") {
    const auto game = heterogeneous10(5);
    const AffineMapping f = AffineMapping::from_game(game);
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Vector x = random_vector(10, 2000 + s, -3.0, 3.0);
      REQUIRE((f.evaluate(x) - game_mapping(game, x)).lpNorm<Eigen::Infinity>() <=
              1e-12 * (1.0 + f.evaluate(x).lpNorm<Eigen::Infinity>()));
    }
  }
  SECTION("mapping is affine: increments do not depend on the base point") {
    const auto game = heterogeneous10(6);
    const Vector dir = random_vector(10, 42, -1.0, 1.0);
    const Vector base_increment =
        game_mapping(game, dir) - game_mapping(game, Vector::Zero(10));
    for (std::uint64_t s = 0; s < 20; ++s) {
      const Vector x = random_vector(10, 2500 + s, -2.0, 2.0);
      const Vector inc = game_mapping(game, x + dir) - game_mapping(game, x);
      REQUIRE((inc - base_increment).lpNorm<Eigen::Infinity>() <= 1e-12);
    }
  }
}

TEST_CASE("cluster cost equals the sum of member costs") {
  const auto game = heterogeneous10(7);
  for (std::uint64_t s = 0; s < 10; ++s) {
    const Vector x = random_vector(10, 3000 + s, -1.0, 2.0);
    for (int h = 0; h < 3; ++h) {
      double direct = 0;
      for (int i = game.agents().offsets[h]; i < game.agents().offsets[h + 1];
           ++i)
        direct += game.cost(i, x);
      REQUIRE_THAT(cluster_cost(game, h, x), WithinAbs(direct, 1e-12));
    }
  }
}

TEST_CASE("monotonicity constant") {
  SECTION("symmetric single-agent-cluster instance: mu = 2a + 1") {
    const auto sym = symmetric3();
    const AffineMapping f = AffineMapping::from_game(sym);
    const Matrix expect = 3.0 * Matrix::Identity(3, 3) +
                          Matrix::Ones(3, 3);
    REQUIRE((f.B - expect).lpNorm<Eigen::Infinity>() <= 1e-12);
    // explicit eigendecomposition of the 3x3 symmetric part
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (expect + expect.transpose()));
    REQUIRE_THAT(monotonicity_constant(sym),
                 WithinAbs(es.eigenvalues().minCoeff(), 1e-12));
    REQUIRE_THAT(monotonicity_constant(sym), WithinAbs(3.0, 1e-12));
  }
  SECTION("scalar quadratic f = x^2 has mu = 2") {
    const testsup::ScalarQuadGame game;
    REQUIRE_THAT(monotonicity_constant(game), WithinAbs(2.0, 1e-12));
  }
  SECTION("strong monotonicity inequality on 100 random pairs") {
    const auto game = heterogeneous10(8);
    const double mu = monotonicity_constant(game);
    REQUIRE(mu > 0);
    for (std::uint64_t s = 0; s < 100; ++s) {
      const Vector x = random_vector(10, 4000 + s, -2.0, 2.0);
      const Vector y = random_vector(10, 4500 + s, -2.0, 2.0);
      const double lhs =
          (game_mapping(game, x) - game_mapping(game, y)).dot(x - y);
      REQUIRE(lhs >= mu * (x - y).squaredNorm() - 1e-9);
    }
  }
}

TEST_CASE("lipschitz constant") {
  SECTION("scalar quadratic f = x^2 has L = 2") {
    const testsup::ScalarQuadGame game;
    REQUIRE_THAT(lipschitz_constant(game), WithinAbs(2.0, 1e-12));
  }
  SECTION("bounds every agent's gradient increments on random pairs") {
    const auto game = heterogeneous10(9);
    const double L = lipschitz_constant(game);
    for (int i = 0; i < game.agent_count(); ++i) {
      for (std::uint64_t s = 0; s < 100; ++s) {
        const Vector x = random_vector(10, 6000 + 100 * i + s, -2.0, 2.0);
        const Vector y = random_vector(10, 7000 + 100 * i + s, -2.0, 2.0);
        const double num = (game.own_block_gradient(i, x) -
                            game.own_block_gradient(i, y))
                               .norm();
        REQUIRE(num <= L * (x - y).norm() + 1e-10);
      }
    }
  }
  SECTION("dominates every per-agent Jacobian norm") {
    const auto game = heterogeneous10(10);
    const double L = lipschitz_constant(game);
    const int q = game.decision_dim();
    for (int i = 0; i < game.agent_count(); ++i) {
      const Vector g0 = game.own_block_gradient(i, Vector::Zero(q));
      Matrix J(g0.size(), q);
      for (int j = 0; j < q; ++j) {
        Vector e = Vector::Zero(q);
        e[j] = 1.0;
        J.col(j) = game.own_block_gradient(i, e) - g0;
      }
      REQUIRE(L >= testsup::sigma_max_dense(J) - 1e-10);
    }
  }
}

TEST_CASE("general interface supports decision blocks wider than clusters") {
  const testsup::UnevenQuadGame game;
  REQUIRE(game.decision_dim() == 5);
  REQUIRE(game.agent_count() == 3);
  SECTION("gradients match finite differences") {
    for (int i = 0; i < 3; ++i)
      for (std::uint64_t s = 0; s < 10; ++s) {
        const Vector x = random_vector(5, 8000 + 10 * i + s, -1.5, 1.5);
        const Vector g = game.own_block_gradient(i, x);
        const Vector g_fd = testsup::own_block_gradient_fd(game, i, x);
        REQUIRE((g - g_fd).lpNorm<Eigen::Infinity>() <=
                1e-6 * (1.0 + g.lpNorm<Eigen::Infinity>()));
      }
  }
  SECTION("mapping is strongly monotone and affine") {
    REQUIRE(monotonicity_constant(game) > 0);
    REQUIRE_NOTHROW(AffineMapping::from_game(game));
  }
}

TEST_CASE("affine extraction rejects a non-quadratic game") {
  class CubicGame : public Game {
  public:
    CubicGame()
        : Game(AgentPartition::from_sizes({1}), DecisionLayout::from_dims({1})) {}
    double cost(int, const Vector& x) const override {
      return x[0] * x[0] * x[0];
    }
    Vector own_block_gradient(int, const Vector& x) const override {
      Vector g(1);
      g[0] = 3.0 * x[0] * x[0];
      return g;
    }
  };
  REQUIRE_THROWS_AS(AffineMapping::from_game(CubicGame()), ValidationError);
}
