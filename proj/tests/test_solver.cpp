#include <catch2/catch_amalgamated.hpp>

#include <sstream>

#include "mcgt/oracle.hpp"
#include "mcgt/solver.hpp"
#include "support/test_support.hpp"

using namespace mcgt;
using Catch::Matchers::WithinAbs;
using testsup::make_cournot_fixture;
using testsup::random_matrix;
using testsup::trivial_weights;

TEST_CASE("initialization seeds tracking with local gradients") {
  SECTION("scalar quadratic at x0 = 3 starts tracking at 6") {
    const testsup::ScalarQuadGame game;
    Matrix x0(1, 1);
    x0 << 3.0;
    const SolverState s = init_state(game, x0);
    REQUIRE_THAT(s.y[0](0, 0), WithinAbs(6.0, 1e-15));
    REQUIRE(s.k == 0);
  }
  SECTION("tracking identity holds exactly at k = 0") {
    const auto f = make_cournot_fixture({4, 3, 3}, 11);
    const Matrix x0 = random_matrix(10, 10, 21, 0.0, 1.0);
    const SolverState s = init_state(*f.game, x0);
    REQUIRE(tracking_identity_residual(s, *f.game) <= 1e-15);
  }
  SECTION("tracking rows match finite-difference gradients") {
    const auto f = make_cournot_fixture({2, 2}, 12);
    const Matrix x0 = random_matrix(4, 4, 22, 0.0, 1.0);
    const SolverState s = init_state(*f.game, x0);
    for (int h = 0; h < 2; ++h)
      for (int r = 0; r < 2; ++r) {
        const int agent = f.game->agents().offsets[h] + r;
        const Vector fd = testsup::own_block_gradient_fd(
            *f.game, agent, x0.row(agent).transpose());
        REQUIRE((s.y[h].row(r).transpose() - fd).lpNorm<Eigen::Infinity>() <=
                1e-6 * (1.0 + fd.lpNorm<Eigen::Infinity>()));
      }
  }
  SECTION("shape mismatch is rejected") {
    const testsup::ScalarQuadGame game;
    REQUIRE_THROWS_AS(init_state(game, Matrix::Zero(2, 1)), ValidationError);
  }
}

TEST_CASE("scalar instance follows the geometric recursion") {
  const testsup::ScalarQuadGame game;
  const WeightPair w = trivial_weights();
  Matrix x0(1, 1);
  x0 << 1.0;
  SolverState s = init_state(game, x0);
  s = step(s, game, w, 0.1);
  REQUIRE_THAT(s.x(0, 0), WithinAbs(0.8, 1e-15));
  // x(k+1) = (1 - 2 alpha) x(k) all the way down
  double expect = 0.8;
  for (int k = 1; k < 20; ++k) {
    s = step(s, game, w, 0.1);
    expect *= 0.8;
    REQUIRE_THAT(s.x(0, 0), WithinAbs(expect, 1e-14));
  }
}

TEST_CASE("zero step size is pure consensus") {
  const auto f = make_cournot_fixture({3, 2}, 13);
  const Matrix x0 = random_matrix(5, 5, 23, 0.0, 1.0);
  SolverConfig cfg;
  cfg.alpha = 0.0;
  cfg.max_iter = 4000;
  const RunResult res = run(*f.game, f.weights, cfg, x0);
  const RowVector limit = f.weights.u.transpose() * x0;
  for (int i = 0; i < 5; ++i)
    REQUIRE((res.state.x.row(i) - limit).lpNorm<Eigen::Infinity>() <= 1e-12);
  // consensus residual decayed geometrically to the floor
  REQUIRE(res.trace.back().raw_consensus <= 1e-12);
}

TEST_CASE("tracking identity is preserved along a run") {
  const auto f = make_cournot_fixture({4, 3, 3}, 14);
  const Matrix x0 = random_matrix(10, 10, 24, 0.0, 1.0);
  double worst = 0.0;
  const StepObserver obs = [&](const SolverState& s) {
    worst = std::max(worst, tracking_identity_residual(s, *f.game));
  };
  SolverConfig cfg;
  cfg.alpha = 0.08;
  cfg.max_iter = 500;
  run(*f.game, f.weights, cfg, x0, nullptr, obs);
  REQUIRE(worst <= 1e-9);
}

TEST_CASE("symmetric cournot run converges to the closed form") {
  std::vector<Digraph> clusters;
  for (int h = 0; h < 3; ++h) clusters.push_back(Digraph(1, {}));
  ClusterTopology topo(complete_digraph(3), std::move(clusters),
                       DecisionLayout::from_dims({1, 1, 1}));
  const WeightPair w = WeightPair::build(topo);
  const QuadraticCournotGame game(AgentPartition::from_sizes({1, 1, 1}),
                                  Vector::Ones(3), Vector::Zero(3),
                                  Vector::Zero(3), 10.0);
  SolverConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_iter = 2000;
  const Matrix x0 = random_matrix(3, 3, 25, 0.0, 1.0);
  const RunResult res = run(game, w, cfg, x0);
  const double star = 10.0 / 6.0;
  REQUIRE((res.state.x.array() - star).abs().maxCoeff() <= 1e-6);
}

TEST_CASE("single cluster converges to the centralized minimizer") {
  const auto f = make_cournot_fixture({5}, 15, 30.0, 8);
  // independent normal-equations oracle: the total-cost Hessian is
  // diag(2a) + 2 * ones, the stationarity right-hand side P_c - b
  const int n = 5;
  Matrix Hess = 2.0 * Matrix::Ones(n, n);
  Hess += (2.0 * f.game->a()).asDiagonal();
  const Vector rhs = Vector::Constant(n, 30.0) - f.game->b();
  const Vector minimizer = Hess.fullPivLu().solve(rhs);

  SolverConfig cfg;
  cfg.alpha = 0.04;
  cfg.max_iter = 20000;
  cfg.consensus_tol = 1e-13;
  cfg.gradient_tol = 1e-12;
  const Matrix x0 = random_matrix(5, 5, 26, 0.0, 1.0);
  const RunResult res = run(*f.game, f.weights, cfg, x0);
  for (int i = 0; i < 5; ++i)
    REQUIRE((res.state.x.row(i).transpose() - minimizer).norm() <= 1e-8);
}

TEST_CASE("metrics") {
  const auto f = make_cournot_fixture({2, 2}, 16);
  SECTION("exact consensus has zero consensus residual") {
    const RowVector c = RowVector::Constant(4, 1.5);
    const SolverState s = init_state(*f.game, Vector::Ones(4) * c);
    const TraceRow row = metrics(s, *f.game, f.weights);
    REQUIRE_THAT(row.e_cons, WithinAbs(0.0, 1e-12));
    REQUIRE_THAT(row.raw_consensus, WithinAbs(0.0, 1e-15));
  }
  SECTION("at the equilibrium the optimality gap vanishes") {
    const ReferenceSolution ref = solve_quadratic_ne(*f.game);
    const SolverState s =
        init_state(*f.game, Vector::Ones(4) * ref.x_star.transpose());
    const TraceRow row = metrics(s, *f.game, f.weights, &ref.x_star);
    REQUIRE_THAT(row.e_opt, WithinAbs(0.0, 1e-10));
    REQUIRE(row.e_track >= 0.0);  // only gradient dispersion remains
    REQUIRE_THAT(row.mapping_norm, WithinAbs(0.0, 1e-10));
  }
  SECTION("mid-run values match an independent recomputation") {
    SolverState s = init_state(*f.game, random_matrix(4, 4, 27, 0.0, 1.0));
    for (int k = 0; k < 7; ++k) s = step(s, *f.game, f.weights, 0.05);
    const ReferenceSolution ref = solve_quadratic_ne(*f.game);
    const TraceRow row = metrics(s, *f.game, f.weights, &ref.x_star);

    const RowVector xbar = f.weights.u.transpose() * s.x;
    double e_opt = 0.0;
    for (int i = 0; i < 4; ++i)
      e_opt += (xbar.transpose() - ref.x_star).squaredNorm();
    REQUIRE_THAT(row.e_opt, WithinAbs(std::sqrt(e_opt), 1e-12));

    double e_cons_sq = 0.0;
    for (int i = 0; i < 4; ++i)
      e_cons_sq += f.weights.u[i] * (s.x.row(i) - xbar).squaredNorm();
    REQUIRE_THAT(row.e_cons, WithinAbs(std::sqrt(e_cons_sq), 1e-12));

    double e_track = 0.0;
    for (int h = 0; h < 2; ++h) {
      const RowVector ybar = s.y[h].colwise().mean();
      double acc = 0.0;
      for (int r = 0; r < 2; ++r)
        acc += (s.y[h].row(r) - f.weights.v[h][r] * ybar).squaredNorm() /
               f.weights.v[h][r];
      e_track += std::sqrt(acc);
    }
    REQUIRE_THAT(row.e_track, WithinAbs(e_track, 1e-12));

    double raw = 0.0;
    for (int i = 0; i < 4; ++i)
      raw = std::max(raw, (s.x.row(i) - s.x.row(0)).lpNorm<Eigen::Infinity>());
    REQUIRE_THAT(row.raw_consensus, WithinAbs(raw, 1e-15));
  }
}

TEST_CASE("matrix update agrees with the agent-wise loop") {
  const auto f = make_cournot_fixture({4, 3, 3}, 17);
  SolverState a = init_state(*f.game, random_matrix(10, 10, 28, 0.0, 1.0));
  SolverState b = a;
  for (int k = 0; k < 25; ++k) {
    a = step(a, *f.game, f.weights, 0.07);
    b = testsup::step_agentwise(b, *f.game, f.weights, 0.07);
    REQUIRE((a.x - b.x).lpNorm<Eigen::Infinity>() <= 1e-12);
    for (int h = 0; h < 3; ++h)
      REQUIRE((a.y[h] - b.y[h]).lpNorm<Eigen::Infinity>() <= 1e-12);
  }
}

TEST_CASE("uneven decision layout runs and tracks correctly") {
  // 2 agents owning a 3-dim block plus 1 agent owning a 2-dim block:
  // exercises decision offsets that differ from agent offsets
  const testsup::UnevenQuadGame game;
  std::vector<Digraph> clusters{complete_digraph(2), Digraph(1, {})};
  ClusterTopology topo(complete_digraph(3), std::move(clusters),
                       DecisionLayout::from_dims({3, 2}));
  const WeightPair w = WeightPair::build(topo);
  SolverConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_iter = 4000;
  const Matrix x0 = random_matrix(3, 5, 29, -0.5, 0.5);
  double worst = 0.0;
  const StepObserver obs = [&](const SolverState& s) {
    worst = std::max(worst, tracking_identity_residual(s, game));
  };
  const RunResult res = run(game, w, cfg, x0, nullptr, obs);
  REQUIRE(worst <= 1e-9);
  const ReferenceSolution ref = solve_quadratic_ne(game);
  for (int i = 0; i < 3; ++i)
    REQUIRE((res.state.x.row(i).transpose() - ref.x_star).norm() <= 1e-7);
}

TEST_CASE("permuting agents inside a cluster permutes the iterates") {
  const std::vector<int> sizes{3, 2};
  const auto f = make_cournot_fixture(sizes, 18, 25.0, 6);
  // swap agents 0 and 2 (both in cluster 0) together with their coordinates
  std::vector<int> perm{2, 1, 0, 3, 4};

  auto permute_graph = [&](const Digraph& g, const std::vector<int>& p) {
    std::vector<Edge> edges;
    for (const auto& [from, to] : g.edges())
      edges.emplace_back(p[from], p[to]);
    return Digraph(g.node_count(), std::move(edges));
  };
  std::vector<Digraph> clusters{
      permute_graph(f.topology->cluster_graph(0), {2, 1, 0}),
      f.topology->cluster_graph(1)};
  ClusterTopology topo_p(permute_graph(f.topology->global(), perm),
                         std::move(clusters),
                         DecisionLayout::from_dims(sizes));
  const WeightPair w_p = WeightPair::build(topo_p);
  const int n = 5;
  Vector a(n), b(n), c(n);
  for (int i = 0; i < n; ++i) {
    a[perm[i]] = f.game->a()[i];
    b[perm[i]] = f.game->b()[i];
    c[perm[i]] = f.game->c()[i];
  }
  const QuadraticCournotGame game_p(AgentPartition::from_sizes(sizes), a, b, c,
                                    f.game->price_constant());

  const Matrix x0 = random_matrix(5, 5, 30, 0.0, 1.0);
  Matrix x0_p(5, 5);
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < n; ++d) x0_p(perm[i], perm[d]) = x0(i, d);

  SolverState s = init_state(*f.game, x0);
  SolverState sp = init_state(game_p, x0_p);
  for (int k = 0; k < 60; ++k) {
    s = step(s, *f.game, f.weights, 0.06);
    sp = step(sp, game_p, w_p, 0.06);
  }
  for (int i = 0; i < n; ++i)
    for (int d = 0; d < n; ++d)
      REQUIRE_THAT(sp.x(perm[i], perm[d]), WithinAbs(s.x(i, d), 1e-9));

  // the consensus limit is unchanged up to the coordinate relabeling
  SolverConfig cfg;
  cfg.alpha = 0.06;
  cfg.max_iter = 6000;
  const RunResult r1 = run(*f.game, f.weights, cfg, x0);
  const RunResult r2 = run(game_p, w_p, cfg, x0_p);
  for (int d = 0; d < n; ++d)
    REQUIRE_THAT(r2.state.x(0, perm[d]), WithinAbs(r1.state.x(0, d), 1e-9));
}

TEST_CASE("divergence is detected and reported at a finite iterate") {
  const auto f = make_cournot_fixture({4, 3, 3}, 19);
  SolverConfig cfg;
  cfg.alpha = 100.0;  // way beyond any stable step size
  cfg.max_iter = 10000;
  const RunResult res = run(*f.game, f.weights, cfg, random_matrix(10, 10, 31, 0.0, 1.0));
  REQUIRE(res.status == RunStatus::diverged);
  REQUIRE(res.iterations < 10000);
  REQUIRE(state_is_finite(res.state));
  REQUIRE(std::isfinite(res.trace.back().e_cons));
}

TEST_CASE("run records the requested stride plus the final iterate") {
  const auto f = make_cournot_fixture({2, 2}, 20);
  SolverConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_iter = 10;
  cfg.record_every = 3;
  const RunResult res = run(*f.game, f.weights, cfg, random_matrix(4, 4, 32, 0.0, 1.0));
  std::vector<long> ks;
  for (const auto& row : res.trace) ks.push_back(row.k);
  REQUIRE(ks == std::vector<long>{0, 3, 6, 9, 10});
}

TEST_CASE("stopping thresholds end the run with converged status") {
  const auto f = make_cournot_fixture({3, 2}, 21);
  SolverConfig cfg;
  cfg.alpha = 0.05;
  cfg.max_iter = 100000;
  cfg.consensus_tol = 1e-10;
  cfg.gradient_tol = 1e-9;
  const RunResult res = run(*f.game, f.weights, cfg, random_matrix(5, 5, 33, 0.0, 1.0));
  REQUIRE(res.status == RunStatus::converged);
  REQUIRE(res.trace.back().raw_consensus <= 1e-10);
  REQUIRE(res.trace.back().mapping_norm <= 1e-9);
  REQUIRE(res.iterations < 100000);
}

TEST_CASE("checkpoint round trip preserves the state") {
  const auto f = make_cournot_fixture({4, 3, 3}, 22);
  SolverState s = init_state(*f.game, random_matrix(10, 10, 34, 0.0, 1.0));
  for (int k = 0; k < 5; ++k) s = step(s, *f.game, f.weights, 0.05);
  std::stringstream ss;
  save_state(ss, s);
  const SolverState back = load_state(ss);
  REQUIRE(back.k == s.k);
  REQUIRE((back.x - s.x).lpNorm<Eigen::Infinity>() == 0.0);
  for (int h = 0; h < 3; ++h) {
    REQUIRE((back.y[h] - s.y[h]).lpNorm<Eigen::Infinity>() == 0.0);
    REQUIRE((back.g_prev[h] - s.g_prev[h]).lpNorm<Eigen::Infinity>() == 0.0);
  }
  // resuming from the checkpoint reproduces the original run
  SolverState cont = step(back, *f.game, f.weights, 0.05);
  SolverState direct = step(s, *f.game, f.weights, 0.05);
  REQUIRE((cont.x - direct.x).lpNorm<Eigen::Infinity>() == 0.0);

  std::stringstream bad("mcgt-state 2\n");
  REQUIRE_THROWS_AS(load_state(bad), ValidationError);
}
