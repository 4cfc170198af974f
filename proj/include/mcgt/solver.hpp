#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <fstream>
#include <functional>
#include <istream>
#include <ostream>
#include <vector>

#include "mcgt/common.hpp"
#include "mcgt/game.hpp"
#include "mcgt/norms.hpp"
#include "mcgt/topology.hpp"

namespace mcgt {

struct SolverConfig {
  double alpha = 0.0;       // positive, constant step size
  long max_iter = 1000;
  double consensus_tol = 0.0;  // stop when raw consensus residual <= this
  double gradient_tol = 0.0;   // ... and ||M(x_mean)||_2 <= this
  long record_every = 1;
};

/// Full iterate of the gradient-tracking algorithm. Row i of x is agent i's
/// estimate of the whole decision vector; y[h] stacks the tracking variables
/// of cluster h's agents (one row per agent, q_h columns); g_prev[h] caches
/// the cluster's gradient matrix at the current iterate.
struct SolverState {
  Matrix x;
  std::vector<Matrix> y;
  std::vector<Matrix> g_prev;
  long k = 0;
};

inline bool state_is_finite(const SolverState& s) {
  if (!s.x.allFinite()) return false;
  for (const auto& yh : s.y)
    if (!yh.allFinite()) return false;
  return true;
}

// Entries this large overflow to inf as soon as a norm squares them; treat
// the iterate as diverged already.
inline bool state_is_usable(const SolverState& s) {
  if (!state_is_finite(s)) return false;
  constexpr double kLimit = 1e150;
  if (s.x.cwiseAbs().maxCoeff() > kLimit) return false;
  for (const auto& yh : s.y)
    if (yh.cwiseAbs().maxCoeff() > kLimit) return false;
  return true;
}

namespace detail {

inline Matrix cluster_gradients(const Game& game, int h, const Matrix& x) {
  const auto& p = game.agents();
  Matrix G(p.sizes[h], game.layout().dim(h));
  for (int r = 0; r < p.sizes[h]; ++r) {
    const int agent = p.offsets[h] + r;
    G.row(r) = game.own_block_gradient(agent, x.row(agent).transpose());
  }
  return G;
}

}  // namespace detail

/// Tracking variables start at the local gradients evaluated at each
/// agent's own initial estimate.
inline SolverState init_state(const Game& game, const Matrix& x0) {
  if (x0.rows() != game.agent_count() || x0.cols() != game.decision_dim())
    throw ValidationError("init_state: x0 must be agents x decision_dim");
  SolverState s;
  s.x = x0;
  s.y.reserve(game.cluster_count());
  for (int h = 0; h < game.cluster_count(); ++h)
    s.y.push_back(detail::cluster_gradients(game, h, x0));
  s.g_prev = s.y;
  s.k = 0;
  return s;
}

/// One synchronous iteration: estimates are mixed through R after each agent
/// descends along its padded tracking direction; tracking variables are
/// mixed through the cluster's C and corrected by the gradient increment.
inline SolverState step(const SolverState& s, const Game& game,
                        const WeightPair& w, double alpha) {
  const auto& p = game.agents();
  const auto& layout = game.layout();
  SolverState next;
  Matrix z = s.x;
  for (int h = 0; h < game.cluster_count(); ++h)
    z.block(p.offsets[h], layout.offset(h), p.sizes[h], layout.dim(h)) -=
        alpha * s.y[h];
  next.x = w.R * z;
  next.y.resize(s.y.size());
  next.g_prev.resize(s.y.size());
  for (int h = 0; h < game.cluster_count(); ++h) {
    Matrix g_new = detail::cluster_gradients(game, h, next.x);
    next.y[h] = w.C[h] * s.y[h] + g_new - s.g_prev[h];
    next.g_prev[h] = std::move(g_new);
  }
  next.k = s.k + 1;
  return next;
}

/// Residual of the tracking conservation law: for each cluster, the mean of
/// the tracking rows must equal the mean own-block gradient at the agents'
/// current estimates. Gradients are recomputed from scratch here.
inline double tracking_identity_residual(const SolverState& s,
                                         const Game& game) {
  double worst = 0.0;
  for (int h = 0; h < game.cluster_count(); ++h) {
    const int nh = game.agents().sizes[h];
    const RowVector y_mean = s.y[h].colwise().sum() / nh;
    const RowVector g_mean =
        detail::cluster_gradients(game, h, s.x).colwise().sum() / nh;
    worst = std::max(worst, (y_mean - g_mean).lpNorm<Eigen::Infinity>());
  }
  return worst;
}

/// One recorded row of a run. e_opt is NaN when no reference solution was
/// supplied.
struct TraceRow {
  long k = 0;
  double e_opt = std::numeric_limits<double>::quiet_NaN();
  double e_cons = 0.0;
  double e_track = 0.0;
  double raw_consensus = 0.0;
  double mapping_norm = 0.0;
  RowVector x_mean;
};

using IterateTrace = std::vector<TraceRow>;

inline double total_error(const TraceRow& r) {
  return r.e_opt + r.e_cons + r.e_track;
}

/// The three norms of the convergence analysis plus the two practically
/// observable stopping quantities, all from the raw state:
///   e_opt  = ||| 1 x_mean - 1 x*^T |||_F
///   e_cons = ||| x - 1 x_mean |||_F^u
///   e_track = sum_h ||| y^h - v^h y_mean^h |||_F^{v^h}
inline TraceRow metrics(const SolverState& s, const Game& game,
                        const WeightPair& w, const Vector* x_star = nullptr) {
  const int n = static_cast<int>(s.x.rows());
  TraceRow row;
  row.k = s.k;
  row.x_mean = w.u.transpose() * s.x;
  if (x_star != nullptr)
    row.e_opt = std::sqrt(static_cast<double>(n)) *
                (row.x_mean.transpose() - *x_star).norm();
  row.e_cons = frobenius_norm_u(
      s.x - Vector::Ones(n) * row.x_mean, w.u);
  for (int h = 0; h < game.cluster_count(); ++h) {
    const int nh = game.agents().sizes[h];
    const RowVector y_mean = s.y[h].colwise().sum() / nh;
    row.e_track += frobenius_norm_v(s.y[h] - w.v[h] * y_mean, w.v[h]);
  }
  row.raw_consensus =
      (s.x.rowwise() - s.x.row(0)).cwiseAbs().maxCoeff();
  row.mapping_norm =
      game_mapping(game, row.x_mean.transpose()).norm();
  return row;
}

enum class RunStatus { converged, max_iterations, diverged };

inline const char* to_string(RunStatus s) {
  switch (s) {
    case RunStatus::converged: return "converged";
    case RunStatus::max_iterations: return "max_iterations";
    case RunStatus::diverged: return "diverged";
  }
  return "unknown";
}

struct RunResult {
  SolverState state;  // last finite state
  IterateTrace trace;
  RunStatus status = RunStatus::max_iterations;
  long iterations = 0;
};

using StepObserver = std::function<void(const SolverState&)>;

/// Runs the iteration until max_iter or until both stopping residuals fall
/// below their thresholds. Rows are recorded at stride record_every (plus
/// the initial and final iterates). On divergence the trace and state stop
/// at the last finite iterate.
inline RunResult run(const Game& game, const WeightPair& w,
                     const SolverConfig& cfg, const Matrix& x0,
                     const Vector* x_star = nullptr,
                     const StepObserver& observer = {}) {
  if (cfg.alpha < 0) throw ValidationError("run: alpha must be nonnegative");
  if (cfg.max_iter < 0) throw ValidationError("run: max_iter must be >= 0");
  const long stride = std::max<long>(1, cfg.record_every);

  RunResult out;
  out.state = init_state(game, x0);
  if (observer) observer(out.state);
  TraceRow row = metrics(out.state, game, w, x_star);
  out.trace.push_back(row);
  out.status = RunStatus::max_iterations;

  while (out.state.k < cfg.max_iter) {
    SolverState next = step(out.state, game, w, cfg.alpha);
    if (!state_is_usable(next)) {
      out.status = RunStatus::diverged;
      break;
    }
    out.state = std::move(next);
    if (observer) observer(out.state);
    row = metrics(out.state, game, w, x_star);
    if (out.state.k % stride == 0) out.trace.push_back(row);
    if (row.raw_consensus <= cfg.consensus_tol &&
        row.mapping_norm <= cfg.gradient_tol) {
      out.status = RunStatus::converged;
      break;
    }
  }
  if (out.trace.back().k != out.state.k)
    out.trace.push_back(metrics(out.state, game, w, x_star));
  out.iterations = out.state.k;
  return out;
}

// --- flat-text checkpointing -------------------------------------------

namespace detail {

inline void write_matrix(std::ostream& os, const Matrix& m) {
  os << m.rows() << " " << m.cols() << "\n";
  char buf[32];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof buf, "%.17g", m(i, j));
      os << buf << (j + 1 < m.cols() ? " " : "");
    }
    os << "\n";
  }
}

inline Matrix read_matrix(std::istream& is) {
  Eigen::Index rows, cols;
  if (!(is >> rows >> cols) || rows < 0 || cols < 0)
    throw ValidationError("checkpoint: bad matrix shape header");
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index j = 0; j < cols; ++j)
      if (!(is >> m(i, j)))
        throw ValidationError("checkpoint: truncated matrix body");
  return m;
}

}  // namespace detail

inline void save_state(std::ostream& os, const SolverState& s) {
  os << "mcgt-state 1\n";
  os << "k " << s.k << "\n";
  os << "x ";
  detail::write_matrix(os, s.x);
  os << "y " << s.y.size() << "\n";
  for (const auto& yh : s.y) detail::write_matrix(os, yh);
  os << "g " << s.g_prev.size() << "\n";
  for (const auto& gh : s.g_prev) detail::write_matrix(os, gh);
}

inline SolverState load_state(std::istream& is) {
  std::string tag;
  int version = 0;
  if (!(is >> tag >> version) || tag != "mcgt-state" || version != 1)
    throw ValidationError("checkpoint: unrecognized header");
  SolverState s;
  std::size_t count = 0;
  if (!(is >> tag >> s.k) || tag != "k")
    throw ValidationError("checkpoint: missing iteration counter");
  if (!(is >> tag) || tag != "x")
    throw ValidationError("checkpoint: missing estimate matrix");
  s.x = detail::read_matrix(is);
  if (!(is >> tag >> count) || tag != "y")
    throw ValidationError("checkpoint: missing tracking blocks");
  for (std::size_t h = 0; h < count; ++h) s.y.push_back(detail::read_matrix(is));
  if (!(is >> tag >> count) || tag != "g")
    throw ValidationError("checkpoint: missing gradient blocks");
  for (std::size_t h = 0; h < count; ++h)
    s.g_prev.push_back(detail::read_matrix(is));
  return s;
}

inline void save_state_file(const std::string& path, const SolverState& s) {
  std::ofstream os(path);
  if (!os) throw ValidationError("checkpoint: cannot open " + path);
  save_state(os, s);
}

inline SolverState load_state_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ValidationError("checkpoint: cannot open " + path);
  return load_state(is);
}

}  // namespace mcgt
