#pragma once

#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "mcgt/certificate.hpp"
#include "mcgt/config.hpp"
#include "mcgt/oracle.hpp"
#include "mcgt/solver.hpp"
#include "mcgt/trace_csv.hpp"

namespace mcgt {

/// Least-squares fit of log(e_opt + e_cons + e_track) against k on the
/// window from the first iterate with total error below 1e-1 to the first
/// below 1e-8. When a threshold is never crossed the window is clipped to
/// the trace and `window_complete` stays false.
struct RateFit {
  bool valid = false;
  bool window_complete = false;
  double slope = 0.0;  // natural log per iteration
  double r_squared = 0.0;
  long k_begin = -1;
  long k_end = -1;
  std::string note;
};

inline RateFit fit_linear_rate(const IterateTrace& trace) {
  constexpr double kHigh = 1e-1, kLow = 1e-8;
  RateFit fit;
  std::vector<std::pair<long, double>> totals;
  for (const TraceRow& r : trace) {
    const double t = total_error(r);
    if (std::isfinite(t) && t > 0) totals.emplace_back(r.k, t);
  }
  if (totals.size() < 3) {
    fit.note = "insufficient data";
    return fit;
  }
  long begin_idx = -1, end_idx = -1;
  for (std::size_t i = 0; i < totals.size(); ++i) {
    if (begin_idx < 0 && totals[i].second < kHigh)
      begin_idx = static_cast<long>(i);
    if (end_idx < 0 && totals[i].second < kLow) {
      end_idx = static_cast<long>(i);
      break;
    }
  }
  const bool crossed_high = begin_idx >= 0;
  const bool crossed_low = end_idx >= 0;
  if (begin_idx < 0) begin_idx = 0;
  if (end_idx < 0) end_idx = static_cast<long>(totals.size()) - 1;
  if (end_idx - begin_idx + 1 < 3) {
    fit.note = "insufficient data";
    return fit;
  }
  fit.window_complete = crossed_high && crossed_low;
  fit.k_begin = totals[begin_idx].first;
  fit.k_end = totals[end_idx].first;

  double sk = 0, sy = 0, skk = 0, sky = 0;
  const long m = end_idx - begin_idx + 1;
  for (long i = begin_idx; i <= end_idx; ++i) {
    const double k = static_cast<double>(totals[i].first);
    const double y = std::log(totals[i].second);
    sk += k;
    sy += y;
    skk += k * k;
    sky += k * y;
  }
  const double denom = m * skk - sk * sk;
  if (denom <= 0) {
    fit.note = "insufficient data";
    return fit;
  }
  fit.slope = (m * sky - sk * sy) / denom;
  const double intercept = (sy - fit.slope * sk) / m;
  double ss_res = 0, ss_tot = 0;
  const double y_mean = sy / m;
  for (long i = begin_idx; i <= end_idx; ++i) {
    const double k = static_cast<double>(totals[i].first);
    const double y = std::log(totals[i].second);
    const double e = y - (intercept + fit.slope * k);
    ss_res += e * e;
    ss_tot += (y - y_mean) * (y - y_mean);
  }
  fit.r_squared = ss_tot < 1e-30 ? 1.0 : 1.0 - ss_res / ss_tot;
  fit.valid = true;
  return fit;
}

struct CommandOptions {
  std::string out_dir = ".";
  std::optional<std::uint64_t> seed_override;
  bool quiet = false;
};

namespace detail {

inline std::string join_path(const std::string& dir, const std::string& file) {
  return (std::filesystem::path(dir) / file).string();
}

inline void ensure_dir(const std::string& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw ValidationError("cannot create output directory " + dir);
}

inline Json ledger_json(const ConstantsLedger& c) {
  return Json{{"sigma_R", c.sigma_R},
              {"sigma_C", c.sigma_C},
              {"sigma_2", c.sigma_2},
              {"sigma_I", c.sigma_I},
              {"delta_u_frob", c.delta_u_frob},
              {"delta_frob_u", c.delta_frob_u},
              {"delta_v_frob", c.delta_v_frob},
              {"delta_frob_v", c.delta_frob_v},
              {"L", c.L},
              {"L_v", c.L_v},
              {"mu", c.mu},
              {"eta_min", c.eta_min},
              {"cluster_count", c.cluster_count},
              {"norm_one_uT", c.norm_one_uT},
              {"norm_R_minus_I", c.norm_R_minus_I}};
}

inline void print_ledger(std::ostream& os, const ConstantsLedger& c) {
  os << "constants ledger\n"
     << "  sigma_R        = " << c.sigma_R << "\n"
     << "  sigma_C        = " << c.sigma_C << "\n"
     << "  sigma_2        = " << c.sigma_2 << "\n"
     << "  sigma_I        = " << c.sigma_I << "\n"
     << "  delta_u_frob   = " << c.delta_u_frob << "\n"
     << "  delta_frob_u   = " << c.delta_frob_u << "\n"
     << "  delta_v_frob   = " << c.delta_v_frob << "\n"
     << "  delta_frob_v   = " << c.delta_frob_v << "\n"
     << "  L              = " << c.L << "\n"
     << "  L_v            = " << c.L_v << "\n"
     << "  mu             = " << c.mu << "\n"
     << "  eta_min        = " << c.eta_min << "\n"
     << "  clusters       = " << c.cluster_count << "\n"
     << "  |1 u^T|_2      = " << c.norm_one_uT << "\n"
     << "  |R - I|_2      = " << c.norm_R_minus_I << "\n";
}

inline Json fit_json(const RateFit& fit) {
  return Json{{"valid", fit.valid},
              {"window_complete", fit.window_complete},
              {"slope", fit.slope},
              {"r_squared", fit.r_squared},
              {"k_begin", fit.k_begin},
              {"k_end", fit.k_end},
              {"note", fit.note}};
}

inline Json optimality_json(const OptimalityReport& rep) {
  std::vector<double> wr(rep.welfare_residuals.data(),
                         rep.welfare_residuals.data() + rep.welfare_residuals.size());
  return Json{{"tol", rep.tol},
              {"consensus_ok", rep.consensus_ok},
              {"consensus_residual", rep.consensus_residual},
              {"welfare_ok", rep.welfare_ok},
              {"welfare_residuals", wr},
              {"nash_ok", rep.nash_ok}};
}

struct ResolvedAlpha {
  double value = 0.0;
  bool certified = false;
  std::optional<StepSizeCertificate> certificate;
};

inline std::optional<ResolvedAlpha> resolve_alpha(const ExperimentConfig& cfg,
                                                  const Instance& inst) {
  ResolvedAlpha r;
  if (cfg.alpha) {
    r.value = *cfg.alpha;
    return r;
  }
  const ConstantsLedger ledger =
      assemble_constants(*inst.game, *inst.topology, inst.weights);
  const auto cert = certify_stepsize(ledger, default_alpha_grid());
  if (!cert) return std::nullopt;
  r.value = cert->alpha;
  r.certified = true;
  r.certificate = cert;
  return r;
}

}  // namespace detail

/// Build the instance, solve the reference equilibrium, run the solver,
/// and write the trace CSV plus a human/machine-readable report.
/// Returns 0 on success, 1 on divergence or a failed certification.
inline int run_command(const ExperimentConfig& cfg, const CommandOptions& opts,
                       std::ostream& out) {
  Instance inst = build_instance(cfg, opts.seed_override);
  inst.weights.validate();
  const ReferenceSolution ref = solve_quadratic_ne(*inst.game);

  const auto alpha = detail::resolve_alpha(cfg, inst);
  if (!alpha) {
    out << "error: no step size certified on the default grid; set `alpha` "
           "explicitly\n";
    return 1;
  }

  SolverConfig scfg;
  scfg.alpha = alpha->value;
  scfg.max_iter = cfg.max_iter;
  scfg.consensus_tol = cfg.consensus_tol;
  scfg.gradient_tol = cfg.gradient_tol;
  scfg.record_every = cfg.record_every;
  const RunResult result =
      run(*inst.game, inst.weights, scfg, inst.x0, &ref.x_star);

  detail::ensure_dir(opts.out_dir);
  const std::string trace_path = detail::join_path(opts.out_dir, cfg.output.trace);
  write_trace_csv_file(trace_path, result.trace);

  const RateFit fit = fit_linear_rate(result.trace);
  const double opt_tol =
      cfg.consensus_tol > 0 ? 10.0 * cfg.consensus_tol : 1e-6;
  const OptimalityReport opt =
      verify_optimality(*inst.game, result.state.x, opt_tol);
  const double epsilon =
      (result.state.x.row(0).transpose() - ref.x_star).norm();
  const TraceRow& last = result.trace.back();

  std::vector<double> xs(ref.x_star.data(), ref.x_star.data() + ref.x_star.size());
  Json machine{{"command", "run"},
               {"alpha", alpha->value},
               {"alpha_mode", alpha->certified ? "certified" : "explicit"},
               {"status", to_string(result.status)},
               {"iterations", result.iterations},
               {"final",
                {{"raw_consensus", last.raw_consensus},
                 {"mapping_norm", last.mapping_norm},
                 {"epsilon", epsilon},
                 {"e_opt", last.e_opt},
                 {"e_cons", last.e_cons},
                 {"e_track", last.e_track}}},
               {"rate_fit", detail::fit_json(fit)},
               {"optimality", detail::optimality_json(opt)},
               {"reference",
                {{"method", to_string(ref.method)},
                 {"residual", ref.residual},
                 {"x_star", xs}}},
               {"trace", trace_path},
               {"config", cfg.raw}};
  if (alpha->certified)
    machine["certificate"] = Json{{"alpha", alpha->certificate->alpha},
                                  {"rho", alpha->certificate->rho}};

  std::ostringstream rep;
  rep << "multi-cluster gradient-tracking run\n";
  rep << "agents: " << inst.game->agent_count()
      << "  clusters: " << inst.game->cluster_count()
      << "  decision dim: " << inst.game->decision_dim() << "\n";
  rep << "alpha: " << alpha->value
      << (alpha->certified ? " (certified)" : " (explicit)") << "\n";
  rep << "status: " << to_string(result.status) << " after "
      << result.iterations << " iterations\n";
  rep << "final raw consensus residual: " << last.raw_consensus << "\n";
  rep << "final |M(x_mean)|_2: " << last.mapping_norm << "\n";
  rep << "epsilon |x_1 - x*|_2: " << epsilon << "\n";
  rep << "reference: " << to_string(ref.method)
      << " residual " << ref.residual << "\n";
  if (fit.valid)
    rep << "rate fit: slope " << fit.slope << " per iteration, R^2 "
        << fit.r_squared << ", window k=[" << fit.k_begin << "," << fit.k_end
        << "]\n";
  else
    rep << "rate fit: " << fit.note << "\n";
  rep << "optimality @ tol " << opt.tol << ": consensus "
      << (opt.consensus_ok ? "PASS" : "FAIL") << " (" << opt.consensus_residual
      << "), social welfare " << (opt.welfare_ok ? "PASS" : "FAIL")
      << " (max " << opt.welfare_residuals.maxCoeff() << "), nash "
      << (opt.nash_ok ? "PASS" : "FAIL") << "\n";
  rep << "trace: " << trace_path << "\n";
  rep << "--- machine readable ---\n" << machine.dump(2) << "\n";

  const std::string report_path =
      detail::join_path(opts.out_dir, cfg.output.report);
  std::ofstream rf(report_path);
  if (!rf) throw ValidationError("cannot open report file " + report_path);
  rf << rep.str();

  if (!opts.quiet) out << rep.str();
  if (result.status == RunStatus::diverged) {
    out << "error: run diverged at iteration " << result.iterations << "\n";
    return 1;
  }
  return 0;
}

/// Print the constants ledger, the spectral-radius table over the default
/// step-size grid, and the certified step size (if any).
inline int certify_command(const ExperimentConfig& cfg,
                           const CommandOptions& opts, std::ostream& out) {
  Instance inst = build_instance(cfg, opts.seed_override);
  inst.weights.validate();
  const ConstantsLedger ledger =
      assemble_constants(*inst.game, *inst.topology, inst.weights);
  const std::vector<double> grid = default_alpha_grid();
  const auto cert = certify_stepsize(ledger, grid);

  detail::print_ledger(out, ledger);
  Json table = Json::array();
  if (!opts.quiet) out << "\n  alpha          rho(A(alpha))\n";
  for (double alpha : grid) {
    if (phi_radicand(ledger, alpha) < 0) {
      if (!opts.quiet)
        out << "  " << alpha << "   (phi undefined)\n";
      table.push_back(Json{{"alpha", alpha}, {"rho", nullptr}});
      continue;
    }
    const BoundMatrix bm = bound_matrix(ledger, alpha);
    if (!opts.quiet) out << "  " << alpha << "   " << bm.rho << "\n";
    table.push_back(Json{{"alpha", alpha}, {"rho", bm.rho}});
  }
  if (cert)
    out << "certified alpha: " << cert->alpha << "  rho: " << cert->rho << "\n";
  else
    out << "certified alpha: none certified on the grid\n";

  Json machine{{"command", "certify"},
               {"ledger", detail::ledger_json(ledger)},
               {"certified", cert.has_value()},
               {"grid", table},
               {"config", cfg.raw}};
  if (cert) {
    machine["alpha"] = cert->alpha;
    machine["rho"] = cert->rho;
  }
  out << "--- machine readable ---\n" << machine.dump(2) << "\n";
  return 0;
}

namespace detail {

struct CompareArm {
  std::string label;
  long iterations_to_eps = -1;
  RunStatus status = RunStatus::max_iterations;
};

inline CompareArm run_compare_arm(const ExperimentConfig& cfg,
                                  const CommandOptions& opts, double alpha,
                                  const std::string& label) {
  Instance inst = build_instance(cfg, opts.seed_override);
  inst.weights.validate();
  const ReferenceSolution ref = solve_quadratic_ne(*inst.game);
  CompareArm arm;
  arm.label = label;
  long hit = -1;
  const StepObserver observer = [&](const SolverState& s) {
    if (hit >= 0) return;
    const double err = (s.x.row(0).transpose() - ref.x_star).norm();
    if (err <= cfg.compare_epsilon) hit = s.k;
  };
  SolverConfig scfg;
  scfg.alpha = alpha;
  scfg.max_iter = cfg.max_iter;
  scfg.record_every = std::max<long>(1, cfg.record_every);
  const RunResult result =
      run(*inst.game, inst.weights, scfg, inst.x0, &ref.x_star, observer);
  arm.status = result.status;
  arm.iterations_to_eps = hit;
  return arm;
}

}  // namespace detail

/// Run the same instance with the dense global graph and with the
/// leader-follower restriction, and compare iterations to reach the common
/// accuracy `compare_epsilon` on |x_1 - x*|_2. The restricted arm is
/// expected to need at least as many iterations.
inline int compare_command(const ExperimentConfig& cfg,
                           const CommandOptions& opts, std::ostream& out) {
  ExperimentConfig dense = cfg;
  dense.global_graph.leader_follower = false;
  ExperimentConfig restricted = cfg;
  restricted.global_graph.leader_follower = true;

  double alpha = 0.0;
  if (cfg.alpha) {
    alpha = *cfg.alpha;
  } else {
    // one common step size keeps the two arms comparable: take the smaller
    // of the two certified values
    const auto a1 = detail::resolve_alpha(dense, build_instance(dense, opts.seed_override));
    const auto a2 = detail::resolve_alpha(restricted,
                                          build_instance(restricted, opts.seed_override));
    if (!a1 || !a2) {
      out << "error: no step size certified for one of the arms\n";
      return 1;
    }
    alpha = std::min(a1->value, a2->value);
  }

  const auto dense_arm =
      detail::run_compare_arm(dense, opts, alpha, "dense");
  const auto restricted_arm =
      detail::run_compare_arm(restricted, opts, alpha, "leader-follower");

  out << "compare @ epsilon " << cfg.compare_epsilon << ", alpha " << alpha
      << "\n";
  for (const auto& arm : {dense_arm, restricted_arm}) {
    out << "  " << arm.label << ": ";
    if (arm.iterations_to_eps >= 0)
      out << arm.iterations_to_eps << " iterations\n";
    else
      out << "epsilon not reached (" << to_string(arm.status) << ")\n";
  }

  Json machine{{"command", "compare"},
               {"epsilon", cfg.compare_epsilon},
               {"alpha", alpha},
               {"dense_iterations", dense_arm.iterations_to_eps},
               {"restricted_iterations", restricted_arm.iterations_to_eps},
               {"config", cfg.raw}};
  out << "--- machine readable ---\n" << machine.dump(2) << "\n";

  if (dense_arm.iterations_to_eps < 0 || restricted_arm.iterations_to_eps < 0) {
    out << "error: an arm did not reach the target accuracy\n";
    return 1;
  }
  if (restricted_arm.iterations_to_eps < dense_arm.iterations_to_eps) {
    out << "error: leader-follower arm converged faster than the dense arm\n";
    return 1;
  }
  return 0;
}

/// Recompute the rate fit for an existing trace and emit a plot-ready
/// per-dimension CSV of the consensus-averaged decision trajectory.
inline int report_command(const std::string& trace_path,
                          const CommandOptions& opts, std::ostream& out) {
  const IterateTrace trace = read_trace_csv_file(trace_path);
  if (trace.empty()) throw ValidationError("trace: no rows in " + trace_path);
  const RateFit fit = fit_linear_rate(trace);

  detail::ensure_dir(opts.out_dir);
  const std::string stem = std::filesystem::path(trace_path).stem().string();
  const std::string dims_path =
      detail::join_path(opts.out_dir, stem + "_dimensions.csv");
  {
    std::ofstream os(dims_path);
    if (!os) throw ValidationError("cannot open " + dims_path);
    const Eigen::Index q = trace.front().x_mean.size();
    os << "k";
    for (Eigen::Index j = 0; j < q; ++j) os << ",x_mean_" << j;
    os << "\n";
    for (const TraceRow& r : trace) {
      os << r.k;
      for (Eigen::Index j = 0; j < r.x_mean.size(); ++j)
        os << "," << detail::fmt_double(r.x_mean[j]);
      os << "\n";
    }
  }

  if (fit.valid)
    out << "rate fit: slope " << fit.slope << " per iteration, R^2 "
        << fit.r_squared << ", window k=[" << fit.k_begin << "," << fit.k_end
        << "]\n";
  else
    out << "rate fit: " << fit.note << "\n";
  out << "per-dimension trajectory: " << dims_path << "\n";

  Json machine{{"command", "report"},
               {"trace", trace_path},
               {"rate_fit", detail::fit_json(fit)},
               {"dimensions_csv", dims_path}};
  out << "--- machine readable ---\n" << machine.dump(2) << "\n";
  return 0;
}

}  // namespace mcgt
