// Command-line front end: configuration-driven runs of the multi-cluster
// gradient-tracking solver, step-size certification, the leader-follower
// comparison, and trace post-processing.
//
// Exit status: 0 success, 1 runtime failure (divergence, missed target),
// 2 validation error (bad config, bad graph, malformed input file).

#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "mcgt/experiment.hpp"

namespace {

struct Shared {
  std::string config_path;
  std::string out_dir = ".";
  std::uint64_t seed_override = 0;
  bool quiet = false;
  CLI::Option* seed_opt = nullptr;
};

void add_common(CLI::App* sub, Shared& s, bool wants_config) {
  if (wants_config)
    sub->add_option("--config", s.config_path, "experiment config (JSON)")
        ->required();
  sub->add_option("--out", s.out_dir, "output directory")
      ->capture_default_str();
  s.seed_opt = sub->add_option("--seed-override", s.seed_override,
                               "override the config's x0 seed");
  sub->add_flag("--quiet", s.quiet, "suppress non-essential output");
}

mcgt::CommandOptions make_options(const Shared& s) {
  mcgt::CommandOptions o;
  o.out_dir = s.out_dir;
  o.quiet = s.quiet;
  if (s.seed_opt != nullptr && s.seed_opt->count() > 0)
    o.seed_override = s.seed_override;
  return o;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"multi-cluster Nash equilibrium seeking via gradient tracking"};
  app.require_subcommand(1);

  Shared run_s, certify_s, compare_s, report_s;
  std::string trace_path;

  CLI::App* cmd_run = app.add_subcommand(
      "run", "build the instance, run the solver, write trace and report");
  add_common(cmd_run, run_s, true);

  CLI::App* cmd_certify = app.add_subcommand(
      "certify", "print the constants ledger and certify a step size");
  add_common(cmd_certify, certify_s, true);

  CLI::App* cmd_compare = app.add_subcommand(
      "compare", "dense vs leader-follower global graph on the same instance");
  add_common(cmd_compare, compare_s, true);

  CLI::App* cmd_report = app.add_subcommand(
      "report", "recompute the rate fit of a trace and emit plot-ready CSV");
  cmd_report->add_option("trace", trace_path, "trace CSV from a run")
      ->required();
  add_common(cmd_report, report_s, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return 2;
  }

  try {
    if (app.got_subcommand(cmd_run))
      return mcgt::run_command(mcgt::load_config(run_s.config_path),
                               make_options(run_s), std::cout);
    if (app.got_subcommand(cmd_certify))
      return mcgt::certify_command(mcgt::load_config(certify_s.config_path),
                                   make_options(certify_s), std::cout);
    if (app.got_subcommand(cmd_compare))
      return mcgt::compare_command(mcgt::load_config(compare_s.config_path),
                                   make_options(compare_s), std::cout);
    if (app.got_subcommand(cmd_report))
      return mcgt::report_command(trace_path, make_options(report_s),
                                  std::cout);
  } catch (const mcgt::ValidationError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const mcgt::NumericalError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 2;
}
