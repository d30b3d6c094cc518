// dido: simulate flights, run the two-stage filter, evaluate, and run the
// parameter / consistency / gradient studies.

#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "dido/commands.hpp"

namespace {

void add_common(CLI::App* cmd, dido::CommandOptions& opt, bool with_config = true) {
  if (with_config) cmd->add_option("--config", opt.config, "experiment config (TOML subset)");
  cmd->add_option("--out", opt.out, "output directory")->capture_default_str();
  cmd->add_option("--seed", opt.seed, "override the config seed");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quadrotor inertial-dynamical odometry toolkit"};
  app.require_subcommand(1);

  dido::CommandOptions opt;
  std::string log_dir, estimate_csv, truth;

  auto* sim = app.add_subcommand("simulate", "simulate a flight log");
  add_common(sim, opt);

  auto* est = app.add_subcommand("estimate", "run the two-stage filter over a log");
  est->add_option("log_dir", log_dir, "directory with imu.csv, rotor.csv[, truth.csv]")->required();
  add_common(est, opt);
  est->add_option("--weights", opt.weights, "base directory for relative weight paths");

  auto* ev = app.add_subcommand("evaluate", "metrics of an estimate against truth");
  ev->add_option("estimate", estimate_csv, "estimate.csv")->required();
  ev->add_option("truth", truth, "truth.csv or a log directory")->required();
  add_common(ev, opt, false);

  auto* ps = app.add_subcommand("param-study", "perturbed-initialisation parameter study");
  ps->add_option("log_dir", log_dir, "log directory (default: simulate from the config)");
  add_common(ps, opt);
  ps->add_option("--runs", opt.runs, "number of runs");
  ps->add_option("--weights", opt.weights, "base directory for relative weight paths");

  auto* mc = app.add_subcommand("mc-consistency", "Monte-Carlo NEES consistency");
  add_common(mc, opt);
  mc->add_option("--runs", opt.runs, "number of runs");

  auto* gc = app.add_subcommand("gradcheck", "analytic vs finite-difference loss gradients");
  add_common(gc, opt, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? dido::kExitOk : dido::kExitUsage;
  }

  return dido::run_guarded(
      [&]() -> int {
        if (*sim) return dido::cmd_simulate(opt, std::cout);
        if (*est) return dido::cmd_estimate(log_dir, opt, std::cout);
        if (*ev) return dido::cmd_evaluate(estimate_csv, truth, opt, std::cout);
        if (*ps) return dido::cmd_param_study(log_dir, opt, std::cout);
        if (*mc) return dido::cmd_mc_consistency(opt, std::cout);
        return dido::cmd_gradcheck(opt, std::cout);
      },
      std::cerr);
}
