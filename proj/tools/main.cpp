#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "spmpc/cli.hpp"

namespace {

struct Options {
  std::string config;
  spmpc::ConfigOverrides overrides;
  std::string norm;
  std::vector<double> state;
};

void add_common(CLI::App* cmd, Options& opt) {
  cmd->add_option("--config", opt.config, "configuration file")->required();
  cmd->add_option_function<std::string>("--out", [&](const std::string& v) { opt.overrides.out = v; },
                                        "output path");
  cmd->add_option_function<int>("--word-width", [&](int v) { opt.overrides.word_width = v; },
                                "fixed-point word width W (enables fixed point)");
  cmd->add_option_function<int>("--frac-width", [&](int v) { opt.overrides.frac_width = v; },
                                "fixed-point fraction width F");
  cmd->add_option_function<double>("--sigma", [&](double v) { opt.overrides.sigma = v; }, "sparsity weight");
  cmd->add_option("--norm", opt.norm, "sparsity norm")->check(CLI::IsMember({"l0", "l1"}));
  cmd->add_option_function<int>("--steps", [&](int v) { opt.overrides.steps = v; }, "simulation steps");
  cmd->add_option_function<int>("--jobs", [&](int v) { opt.overrides.jobs = v; }, "sweep worker threads")
      ->check(CLI::PositiveNumber);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse MPC toolkit with fixed-point solver emulation"};
  app.require_subcommand(1);
  Options opt;
  auto* simulate = app.add_subcommand("simulate", "run one closed-loop simulation and write its trace CSV");
  auto* sweep = app.add_subcommand("sweep", "run every (W, F, sigma) combination and write a summary CSV");
  auto* solve = app.add_subcommand("solve", "solve a single MPC instance and print the control sequence");
  auto* discretize = app.add_subcommand("discretize", "print A_d and B_d for the configured plant");
  for (auto* cmd : {simulate, sweep, solve, discretize}) add_common(cmd, opt);
  solve->add_option("--state", opt.state, "state vector (default: [run] x0)")->delimiter(',');

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return spmpc::kExitConfig;
  }

  try {
    if (!opt.norm.empty()) {
      opt.overrides.norm = opt.norm == "l0" ? spmpc::SparsityNorm::L0 : spmpc::SparsityNorm::L1;
    }
    spmpc::RunConfig cfg = spmpc::load_config(opt.config);
    spmpc::apply_overrides(cfg, opt.overrides);

    if (*simulate) return spmpc::cmd_simulate(cfg, std::cout, std::cerr);
    if (*sweep) return spmpc::cmd_sweep(cfg, std::cout, std::cerr);
    if (*solve) {
      Eigen::VectorXd x = cfg.run.x0;
      if (!opt.state.empty()) x = Eigen::Map<const Eigen::VectorXd>(opt.state.data(), static_cast<Eigen::Index>(opt.state.size()));
      return spmpc::cmd_solve(cfg, x, std::cout, std::cerr);
    }
    return spmpc::cmd_discretize(cfg, std::cout, std::cerr);
  } catch (const spmpc::ConfigError& e) {
    std::cerr << opt.config << ": " << e.what() << "\n";
    return spmpc::kExitConfig;
  } catch (const spmpc::IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return spmpc::kExitIo;
  } catch (const spmpc::Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return spmpc::kExitFailure;
  }
}
