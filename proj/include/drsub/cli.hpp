#pragma once

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drsub/experiment.hpp"

namespace drsub {

enum ExitCode : int { kExitOk = 0, kExitIo = 1, kExitValidation = 2, kExitRunFailure = 3 };

namespace detail {

/// Flags shared by the config-driven commands; each one overrides a config key.
struct ConfigOverrides {
  std::string config_path;
  std::optional<int> iterations;
  std::optional<int> runs;
  std::optional<std::uint64_t> master_seed;
  std::optional<int> threads;
  std::optional<std::string> output_dir;
  std::optional<std::string> algorithm;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "experiment config (JSON)")->required();
    cmd->add_option("--T", iterations, "override T");
    cmd->add_option("--runs", runs, "override runs");
    cmd->add_option("--master-seed", master_seed, "override master_seed");
    cmd->add_option("--threads", threads, "override threads");
    cmd->add_option("--output-dir", output_dir, "override output_dir");
    cmd->add_option("--algorithm", algorithm, "override algorithm");
  }

  ExperimentConfig load() const {
    auto cfg = parse_experiment_config(io::read_file(config_path), config_path);
    if (iterations) cfg.run.iterations = *iterations;
    if (runs) cfg.runs = *runs;
    if (master_seed) cfg.run.master_seed = *master_seed;
    if (threads) cfg.threads = *threads;
    if (output_dir) cfg.output_dir = *output_dir;
    if (algorithm) cfg.run.algorithm = algorithm_from_string(*algorithm);
    cfg.validate();
    return cfg;
  }
};

}  // namespace detail

/// Entry point behind the `drsub` executable. Returns the process exit code.
inline int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Stochastic DR-submodular maximization: generators, optimizers, bounds, reports"};
  app.require_subcommand(1);

  auto* generate = app.add_subcommand("generate", "write a problem instance");
  generate->require_subcommand(1);

  NqpGenerateOptions nqp;
  long long nqp_n = nqp.n, nqp_m = nqp.m;
  std::uint64_t nqp_seed = 0;
  std::optional<double> a_const;
  std::string nqp_out = "instance.nqp";
  auto* gen_nqp = generate->add_subcommand("nqp", "random monotone NQP");
  gen_nqp->add_option("--n", nqp_n, "dimension");
  gen_nqp->add_option("--m", nqp_m, "number of packing constraints");
  gen_nqp->add_option("--low", nqp.entry_low, "lower end of H entries");
  gen_nqp->add_option("--high", nqp.entry_high, "upper end of H entries (<= 0)");
  gen_nqp->add_option("--seed", nqp_seed, "generator seed");
  gen_nqp->add_option("--a-const", a_const, "fill A with this constant instead of Uniform[0,1]");
  gen_nqp->add_option("--out", nqp_out, "output path");

  Index channels = 10, customers = 50;
  double density = 0.3;
  int max_frequency = 10;
  std::uint64_t bud_seed = 0;
  std::string bud_out = "instance.tsv";
  auto* gen_budget = generate->add_subcommand("budget", "synthetic channel/customer bid graph");
  gen_budget->add_option("--channels", channels);
  gen_budget->add_option("--customers", customers);
  gen_budget->add_option("--density", density);
  gen_budget->add_option("--max-frequency", max_frequency);
  gen_budget->add_option("--seed", bud_seed);
  gen_budget->add_option("--out", bud_out);

  detail::ConfigOverrides run_ov, bounds_ov, exp_ov;
  auto* run = app.add_subcommand("run", "execute a battery of runs and write runs.csv");
  run_ov.attach(run);
  auto* bounds = app.add_subcommand("bounds", "tabulate the selected theorem bounds");
  bounds_ov.attach(bounds);
  auto* experiment = app.add_subcommand("experiment", "instance, OPT, runs, bounds and report in one pass");
  exp_ov.attach(experiment);

  std::string report_runs;
  std::vector<std::string> report_bounds;
  std::optional<double> report_opt;
  int report_t_min = 1;
  bool report_raw = false;
  std::string report_out = ".";
  auto* report = app.add_subcommand("report", "statistic trajectories, fits and violation rates");
  report->add_option("--runs", report_runs, "runs.csv")->required();
  report->add_option("--bound", report_bounds, "bound CSV (repeatable)");
  report->add_option("--opt", report_opt, "OPT used for normalization");
  report->add_option("--t-min", report_t_min, "first t included in fits");
  report->add_flag("--raw", report_raw, "fit unnormalized values");
  report->add_option("--out", report_out, "output directory");

  std::vector<std::string> argv_store{"drsub"};
  argv_store.insert(argv_store.end(), args.begin(), args.end());
  std::vector<const char*> argv;
  for (const auto& a : argv_store) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp& e) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  }

  try {
    if (gen_nqp->parsed()) {
      nqp.n = static_cast<Index>(nqp_n);
      nqp.m = static_cast<Index>(nqp_m);
      nqp.constraint_fill = a_const;
      const auto obj = generate_nqp(nqp_seed, nqp);
      io::write_file(nqp_out, obj.serialize());
      const auto c = instance_constants(obj);
      out << "wrote " << nqp_out << '\n' << "L " << io::sig17(c.lipschitz) << '\n' << "D " << io::sig17(c.diameter) << '\n';
    } else if (gen_budget->parsed()) {
      const auto data = generate_bipartite(bud_seed, channels, customers, density, max_frequency);
      io::write_file(bud_out, data.to_tsv());
      const auto obj = build_budget(data, {});
      const auto c = instance_constants(obj);
      out << "wrote " << bud_out << '\n' << "L " << io::sig17(c.lipschitz) << '\n' << "D " << io::sig17(c.diameter) << '\n';
    } else if (run->parsed()) {
      const auto cfg = run_ov.load();
      const auto problem = load_problem(cfg.problem);
      const auto runs = execute_runs(cfg, *problem.objective);
      out << summary_line(runs) << '\n';
    } else if (bounds->parsed()) {
      const auto cfg = bounds_ov.load();
      detail::require(!cfg.bounds.empty(), "config: no bounds selected");
      const auto problem = load_problem(cfg.problem);
      const double opt = resolve_opt(cfg, *problem.objective);
      for (const auto& c : write_bounds(cfg, *problem.objective, opt)) {
        out << "wrote " << join_path(cfg.output_dir, bound_file_name(c)) << '\n';
      }
    } else if (experiment->parsed()) {
      const auto cfg = exp_ov.load();
      out << run_experiment(cfg) << '\n';
    } else if (report->parsed()) {
      const auto battery = TrialBattery(parse_runs_csv(io::read_file(report_runs), report_runs));
      std::vector<BoundCurve> curves;
      for (const auto& path : report_bounds) curves.push_back(BoundCurve::parse_csv(io::read_file(path), path));
      ReportOptions ro;
      ro.opt = report_opt;
      ro.normalized = !report_raw;
      ro.t_min = report_t_min;
      const auto rep = build_report(battery, curves, ro);
      write_report(report_out, rep);
      out << rep.text;
    }
  } catch (const BatteryError& e) {
    err << "error: " << e.what() << '\n';
    return kExitRunFailure;
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitRunFailure;
  }
  return kExitOk;
}

}  // namespace drsub
