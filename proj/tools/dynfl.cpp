#include <CLI11.hpp>

#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "dynfl/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"dynfl: communication-budgeted federated learning simulator"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 1;

  auto* run = app.add_subcommand("run", "Train per a JSON config; writes metrics.csv, metrics.json, resolved_config.json");
  run->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  run->add_option("--seed", seed, "override the master seed");
  run->add_option("--out", out_dir, "override output directory");
  run->add_option("--threads", threads, "worker threads for local steps (0 = auto)")->check(CLI::NonNegativeNumber);

  dynfl::TheoryOptions theory;
  auto* th = app.add_subcommand("theory", "Check the three-client quadratic convergence identity over a grid");
  th->add_option("--etas", theory.etas, "learning rates")->delimiter(',');
  th->add_option("--ks", theory.ks, "high-frequency steps per round")->delimiter(',');
  th->add_option("--rounds", theory.rounds, "round counts")->delimiter(',');
  th->add_option("--trials", theory.trials, "random scenarios per grid point");
  th->add_option("--seed", theory.seed, "scenario seed");
  th->add_option("--tolerance", theory.tolerance, "maximum allowed absolute deviation");

  dynfl::BenchOptions bench;
  auto* sb = app.add_subcommand("selector-bench", "Compare brute-force, DynaComm, genetic and random selectors");
  sb->add_option("--sizes", bench.sizes, "candidate counts")->delimiter(',');
  sb->add_option("--trials", bench.trials, "problems per size");
  sb->add_option("--classes", bench.num_classes, "label classes");
  sb->add_option("--alpha", bench.alpha, "Dirichlet concentration of candidate label mixes");
  sb->add_option("--seed", bench.seed, "problem seed");
  sb->add_option("--out", bench.out_dir, "output directory");
  sb->add_option("--threads", threads, "accepted for symmetry; the bench is single-threaded");

  auto* ps = app.add_subcommand("partition-stats", "Per-client label histograms and KL to the global distribution");
  ps->add_option("--config", config_path, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  ps->add_option("--seed", seed, "override the master seed");

  CLI11_PARSE(app, argc, argv);

  dynfl::RunOverrides overrides{seed, out_dir, threads};
  if (*run) return dynfl::cmd_run(config_path, overrides, std::cout);
  if (*th) return dynfl::cmd_theory(theory, std::cout);
  if (*sb) return dynfl::cmd_selector_bench(bench, std::cout);
  if (*ps) return dynfl::cmd_partition_stats(config_path, overrides, std::cout);
  return 2;
}
