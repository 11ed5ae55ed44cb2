#pragma once

// Experiment configuration (strict JSON), metrics emission and the command
// implementations behind the dynfl CLI.

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "dynfl/datastats.hpp"
#include "dynfl/dynacomm.hpp"
#include "dynfl/engine.hpp"
#include "dynfl/models.hpp"

namespace dynfl {

struct DatasetConfig {
  std::string kind = "synthetic";  // synthetic | csv
  int num_classes = 10;
  int dims = 20;
  int per_class = 200;
  int test_per_class = 50;
  BlobShape shape;
  std::string path;       // csv
  std::string test_path;  // csv, optional
};

struct ModelConfig {
  ObjectiveKind kind = ObjectiveKind::softmax;
  int hidden = 16;
  OptimizerConfig optimizer;
};

struct OutputConfig {
  std::string dir = "out";
  std::vector<std::string> formats{"csv", "json"};
  bool wall_clock = false;  // false writes wall_ms = 0 so reruns stay byte-identical
};

struct ExperimentConfig {
  std::uint64_t seed = 1;
  DatasetConfig dataset;
  PartitionSpec partition;
  TrainingConfig training;
  ModelConfig model;
  OutputConfig output;
};

/// Strict parse: unknown keys and invariant violations throw ValidationError
/// naming the offending field path. Missing fields take defaults.
ExperimentConfig parse_config(const nlohmann::json& j);
ExperimentConfig parse_config_file(const std::string& path);
nlohmann::json to_json(const ExperimentConfig& config);

/// Locale-independent shortest round-trip formatting; inf/nan spelled out.
std::string format_number(double v);

extern const char* const kMetricsColumns;

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rows, bool wall_clock);
nlohmann::json metrics_to_json(const std::vector<RoundMetrics>& rows, bool wall_clock);

struct PreparedExperiment {
  std::vector<ClientDataset> clients;
  std::optional<Dataset> test_set;
  Objective objective;
};

PreparedExperiment prepare(const ExperimentConfig& config);

struct RunOutcome {
  std::vector<RoundMetrics> metrics;
  int L = 0;
  std::size_t model_size = 0;
  std::size_t total_gradient_updates = 0;
};

RunOutcome run_experiment(const ExperimentConfig& config, int threads = 1);

struct RunOverrides {
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  int threads = 1;
};

/// Exit codes: 0 success, 1 failed check, 2 invalid input or numeric failure.
int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& log);

struct TheoryOptions {
  std::vector<double> etas{0.1, 0.5, 0.9};
  std::vector<int> ks{1, 2, 5};
  std::vector<int> rounds{1, 3, 10};
  int trials = 20;
  std::uint64_t seed = 2024;
  double tolerance = 1e-10;
};

int cmd_theory(const TheoryOptions& options, std::ostream& out);

/// Random problem with Dir(alpha) label mixes (one-hot heavy for small alpha),
/// global = pooled candidates, and random per-client and server budgets.
SelectionProblem random_selection_problem(int num_candidates, int num_classes, double alpha, std::uint64_t seed);

struct BenchOptions {
  std::vector<int> sizes{10};
  int trials = 20;
  int num_classes = 10;
  double alpha = 0.1;
  std::uint64_t seed = 7;
  std::string out_dir = "out";
};

int cmd_selector_bench(const BenchOptions& options, std::ostream& log);

int cmd_partition_stats(const std::string& config_path, const RunOverrides& overrides, std::ostream& out);

}  // namespace dynfl
