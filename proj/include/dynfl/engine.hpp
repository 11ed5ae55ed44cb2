#pragma once

// Round orchestration: client sampling, subset selection, interleaved local
// SGD with interval-triggered weighted aggregation, and cost accounting.

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynfl/comms.hpp"
#include "dynfl/datastats.hpp"
#include "dynfl/dynacomm.hpp"
#include "dynfl/models.hpp"

namespace dynfl {

enum class SelectionMethod { dynacomm, brute, genetic, random };
enum class Participation { all, high_only };

std::string to_string(SelectionMethod method);
SelectionMethod parse_selection_method(const std::string& name);
std::string to_string(Participation participation);
Participation parse_participation(const std::string& name);

struct BudgetSpec {
  BudgetMode mode = BudgetMode::dynamic;
  double beta = 1.0;
};

struct TrainingConfig {
  int rounds = 1;                  // T
  double active_fraction = 0.1;    // C
  std::optional<int> local_epochs; // E, used to derive L
  std::optional<int> local_steps;  // explicit L
  int batch_size = 10;             // B
  IntervalLevel high_level = IntervalLevel::a;
  IntervalLevel low_level = IntervalLevel::g;
  BudgetSpec budget;
  SelectionMethod selection = SelectionMethod::dynacomm;
  Participation participation = Participation::all;
  int ens_times = 4;
  std::uint64_t seed = 0;
  int eval_every = 1;
  int threads = 1;  // 0 = hardware concurrency

  void validate() const;
};

/// Per-client update count: round(sum |D_m| * E / (M * B)), at least 1.
int compute_L(std::span<const std::size_t> client_sizes, int epochs, int batch_size, std::size_t num_clients);

struct WeightedModel {
  int client_id = 0;
  const ModelParams* params = nullptr;
  double weight = 0.0;
};

/// sum_m (w_m / sum w) W_m, reduced in ascending client-id order as a running
/// mean, so averaging identical models returns them bit-for-bit.
ModelParams weighted_average(std::span<const WeightedModel> models);

struct RoundPlan {
  int round = 0;  // 0-based t
  int L = 1;
  std::vector<int> actives;       // M^t, ascending
  std::vector<int> z;             // high-frequency subset, ascending
  std::vector<int> participants;  // clients that train this round
  FrequencyAssignment assignment;
  double subset_kl = 0.0;

  /// U_l for every l in 1..L with at least one syncing participant.
  std::map<int, std::vector<int>> sync_schedule() const;
  /// Number of syncs each participant performs, keyed by client id.
  std::map<int, int> sync_counts() const;
};

struct RoundMetrics {
  int round = 0;  // 1-based
  bool skipped = false;
  std::size_t subset_size = 0;
  double subset_kl = 0.0;
  double round_cost = 0.0;
  double normalized_cost = 0.0;
  double cumulative_normalized_cost = 0.0;
  std::size_t gradient_updates = 0;
  std::size_t sync_events = 0;
  std::optional<Evaluation> eval;
  double wall_ms = 0.0;
};

class Engine {
 public:
  Engine(std::vector<ClientDataset> clients, Objective objective, OptimizerConfig optimizer,
         TrainingConfig config, std::optional<Dataset> test_set = std::nullopt);

  /// Samples M^t, runs the configured selector and assigns intervals.
  RoundPlan plan_round(int t) const;
  /// Local training and aggregation for one plan; advances the global model.
  RoundMetrics execute_round(const RoundPlan& plan);
  RoundMetrics run_round();
  std::vector<RoundMetrics> run();

  int L() const { return L_; }
  int rounds_done() const { return next_round_; }
  const ModelParams& global_params() const { return global_; }
  void set_global_params(ModelParams params);
  const std::vector<ClientDataset>& clients() const { return clients_; }
  const LabelDistribution& global_distribution() const { return global_dist_; }
  const BudgetSet& budgets() const { return budgets_; }
  const CostLedger& ledger() const { return ledger_; }
  const OptimizerConfig& optimizer() const { return optimizer_; }
  std::size_t total_gradient_updates() const { return total_updates_; }
  SelectionProblem selection_problem(int t, std::span<const int> actives) const;

 private:
  SelectionResult select(const SelectionProblem& problem) const;

  std::vector<ClientDataset> clients_;
  Objective objective_;
  OptimizerConfig optimizer_;
  TrainingConfig config_;
  std::optional<Dataset> test_set_;
  LabelDistribution global_dist_;
  int L_ = 1;
  BudgetSet budgets_;
  ModelParams global_;
  CostLedger ledger_;
  int next_round_ = 0;
  std::size_t total_updates_ = 0;
};

}  // namespace dynfl
