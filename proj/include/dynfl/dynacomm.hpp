#pragma once

// Budget-constrained choice of the high-frequency client subset: the
// shuffled-ensemble dynamic program plus exhaustive, genetic and random
// baselines. All selectors minimize KL(joint(z) || global).

#include <cstddef>
#include <cstdint>
#include <vector>

#include "dynfl/datastats.hpp"

namespace dynfl {

struct Candidate {
  int client_id = 0;
  LabelDistribution dist;
  double high_cost = 0.0;  // round cost at the high level
  double low_cost = 0.0;   // round cost at the low level
  double budget = 0.0;     // tau_m
};

struct SelectionProblem {
  std::vector<Candidate> candidates;
  double server_budget = 0.0;  // tau_g, may be +inf
  LabelDistribution global_dist;
  int ens_times = 4;
  std::uint64_t seed = 0;

  void validate() const;
};

struct SelectionResult {
  std::vector<int> subset;  // ascending client ids
  double kl = 0.0;
  bool feasible = true;
  double server_cost = 0.0;  // kappa_g if subset is adopted
};

/// Evaluates a subset of candidate indices: joint-label KL, feasibility and
/// implied server cost (subset at high, everyone else at low).
class SubsetEvaluator {
 public:
  explicit SubsetEvaluator(const SelectionProblem& problem);

  bool individually_feasible(std::size_t idx) const;
  double server_cost(const std::vector<std::size_t>& members) const;
  bool feasible(const std::vector<std::size_t>& members) const;
  /// +inf for the empty set or when the joint has mass outside the global support.
  double kl(const std::vector<std::size_t>& members) const;
  SelectionResult result(std::vector<std::size_t> members) const;

  std::size_t size() const { return problem_.candidates.size(); }

 private:
  const SelectionProblem& problem_;
  std::vector<std::vector<double>> mass_;  // per-candidate label counts
  double low_total_ = 0.0;
};

SelectionResult dynacomm_select(const SelectionProblem& problem);

constexpr std::size_t kBruteForceLimit = 20;

/// Exhaustive search over all nonempty subsets. Ties prefer smaller sets, then
/// lexicographically smaller sorted id lists.
SelectionResult brute_force_select(const SelectionProblem& problem);

struct GeneticParams {
  int population = 50;
  int max_iters = 200;
  double mutation_prob = 0.01;
};

SelectionResult genetic_select(const SelectionProblem& problem, const GeneticParams& params = {});

SelectionResult random_select(const SelectionProblem& problem, double target_fraction, std::uint64_t seed);

enum class CurveBackend { automatic, brute_force, dynacomm };

struct CurvePoint {
  int size = 0;
  double best_kl = 0.0;
};

/// Best feasible KL at each exact cardinality 1..max_size.
std::vector<CurvePoint> kl_curve(const SelectionProblem& problem, int max_size,
                                 CurveBackend backend = CurveBackend::automatic);

/// Throws std::logic_error when a nonempty result breaks a budget.
void assert_feasible(const SelectionProblem& problem, const SelectionResult& result);

}  // namespace dynfl
