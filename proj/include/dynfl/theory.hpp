#pragma once

// Three-client quadratic mean estimation, where a mixed-interval round of k
// steps contracts exactly like k steps of full-gradient descent.

#include <array>
#include <cstddef>
#include <cstdint>
#include <vector>

namespace dynfl {

struct QuadraticScenario {
  std::array<std::vector<double>, 3> data;  // observations z_{i,j}
  double theta0 = 0.0;
  double eta = 0.1;  // in (0, 1]
  int k = 1;         // high-frequency steps per round
  int rounds = 1;    // r

  void validate() const;
  std::array<double, 3> means() const;
  std::array<double, 3> weights() const;  // n_i / n
  double optimum() const;                 // theta* = sum lambda_i zbar_i
};

/// theta* + (1 - eta)^(k r) (theta0 - theta*).
double closed_form(const QuadraticScenario& s);
/// Same formula after `steps` plain gradient steps.
double closed_form_at(const QuadraticScenario& s, long steps);

/// Clients 1, 2 sync every step, client 3 once per round; one entry per round.
std::vector<double> simulate_dynamicfl_quadratic(const QuadraticScenario& s);

/// All three clients sync after every step; one entry per step (k * r total).
std::vector<double> simulate_fedsgd_quadratic(const QuadraticScenario& s);

QuadraticScenario random_scenario(double eta, int k, int rounds, std::uint64_t seed);

struct TheoryCase {
  double eta = 0.0;
  int k = 0;
  int rounds = 0;
  int trial = 0;
  double closed_form_gap = 0.0;  // |DynamicFL theta_r - closed form|
  double fedsgd_gap = 0.0;       // |DynamicFL theta_r - FedSGD theta_{kr}|
  double contraction_gap = 0.0;  // worst per-round deviation from (1-eta)^k contraction
};

struct TheoryReport {
  std::vector<TheoryCase> cases;
  double max_deviation = 0.0;
  std::size_t worst = 0;  // index into cases
  bool passed(double tolerance) const { return max_deviation <= tolerance; }
};

struct TheoryGrid {
  std::vector<double> etas{0.1, 0.5, 0.9};
  std::vector<int> ks{1, 2, 5};
  std::vector<int> rounds{1, 3, 10};
  int trials = 20;
  std::uint64_t seed = 2024;
};

TheoryReport run_theory_grid(const TheoryGrid& grid);

}  // namespace dynfl
