#include "dynfl/theory.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "dynfl/engine.hpp"
#include "dynfl/error.hpp"
#include "dynfl/rng.hpp"

namespace dynfl {

void QuadraticScenario::validate() const {
  for (const auto& d : data) {
    if (d.empty()) throw ValidationError("quadratic scenario: every client needs at least one observation");
  }
  if (!(eta > 0.0 && eta <= 1.0)) throw ValidationError("quadratic scenario: eta must lie in (0, 1]");
  if (k < 1) throw ValidationError("quadratic scenario: k must be >= 1");
  if (rounds < 0) throw ValidationError("quadratic scenario: rounds must be >= 0");
}

std::array<double, 3> QuadraticScenario::means() const {
  std::array<double, 3> out{};
  for (std::size_t i = 0; i < 3; ++i) {
    out[i] = std::accumulate(data[i].begin(), data[i].end(), 0.0) / static_cast<double>(data[i].size());
  }
  return out;
}

std::array<double, 3> QuadraticScenario::weights() const {
  const double n = static_cast<double>(data[0].size() + data[1].size() + data[2].size());
  return {static_cast<double>(data[0].size()) / n, static_cast<double>(data[1].size()) / n,
          static_cast<double>(data[2].size()) / n};
}

double QuadraticScenario::optimum() const {
  const auto m = means();
  const auto w = weights();
  return w[0] * m[0] + w[1] * m[1] + w[2] * m[2];
}

double closed_form_at(const QuadraticScenario& s, long steps) {
  s.validate();
  const double star = s.optimum();
  return star + std::pow(1.0 - s.eta, static_cast<double>(steps)) * (s.theta0 - star);
}

double closed_form(const QuadraticScenario& s) {
  return closed_form_at(s, static_cast<long>(s.k) * s.rounds);
}

namespace {

std::vector<ClientDataset> quadratic_clients(const QuadraticScenario& s) {
  std::vector<ClientDataset> clients;
  for (std::size_t i = 0; i < 3; ++i) {
    ClientDataset c;
    c.client_id = static_cast<int>(i);
    c.data.dims = 1;
    c.data.num_classes = 1;
    for (double z : s.data[i]) c.data.push_back(std::span<const double>(&z, 1), 0);
    c.label_dist = empirical_distribution(c.data.labels, 1);
    clients.push_back(std::move(c));
  }
  return clients;
}

// Full-batch plain gradient descent: constant rate, no momentum or decay.
Engine quadratic_engine(const QuadraticScenario& s, int L, int rounds) {
  Objective objective{ObjectiveKind::quadratic_mean, 1, 1, 0};
  OptimizerConfig opt;
  opt.learning_rate = s.eta;
  opt.momentum = 0.0;
  opt.weight_decay = 0.0;
  opt.schedule = Schedule::constant;
  TrainingConfig cfg;
  cfg.rounds = rounds;
  cfg.active_fraction = 1.0;
  cfg.local_steps = L;
  std::size_t largest = 0;
  for (const auto& d : s.data) largest = std::max(largest, d.size());
  cfg.batch_size = static_cast<int>(largest);
  Engine engine(quadratic_clients(s), objective, opt, cfg);
  ModelParams start = engine.global_params();
  start.values[0] = s.theta0;
  engine.set_global_params(std::move(start));
  return engine;
}

RoundPlan fixed_plan(int t, int L, std::array<int, 3> intervals) {
  RoundPlan plan;
  plan.round = t;
  plan.L = L;
  plan.actives = {0, 1, 2};
  plan.participants = plan.actives;
  for (int m = 0; m < 3; ++m) {
    const int interval = intervals[static_cast<std::size_t>(m)];
    plan.assignment.clients.push_back({m, sync_count(L, interval), interval});
    if (interval == 1) plan.z.push_back(m);
  }
  return plan;
}

}  // namespace

std::vector<double> simulate_dynamicfl_quadratic(const QuadraticScenario& s) {
  s.validate();
  Engine engine = quadratic_engine(s, s.k, s.rounds);
  std::vector<double> trajectory;
  for (int t = 0; t < s.rounds; ++t) {
    engine.execute_round(fixed_plan(t, s.k, {1, 1, s.k}));
    trajectory.push_back(engine.global_params().values[0]);
  }
  return trajectory;
}

std::vector<double> simulate_fedsgd_quadratic(const QuadraticScenario& s) {
  s.validate();
  const int steps = s.k * s.rounds;
  Engine engine = quadratic_engine(s, 1, steps);
  std::vector<double> trajectory;
  for (int t = 0; t < steps; ++t) {
    engine.execute_round(fixed_plan(t, 1, {1, 1, 1}));
    trajectory.push_back(engine.global_params().values[0]);
  }
  return trajectory;
}

QuadraticScenario random_scenario(double eta, int k, int rounds, std::uint64_t seed) {
  Rng rng(seed);
  std::uniform_int_distribution<int> count(1, 12);
  std::uniform_real_distribution<double> centre(-5.0, 5.0);
  std::normal_distribution<double> noise(0.0, 1.0);
  QuadraticScenario s;
  for (auto& d : s.data) {
    const double mu = centre(rng);
    d.resize(static_cast<std::size_t>(count(rng)));
    for (double& z : d) z = mu + noise(rng);
  }
  s.theta0 = centre(rng);
  s.eta = eta;
  s.k = k;
  s.rounds = rounds;
  return s;
}

TheoryReport run_theory_grid(const TheoryGrid& grid) {
  TheoryReport report;
  std::uint64_t index = 0;
  for (double eta : grid.etas) {
    for (int k : grid.ks) {
      for (int r : grid.rounds) {
        for (int trial = 0; trial < grid.trials; ++trial) {
          const auto s = random_scenario(eta, k, r, derive_seed(grid.seed, "theory", index++));
          s.validate();
          const auto dyn = simulate_dynamicfl_quadratic(s);
          const auto sgd = simulate_fedsgd_quadratic(s);
          TheoryCase c{eta, k, r, trial, 0.0, 0.0, 0.0};
          const double final_dyn = dyn.empty() ? s.theta0 : dyn.back();
          const double final_sgd = sgd.empty() ? s.theta0 : sgd.back();
          c.closed_form_gap = std::abs(final_dyn - closed_form(s));
          c.fedsgd_gap = std::abs(final_dyn - final_sgd);
          const double star = s.optimum();
          const double factor = std::pow(1.0 - eta, k);
          double prev = s.theta0;
          for (double theta : dyn) {
            c.contraction_gap = std::max(c.contraction_gap, std::abs((theta - star) - factor * (prev - star)));
            prev = theta;
          }
          report.cases.push_back(c);
        }
      }
    }
  }
  for (std::size_t i = 0; i < report.cases.size(); ++i) {
    const auto& c = report.cases[i];
    const double worst = std::max({c.closed_form_gap, c.fedsgd_gap, c.contraction_gap});
    if (i == 0 || worst > report.max_deviation) {
      report.max_deviation = worst;
      report.worst = i;
    }
  }
  return report;
}

}  // namespace dynfl
