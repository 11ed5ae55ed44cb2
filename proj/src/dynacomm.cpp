#include "dynfl/dynacomm.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

#include "dynfl/error.hpp"
#include "dynfl/rng.hpp"

namespace dynfl {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

std::vector<int> sorted_ids(const SelectionProblem& problem, const std::vector<std::size_t>& members) {
  std::vector<int> ids;
  ids.reserve(members.size());
  for (std::size_t i : members) ids.push_back(problem.candidates[i].client_id);
  std::sort(ids.begin(), ids.end());
  return ids;
}

}  // namespace

void SelectionProblem::validate() const {
  if (global_dist.empty()) throw ValidationError("selection: global distribution is empty");
  if (ens_times < 1) throw ValidationError("selection: ens_times must be >= 1");
  if (std::isnan(server_budget) || server_budget < 0.0) throw ValidationError("selection: server budget must be >= 0");
  std::vector<int> ids;
  for (const auto& c : candidates) {
    if (c.dist.num_classes() != global_dist.num_classes()) {
      throw ValidationError("selection: candidate " + std::to_string(c.client_id) +
                            " has a different number of classes");
    }
    if (!(c.high_cost >= 0.0) || !(c.low_cost >= 0.0) || !(c.budget >= 0.0)) {
      throw ValidationError("selection: candidate " + std::to_string(c.client_id) +
                            " has a negative cost or budget");
    }
    ids.push_back(c.client_id);
  }
  std::sort(ids.begin(), ids.end());
  if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) throw ValidationError("selection: duplicate client id");
}

SubsetEvaluator::SubsetEvaluator(const SelectionProblem& problem) : problem_(problem) {
  mass_.reserve(problem.candidates.size());
  for (const auto& c : problem.candidates) {
    mass_.push_back(c.dist.weighted());
    low_total_ += c.low_cost;
  }
}

bool SubsetEvaluator::individually_feasible(std::size_t idx) const {
  const auto& c = problem_.candidates[idx];
  return c.high_cost <= c.budget;
}

double SubsetEvaluator::server_cost(const std::vector<std::size_t>& members) const {
  double cost = low_total_;
  for (std::size_t i : members) cost += problem_.candidates[i].high_cost - problem_.candidates[i].low_cost;
  return cost;
}

bool SubsetEvaluator::feasible(const std::vector<std::size_t>& members) const {
  for (std::size_t i : members) {
    if (!individually_feasible(i)) return false;
  }
  return server_cost(members) <= problem_.server_budget;
}

double SubsetEvaluator::kl(const std::vector<std::size_t>& members) const {
  const auto& q = problem_.global_dist.probs;
  std::vector<double> joint(q.size(), 0.0);
  double total = 0.0;
  for (std::size_t i : members) {
    const auto& m = mass_[i];
    for (std::size_t c = 0; c < joint.size(); ++c) joint[c] += m[c];
    total += static_cast<double>(problem_.candidates[i].dist.count);
  }
  if (total <= 0.0) return kInf;
  double kl = 0.0;
  for (std::size_t c = 0; c < joint.size(); ++c) {
    if (joint[c] <= 0.0) continue;
    if (q[c] <= 0.0) return kInf;
    const double p = joint[c] / total;
    kl += p * std::log(p / q[c]);
  }
  return std::max(kl, 0.0);
}

SelectionResult SubsetEvaluator::result(std::vector<std::size_t> members) const {
  SelectionResult r;
  r.kl = kl(members);
  r.server_cost = server_cost(members);
  r.feasible = members.empty() || feasible(members);
  r.subset = sorted_ids(problem_, members);
  return r;
}

void assert_feasible(const SelectionProblem& problem, const SelectionResult& result) {
  if (result.subset.empty()) return;
  std::vector<std::size_t> members;
  for (int id : result.subset) {
    auto it = std::find_if(problem.candidates.begin(), problem.candidates.end(),
                           [id](const Candidate& c) { return c.client_id == id; });
    if (it == problem.candidates.end()) {
      throw std::logic_error("selection returned unknown client " + std::to_string(id));
    }
    members.push_back(static_cast<std::size_t>(it - problem.candidates.begin()));
  }
  const SubsetEvaluator eval(problem);
  for (std::size_t i : members) {
    if (!eval.individually_feasible(i)) {
      throw std::logic_error("selection returned client " + std::to_string(problem.candidates[i].client_id) +
                             " whose high-frequency cost exceeds its budget");
    }
  }
  if (eval.server_cost(members) > problem.server_budget) {
    throw std::logic_error("selection exceeds the server budget");
  }
}

namespace {

struct Cell {
  double kl = kInf;
  std::vector<std::size_t> members;
};

struct PassOutcome {
  double best_kl = kInf;
  std::vector<std::size_t> best;
  std::vector<double> by_size;  // O[n][j].kl
};

// One shuffled pass. Cell (i, j) holds the best j-subset found among the
// first i shuffled candidates, either inherited from (i-1, j) or extended
// from (i-1, j-1) with candidate i-1.
PassOutcome dynacomm_pass(const SubsetEvaluator& eval, const SelectionProblem& problem,
                          const std::vector<std::size_t>& order) {
  const std::size_t n = order.size();
  std::vector<std::vector<Cell>> table(n + 1, std::vector<Cell>(n + 1));
  PassOutcome out;
  for (std::size_t i = 1; i <= n; ++i) {
    const std::size_t candidate = order[i - 1];
    const bool own_budget_ok = eval.individually_feasible(candidate);
    for (std::size_t j = 1; j <= i; ++j) {
      Cell& cell = table[i][j];
      cell = table[i - 1][j];
      if (!own_budget_ok) continue;
      std::vector<std::size_t> z = table[i - 1][j - 1].members;
      z.push_back(candidate);
      if (eval.server_cost(z) > problem.server_budget) continue;
      const double d = eval.kl(z);
      if (d < cell.kl && z.size() == j) {
        cell.kl = d;
        cell.members = z;
      }
      if (d < out.best_kl) {
        out.best_kl = d;
        out.best = std::move(z);
      }
    }
  }
  out.by_size.resize(n + 1, kInf);
  for (std::size_t j = 1; j <= n; ++j) out.by_size[j] = table[n][j].kl;
  return out;
}

std::vector<std::size_t> pass_order(std::size_t n, std::uint64_t seed, int pass) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng = make_rng(seed, "dynacomm.pass", static_cast<std::uint64_t>(pass));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

bool lex_better(const SelectionProblem& problem, double kl, const std::vector<std::size_t>& members,
                double best_kl, const std::vector<std::size_t>& best) {
  if (kl != best_kl) return kl < best_kl;
  if (members.size() != best.size()) return members.size() < best.size();
  return sorted_ids(problem, members) < sorted_ids(problem, best);
}

void check_brute_capacity(const SelectionProblem& problem) {
  if (problem.candidates.size() > kBruteForceLimit) {
    throw CapacityError("brute-force selection supports at most " + std::to_string(kBruteForceLimit) +
                        " candidates, got " + std::to_string(problem.candidates.size()));
  }
}

template <typename Visit>
void for_each_subset(std::size_t n, Visit&& visit) {
  std::vector<std::size_t> members;
  const std::uint64_t limit = std::uint64_t{1} << n;
  for (std::uint64_t mask = 1; mask < limit; ++mask) {
    members.clear();
    for (std::size_t i = 0; i < n; ++i) {
      if (mask & (std::uint64_t{1} << i)) members.push_back(i);
    }
    visit(members);
  }
}

}  // namespace

SelectionResult dynacomm_select(const SelectionProblem& problem) {
  problem.validate();
  const SubsetEvaluator eval(problem);
  double best_kl = kInf;
  std::vector<std::size_t> best;
  for (int pass = 0; pass < problem.ens_times; ++pass) {
    auto outcome = dynacomm_pass(eval, problem, pass_order(eval.size(), problem.seed, pass));
    if (outcome.best_kl < best_kl) {
      best_kl = outcome.best_kl;
      best = std::move(outcome.best);
    }
  }
  auto r = eval.result(std::move(best));
  assert_feasible(problem, r);
  return r;
}

SelectionResult brute_force_select(const SelectionProblem& problem) {
  problem.validate();
  check_brute_capacity(problem);
  const SubsetEvaluator eval(problem);
  double best_kl = kInf;
  std::vector<std::size_t> best;
  for_each_subset(eval.size(), [&](const std::vector<std::size_t>& members) {
    if (!eval.feasible(members)) return;
    const double d = eval.kl(members);
    if (d == kInf) return;
    if (best.empty() || lex_better(problem, d, members, best_kl, best)) {
      best_kl = d;
      best = members;
    }
  });
  auto r = eval.result(std::move(best));
  assert_feasible(problem, r);
  return r;
}

SelectionResult genetic_select(const SelectionProblem& problem, const GeneticParams& params) {
  problem.validate();
  if (params.population < 2) throw ValidationError("genetic: population must be >= 2");
  if (params.max_iters < 0) throw ValidationError("genetic: max_iters must be >= 0");
  if (!(params.mutation_prob >= 0.0 && params.mutation_prob <= 1.0)) {
    throw ValidationError("genetic: mutation_prob must lie in [0, 1]");
  }
  const SubsetEvaluator eval(problem);
  const std::size_t n = eval.size();
  const auto pop_size = static_cast<std::size_t>(params.population);
  Rng rng = make_rng(problem.seed, "genetic");
  std::bernoulli_distribution coin(0.5);
  std::bernoulli_distribution mutate(params.mutation_prob);
  std::uniform_int_distribution<std::size_t> pick(0, pop_size - 1);

  using Genome = std::vector<char>;
  auto members_of = [n](const Genome& g) {
    std::vector<std::size_t> m;
    for (std::size_t i = 0; i < n; ++i) {
      if (g[i]) m.push_back(i);
    }
    return m;
  };

  double best_kl = kInf;
  std::vector<std::size_t> best;
  auto fitness = [&](const Genome& g) {
    auto m = members_of(g);
    if (m.empty() || !eval.feasible(m)) return kInf;
    const double d = eval.kl(m);
    if (d < best_kl) {
      best_kl = d;
      best = std::move(m);
    }
    return d;
  };

  std::vector<Genome> population(pop_size, Genome(n, 0));
  std::vector<double> scores(pop_size);
  for (std::size_t p = 0; p < pop_size; ++p) {
    for (auto& bit : population[p]) bit = coin(rng) ? 1 : 0;
    scores[p] = fitness(population[p]);
  }
  auto tournament = [&]() {
    std::size_t winner = pick(rng);
    for (int t = 1; t < 3; ++t) {
      const std::size_t challenger = pick(rng);
      if (scores[challenger] < scores[winner]) winner = challenger;
    }
    return winner;
  };

  std::vector<Genome> next(pop_size, Genome(n, 0));
  for (int iter = 0; iter < params.max_iters; ++iter) {
    for (std::size_t p = 0; p < pop_size; ++p) {
      const Genome& a = population[tournament()];
      const Genome& b = population[tournament()];
      Genome& child = next[p];
      for (std::size_t i = 0; i < n; ++i) {
        child[i] = coin(rng) ? a[i] : b[i];
        if (mutate(rng)) child[i] = child[i] ? 0 : 1;
      }
    }
    population.swap(next);
    for (std::size_t p = 0; p < pop_size; ++p) scores[p] = fitness(population[p]);
  }
  auto r = eval.result(std::move(best));
  assert_feasible(problem, r);
  return r;
}

SelectionResult random_select(const SelectionProblem& problem, double target_fraction, std::uint64_t seed) {
  problem.validate();
  if (!(target_fraction >= 0.0 && target_fraction <= 1.0)) {
    throw ValidationError("random_select: target_fraction must lie in [0, 1]");
  }
  const SubsetEvaluator eval(problem);
  std::vector<std::size_t> eligible;
  for (std::size_t i = 0; i < eval.size(); ++i) {
    if (eval.individually_feasible(i)) eligible.push_back(i);
  }
  const auto target = static_cast<std::size_t>(
      std::floor(target_fraction * static_cast<double>(eval.size()) + 1e-9));
  const std::size_t k = std::min(target, eligible.size());
  Rng rng = make_rng(seed, "random_select");

  constexpr int kRetries = 100;
  std::vector<std::size_t> draw;
  for (int attempt = 0; attempt < kRetries && k > 0; ++attempt) {
    std::vector<std::size_t> pool = eligible;
    std::shuffle(pool.begin(), pool.end(), rng);
    draw.assign(pool.begin(), pool.begin() + static_cast<std::ptrdiff_t>(k));
    if (eval.server_cost(draw) <= problem.server_budget) break;
  }
  while (!draw.empty() && eval.server_cost(draw) > problem.server_budget) draw.pop_back();
  auto r = eval.result(std::move(draw));
  assert_feasible(problem, r);
  return r;
}

std::vector<CurvePoint> kl_curve(const SelectionProblem& problem, int max_size, CurveBackend backend) {
  problem.validate();
  const std::size_t n = problem.candidates.size();
  if (max_size < 0) throw ValidationError("kl_curve: max_size must be >= 0");
  if (backend == CurveBackend::automatic) {
    backend = n <= kBruteForceLimit ? CurveBackend::brute_force : CurveBackend::dynacomm;
  }
  const auto sizes = static_cast<std::size_t>(max_size);
  std::vector<double> best(sizes + 1, kInf);
  const SubsetEvaluator eval(problem);
  if (backend == CurveBackend::brute_force) {
    check_brute_capacity(problem);
    for_each_subset(n, [&](const std::vector<std::size_t>& members) {
      if (members.size() > sizes || !eval.feasible(members)) return;
      best[members.size()] = std::min(best[members.size()], eval.kl(members));
    });
  } else {
    for (int pass = 0; pass < problem.ens_times; ++pass) {
      const auto outcome = dynacomm_pass(eval, problem, pass_order(n, problem.seed, pass));
      for (std::size_t s = 1; s <= std::min(sizes, n); ++s) best[s] = std::min(best[s], outcome.by_size[s]);
    }
  }
  std::vector<CurvePoint> curve;
  for (std::size_t s = 1; s <= sizes; ++s) curve.push_back({static_cast<int>(s), best[s]});
  return curve;
}

}  // namespace dynfl
