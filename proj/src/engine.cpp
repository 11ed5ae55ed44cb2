#include "dynfl/engine.hpp"

#include <tbb/info.h>
#include <tbb/parallel_for.h>
#include <tbb/task_arena.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <thread>

#include "dynfl/error.hpp"
#include "dynfl/rng.hpp"

namespace dynfl {

std::string to_string(SelectionMethod method) {
  switch (method) {
    case SelectionMethod::dynacomm: return "dynacomm";
    case SelectionMethod::brute: return "brute";
    case SelectionMethod::genetic: return "genetic";
    case SelectionMethod::random: return "random";
  }
  return "?";
}

SelectionMethod parse_selection_method(const std::string& name) {
  if (name == "dynacomm") return SelectionMethod::dynacomm;
  if (name == "brute") return SelectionMethod::brute;
  if (name == "genetic") return SelectionMethod::genetic;
  if (name == "random") return SelectionMethod::random;
  throw ValidationError("unknown selection method '" + name + "' (expected dynacomm, brute, genetic or random)");
}

std::string to_string(Participation participation) {
  return participation == Participation::all ? "all" : "high_only";
}

Participation parse_participation(const std::string& name) {
  if (name == "all") return Participation::all;
  if (name == "high_only") return Participation::high_only;
  throw ValidationError("unknown participation '" + name + "' (expected all or high_only)");
}

void TrainingConfig::validate() const {
  if (rounds < 0) throw ValidationError("training.rounds must be >= 0");
  if (!(active_fraction > 0.0 && active_fraction <= 1.0)) {
    throw ValidationError("training.active_fraction must lie in (0, 1]");
  }
  if (local_epochs.has_value() == local_steps.has_value()) {
    throw ValidationError("training: set exactly one of local_epochs and local_steps");
  }
  if (local_epochs && *local_epochs <= 0) throw ValidationError("training.local_epochs must be positive");
  if (local_steps && *local_steps <= 0) throw ValidationError("training.local_steps must be positive");
  if (batch_size <= 0) throw ValidationError("training.batch_size must be positive");
  if (!(budget.beta > 0.0 && budget.beta <= 1.0)) throw ValidationError("training.budget.beta must lie in (0, 1]");
  if (ens_times < 1) throw ValidationError("training.ens_times must be >= 1");
  if (eval_every < 1) throw ValidationError("training.eval_every must be >= 1");
  if (threads < 0) throw ValidationError("threads must be >= 0");
}

int compute_L(std::span<const std::size_t> client_sizes, int epochs, int batch_size, std::size_t num_clients) {
  if (epochs <= 0 || batch_size <= 0 || num_clients == 0) {
    throw ValidationError("compute_L: epochs, batch size and client count must be positive");
  }
  const double total = static_cast<double>(std::accumulate(client_sizes.begin(), client_sizes.end(), std::size_t{0}));
  const double L = total * epochs / (static_cast<double>(num_clients) * batch_size);
  return std::max(1, static_cast<int>(std::llround(L)));
}

ModelParams weighted_average(std::span<const WeightedModel> models) {
  if (models.empty()) throw ValidationError("weighted_average: no models");
  std::vector<const WeightedModel*> order;
  order.reserve(models.size());
  double total = 0.0;
  for (const auto& m : models) {
    if (m.params == nullptr) throw ValidationError("weighted_average: null model");
    if (!(m.weight >= 0.0)) throw ValidationError("weighted_average: negative weight");
    if (!m.params->same_layout(*models.front().params)) throw ValidationError("weighted_average: layout mismatch");
    total += m.weight;
    order.push_back(&m);
  }
  if (!(total > 0.0)) throw ValidationError("weighted_average: all weights are zero");
  std::stable_sort(order.begin(), order.end(),
                   [](const WeightedModel* a, const WeightedModel* b) { return a->client_id < b->client_id; });

  ModelParams out = *order.front()->params;
  double seen = order.front()->weight;
  auto& acc = out.values;
  for (std::size_t k = 1; k < order.size(); ++k) {
    const double w = order[k]->weight;
    if (w == 0.0) continue;
    seen += w;
    const double share = w / seen;
    const auto& x = order[k]->params->values;
    for (std::size_t i = 0; i < acc.size(); ++i) acc[i] += share * (x[i] - acc[i]);
  }
  return out;
}

std::map<int, std::vector<int>> RoundPlan::sync_schedule() const {
  std::map<int, std::vector<int>> schedule;
  for (int m : participants) {
    const int interval = assignment.at(m).interval;
    for (int l : sync_points(L, interval)) schedule[l].push_back(m);
  }
  for (auto& [l, ids] : schedule) std::sort(ids.begin(), ids.end());
  return schedule;
}

std::map<int, int> RoundPlan::sync_counts() const {
  std::map<int, int> counts;
  for (const auto& [l, ids] : sync_schedule()) {
    for (int m : ids) ++counts[m];
  }
  return counts;
}

Engine::Engine(std::vector<ClientDataset> clients, Objective objective, OptimizerConfig optimizer,
               TrainingConfig config, std::optional<Dataset> test_set)
    : clients_(std::move(clients)),
      objective_(objective),
      optimizer_(optimizer),
      config_(config),
      test_set_(std::move(test_set)),
      ledger_(1, 1) {
  config_.validate();
  objective_.validate();
  if (clients_.empty()) throw ValidationError("engine: no clients");
  std::vector<LabelDistribution> dists;
  std::vector<std::size_t> sizes;
  for (std::size_t m = 0; m < clients_.size(); ++m) {
    if (clients_[m].client_id != static_cast<int>(m)) {
      throw ValidationError("engine: client ids must be 0..M-1 in order");
    }
    if (clients_[m].size() == 0) throw ValidationError("engine: client " + std::to_string(m) + " has no data");
    dists.push_back(clients_[m].label_dist);
    sizes.push_back(clients_[m].size());
  }
  global_dist_ = joint_distribution(dists);
  L_ = config_.local_steps ? *config_.local_steps
                           : compute_L(sizes, *config_.local_epochs, config_.batch_size, clients_.size());

  optimizer_.total_steps = std::max<std::int64_t>(1, static_cast<std::int64_t>(config_.rounds) * L_);
  optimizer_.validate();

  Rng init_rng = make_rng(config_.seed, "init");
  global_ = init_params(objective_, init_rng);
  ledger_ = CostLedger(L_, global_.size());

  BudgetParams bp;
  bp.mode = config_.budget.mode;
  bp.beta = config_.budget.beta;
  bp.num_clients = clients_.size();
  bp.model_size = global_.size();
  bp.L = L_;
  bp.high = config_.high_level;
  bp.low = config_.low_level;
  bp.active_fraction = config_.active_fraction;
  bp.seed = derive_seed(config_.seed, "budgets");
  budgets_ = make_budgets(bp);
}

void Engine::set_global_params(ModelParams params) {
  if (!params.same_layout(global_)) throw ValidationError("set_global_params: layout mismatch");
  global_ = std::move(params);
}

SelectionProblem Engine::selection_problem(int t, std::span<const int> actives) const {
  SelectionProblem problem;
  const double high = client_cost(global_.size(), sync_count(L_, updates_between_syncs(config_.high_level)));
  const double low = client_cost(global_.size(), sync_count(L_, updates_between_syncs(config_.low_level)));
  for (int m : actives) {
    const auto idx = static_cast<std::size_t>(m);
    problem.candidates.push_back({m, clients_[idx].label_dist, high, low, budgets_.client[idx]});
  }
  problem.server_budget = budgets_.server;
  problem.global_dist = global_dist_;
  problem.ens_times = config_.ens_times;
  problem.seed = derive_seed(config_.seed, "select", static_cast<std::uint64_t>(t));
  return problem;
}

SelectionResult Engine::select(const SelectionProblem& problem) const {
  switch (config_.selection) {
    case SelectionMethod::dynacomm: return dynacomm_select(problem);
    case SelectionMethod::brute: return brute_force_select(problem);
    case SelectionMethod::genetic: return genetic_select(problem);
    case SelectionMethod::random: return random_select(problem, config_.budget.beta, problem.seed);
  }
  throw std::logic_error("unreachable selection method");
}

RoundPlan Engine::plan_round(int t) const {
  RoundPlan plan;
  plan.round = t;
  plan.L = L_;
  const std::size_t n_active = active_count(config_.active_fraction, clients_.size());
  std::vector<int> ids(clients_.size());
  std::iota(ids.begin(), ids.end(), 0);
  Rng rng = make_rng(config_.seed, "actives", static_cast<std::uint64_t>(t));
  std::shuffle(ids.begin(), ids.end(), rng);
  plan.actives.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(n_active));
  std::sort(plan.actives.begin(), plan.actives.end());

  const auto result = select(selection_problem(t, plan.actives));
  plan.z = result.subset;
  plan.subset_kl = result.kl;
  plan.assignment = assign_frequencies(plan.actives, plan.z, L_, config_.high_level, config_.low_level);
  plan.participants = config_.participation == Participation::all ? plan.actives : plan.z;
  return plan;
}

namespace {

struct LocalClient {
  int id = 0;
  int interval = 1;
  double weight = 0.0;
  ModelParams params;
  OptimizerState opt;
  Rng rng;
};

template <typename Fn>
void for_each_client(std::vector<LocalClient>& locals, int threads, Fn&& fn) {
  if (threads == 1 || locals.size() < 2) {
    for (auto& c : locals) fn(c);
    return;
  }
  tbb::parallel_for(std::size_t{0}, locals.size(), [&](std::size_t i) { fn(locals[i]); });
}

}  // namespace

RoundMetrics Engine::execute_round(const RoundPlan& plan) {
  const auto start = std::chrono::steady_clock::now();
  RoundMetrics metrics;
  metrics.round = plan.round + 1;
  metrics.subset_size = plan.z.size();
  metrics.subset_kl = plan.subset_kl;
  const int L = plan.L;
  if (L < 1) throw ValidationError("round plan: L must be >= 1");

  std::vector<LocalClient> locals;
  for (int m : plan.participants) {
    if (m < 0 || static_cast<std::size_t>(m) >= clients_.size()) {
      throw ValidationError("round plan: unknown client " + std::to_string(m));
    }
    LocalClient c;
    c.id = m;
    c.interval = plan.assignment.at(m).interval;
    c.weight = static_cast<double>(clients_[static_cast<std::size_t>(m)].size());
    c.params = global_;
    c.rng = make_rng(config_.seed, "batch", static_cast<std::uint64_t>(plan.round), static_cast<std::uint64_t>(m));
    locals.push_back(std::move(c));
  }
  std::sort(locals.begin(), locals.end(), [](const auto& a, const auto& b) { return a.id < b.id; });

  RoundCost billed;
  billed.per_client.assign(locals.size(), 0.0);
  if (locals.empty()) {
    metrics.skipped = true;
  } else {
    const int threads = config_.threads == 0 ? static_cast<int>(std::max(1u, std::thread::hardware_concurrency()))
                                             : config_.threads;
    tbb::task_arena arena(std::min(threads, tbb::info::default_concurrency()));
    const auto batch = static_cast<std::size_t>(config_.batch_size);
    const std::int64_t step_base = static_cast<std::int64_t>(plan.round) * L;
    std::vector<std::size_t> syncing;
    std::vector<WeightedModel> uploads;
    for (int l = 1; l <= L; ++l) {
      arena.execute([&] {
        for_each_client(locals, threads, [&](LocalClient& c) {
          const auto& data = clients_[static_cast<std::size_t>(c.id)].data;
          const auto rows = sample_batch(data, batch, c.rng);
          const auto lg = loss_and_grad(objective_, c.params, data, rows);
          sgd_step(c.params, lg.grad, c.opt, optimizer_, step_base + (l - 1));
        });
      });
      syncing.clear();
      for (std::size_t i = 0; i < locals.size(); ++i) {
        if (is_sync_point(l, L, locals[i].interval)) syncing.push_back(i);
      }
      if (syncing.empty()) continue;
      metrics.sync_events += syncing.size();
      for (std::size_t i : syncing) billed.per_client[i] += client_cost(global_.size(), 1);
      if (syncing.size() == 1) continue;  // averaging one model is the identity
      uploads.clear();
      for (std::size_t i : syncing) uploads.push_back({locals[i].id, &locals[i].params, locals[i].weight});
      ModelParams avg = weighted_average(uploads);
      for (std::size_t i : syncing) locals[i].params.values = avg.values;
    }
    // Every participant syncs at l = L, so all locals now hold the aggregate.
    global_ = locals.front().params;
    metrics.gradient_updates = locals.size() * static_cast<std::size_t>(L);
  }
  for (double c : billed.per_client) billed.server += c;
  if (!std::all_of(global_.values.begin(), global_.values.end(), [](double v) { return std::isfinite(v); })) {
    throw NumericError("global model diverged in round " + std::to_string(metrics.round));
  }

  ledger_.record(billed, plan.actives.size());
  metrics.round_cost = billed.server;
  metrics.normalized_cost = ledger_.normalized().back();
  metrics.cumulative_normalized_cost = ledger_.cumulative_normalized();
  total_updates_ += metrics.gradient_updates;
  if (test_set_ && (metrics.round % config_.eval_every == 0 || metrics.round == config_.rounds)) {
    metrics.eval = evaluate(objective_, global_, *test_set_);
  }
  metrics.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start).count();
  return metrics;
}

RoundMetrics Engine::run_round() {
  const RoundPlan plan = plan_round(next_round_);
  auto metrics = execute_round(plan);
  ++next_round_;
  return metrics;
}

std::vector<RoundMetrics> Engine::run() {
  std::vector<RoundMetrics> out;
  while (next_round_ < config_.rounds) out.push_back(run_round());
  return out;
}

}  // namespace dynfl
