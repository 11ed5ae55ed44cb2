#include "dynfl/comms.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dynfl/error.hpp"
#include "dynfl/rng.hpp"

namespace dynfl {

char level_name(IntervalLevel level) {
  switch (level) {
    case IntervalLevel::a: return 'a';
    case IntervalLevel::b: return 'b';
    case IntervalLevel::c: return 'c';
    case IntervalLevel::d: return 'd';
    case IntervalLevel::e: return 'e';
    case IntervalLevel::f: return 'f';
    case IntervalLevel::g: return 'g';
  }
  return '?';
}

IntervalLevel parse_level(std::string_view name) {
  if (name.size() == 1) {
    switch (name[0]) {
      case 'a': return IntervalLevel::a;
      case 'b': return IntervalLevel::b;
      case 'c': return IntervalLevel::c;
      case 'd': return IntervalLevel::d;
      case 'e': return IntervalLevel::e;
      case 'f': return IntervalLevel::f;
      case 'g': return IntervalLevel::g;
      default: break;
    }
  }
  throw ValidationError("unknown interval level '" + std::string(name) + "' (expected one of a..g)");
}

std::vector<int> sync_points(int L, int interval) {
  if (L < 1 || interval < 1) throw ValidationError("sync_points: L and interval must be >= 1");
  std::vector<int> out;
  out.reserve(static_cast<std::size_t>(L / interval + 1));
  for (int l = interval; l <= L; l += interval) out.push_back(l);
  if (out.empty() || out.back() != L) out.push_back(L);
  return out;
}

int sync_count(int L, int interval) {
  if (L < 1 || interval < 1) throw ValidationError("sync_count: L and interval must be >= 1");
  return L / interval + (L % interval == 0 ? 0 : 1);
}

double client_cost(std::size_t model_size, int syncs) {
  if (syncs < 0) throw ValidationError("client_cost: negative sync count");
  return 2.0 * static_cast<double>(model_size) * static_cast<double>(syncs);
}

const ClientFrequency& FrequencyAssignment::at(int client_id) const {
  auto it = std::lower_bound(clients.begin(), clients.end(), client_id,
                             [](const ClientFrequency& f, int id) { return f.client_id < id; });
  if (it == clients.end() || it->client_id != client_id) {
    throw ValidationError("client " + std::to_string(client_id) + " has no frequency assignment");
  }
  return *it;
}

FrequencyAssignment assign_frequencies(std::span<const int> actives, std::span<const int> z, int L,
                                       IntervalLevel high, IntervalLevel low) {
  std::vector<int> sorted_actives(actives.begin(), actives.end());
  std::sort(sorted_actives.begin(), sorted_actives.end());
  if (std::adjacent_find(sorted_actives.begin(), sorted_actives.end()) != sorted_actives.end()) {
    throw ValidationError("assign_frequencies: duplicate active client");
  }
  for (int m : z) {
    if (!std::binary_search(sorted_actives.begin(), sorted_actives.end(), m)) {
      throw ValidationError("assign_frequencies: client " + std::to_string(m) + " in z is not active");
    }
  }
  FrequencyAssignment out;
  const int i_high = updates_between_syncs(high);
  const int i_low = updates_between_syncs(low);
  out.syncs_high = sync_count(L, i_high);
  out.syncs_low = sync_count(L, i_low);
  for (int m : sorted_actives) {
    const bool in_z = std::find(z.begin(), z.end(), m) != z.end();
    out.clients.push_back({m, in_z ? out.syncs_high : out.syncs_low, in_z ? i_high : i_low});
  }
  return out;
}

RoundCost round_cost(const FrequencyAssignment& assignment, std::size_t model_size) {
  RoundCost cost;
  cost.per_client.reserve(assignment.clients.size());
  for (const auto& f : assignment.clients) {
    cost.per_client.push_back(client_cost(model_size, f.syncs));
    cost.server += cost.per_client.back();
  }
  return cost;
}

double normalized_cost(double server_cost, int L, std::size_t model_size, std::size_t active_count) {
  if (L < 1) throw ValidationError("normalized_cost: L must be >= 1");
  if (model_size == 0 || active_count == 0) throw ValidationError("normalized_cost: empty reference");
  return server_cost / (2.0 * static_cast<double>(model_size) * static_cast<double>(active_count) *
                        static_cast<double>(L));
}

std::vector<double> normalized_cost(std::span<const double> server_costs, int L, std::size_t model_size,
                                    std::size_t active_count) {
  std::vector<double> out;
  out.reserve(server_costs.size());
  for (double c : server_costs) out.push_back(normalized_cost(c, L, model_size, active_count));
  return out;
}

std::size_t active_count(double fraction, std::size_t num_clients) {
  const double exact = fraction * static_cast<double>(num_clients);
  return std::max<std::size_t>(1, static_cast<std::size_t>(std::floor(exact + 1e-9)));
}

BudgetSet make_budgets(const BudgetParams& p) {
  if (!(p.beta > 0.0 && p.beta <= 1.0)) throw ValidationError("budget.beta must lie in (0, 1]");
  if (p.num_clients == 0) throw ValidationError("make_budgets: no clients");
  if (!(p.active_fraction > 0.0 && p.active_fraction <= 1.0)) {
    throw ValidationError("active_fraction must lie in (0, 1]");
  }
  const double high = client_cost(p.model_size, sync_count(p.L, updates_between_syncs(p.high)));
  const double low = client_cost(p.model_size, sync_count(p.L, updates_between_syncs(p.low)));

  BudgetSet b;
  b.mode = p.mode;
  b.beta = p.beta;
  if (p.mode == BudgetMode::fix) {
    const auto capable = static_cast<std::size_t>(std::floor(p.beta * static_cast<double>(p.num_clients) + 1e-9));
    std::vector<int> ids(p.num_clients);
    std::iota(ids.begin(), ids.end(), 0);
    Rng rng = make_rng(p.seed, "budgets.fix");
    std::shuffle(ids.begin(), ids.end(), rng);
    b.high_capable.assign(ids.begin(), ids.begin() + static_cast<std::ptrdiff_t>(capable));
    std::sort(b.high_capable.begin(), b.high_capable.end());
    b.client.assign(p.num_clients, low);
    for (int m : b.high_capable) b.client[static_cast<std::size_t>(m)] = high;
  } else {
    const std::size_t expected = active_count(p.active_fraction, p.num_clients);
    const auto n_high = static_cast<std::size_t>(std::floor(p.beta * static_cast<double>(expected) + 1e-9));
    b.client.assign(p.num_clients, high);
    b.server = static_cast<double>(n_high) * high + static_cast<double>(expected - n_high) * low;
  }
  return b;
}

void CostLedger::record(const RoundCost& cost, std::size_t active_count) {
  server_.push_back(cost.server);
  cumulative_ += cost.server;
  const double norm = active_count == 0 ? 0.0 : normalized_cost(cost.server, L_, model_size_, active_count);
  normalized_.push_back(norm);
  cumulative_normalized_ += norm;
}

}  // namespace dynfl
