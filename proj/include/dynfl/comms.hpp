#pragma once

// Communication intervals, per-round budgets and the server cost ledger.

#include <cstddef>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace dynfl {

/// Named interval levels a..g; the value is the number of local updates
/// between two syncs.
enum class IntervalLevel : int { a = 1, b = 4, c = 16, d = 32, e = 64, f = 128, g = 256 };

inline int updates_between_syncs(IntervalLevel level) { return static_cast<int>(level); }
char level_name(IntervalLevel level);
IntervalLevel parse_level(std::string_view name);

/// { l in 1..L : l mod I == 0 } plus L itself, ascending.
std::vector<int> sync_points(int L, int interval);
/// |sync_points(L, interval)| without materializing the set.
int sync_count(int L, int interval);
inline bool is_sync_point(int l, int L, int interval) { return l == L || l % interval == 0; }

/// 2 * |W| * nu: every sync is one download plus one upload.
double client_cost(std::size_t model_size, int syncs);

struct ClientFrequency {
  int client_id = 0;
  int syncs = 0;     // nu
  int interval = 1;  // I
};

struct FrequencyAssignment {
  std::vector<ClientFrequency> clients;  // ascending client id
  int syncs_high = 0;
  int syncs_low = 0;

  const ClientFrequency& at(int client_id) const;
};

/// Members of z get the high level, other actives the low level.
FrequencyAssignment assign_frequencies(std::span<const int> actives, std::span<const int> z, int L,
                                       IntervalLevel high, IntervalLevel low);

struct RoundCost {
  std::vector<double> per_client;  // same order as assignment.clients
  double server = 0.0;             // kappa_g
};

RoundCost round_cost(const FrequencyAssignment& assignment, std::size_t model_size);

/// kappa_g over the all-interval-1 reference 2 * |W| * active_count * L.
double normalized_cost(double server_cost, int L, std::size_t model_size, std::size_t active_count);
std::vector<double> normalized_cost(std::span<const double> server_costs, int L, std::size_t model_size,
                                    std::size_t active_count);

enum class BudgetMode { fix, dynamic };

struct BudgetSet {
  BudgetMode mode = BudgetMode::dynamic;
  double beta = 1.0;
  std::vector<double> client;  // tau_m indexed by client id
  double server = std::numeric_limits<double>::infinity();
  std::vector<int> high_capable;  // fix mode only, ascending
};

/// max(floor(C * M), 1), with a small tolerance so 0.3 * 10 counts as 3.
std::size_t active_count(double fraction, std::size_t num_clients);

struct BudgetParams {
  BudgetMode mode = BudgetMode::dynamic;
  double beta = 1.0;
  std::size_t num_clients = 1;
  std::size_t model_size = 1;
  int L = 1;
  IntervalLevel high = IntervalLevel::a;
  IntervalLevel low = IntervalLevel::g;
  double active_fraction = 0.1;
  std::uint64_t seed = 0;
};

BudgetSet make_budgets(const BudgetParams& params);

/// Running totals of per-round server cost.
class CostLedger {
 public:
  CostLedger(int L, std::size_t model_size) : L_(L), model_size_(model_size) {}

  void record(const RoundCost& cost, std::size_t active_count);

  std::size_t rounds() const { return server_.size(); }
  std::span<const double> server_costs() const { return server_; }
  std::span<const double> normalized() const { return normalized_; }
  double cumulative_cost() const { return cumulative_; }
  /// Sum of per-round normalized costs, in units of one all-interval-1 round.
  double cumulative_normalized() const { return cumulative_normalized_; }

 private:
  int L_;
  std::size_t model_size_;
  std::vector<double> server_;
  std::vector<double> normalized_;
  double cumulative_ = 0.0;
  double cumulative_normalized_ = 0.0;
};

}  // namespace dynfl
