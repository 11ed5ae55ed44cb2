#pragma once

// Independent reference computations used to freeze and cross-check expected
// values. Nothing here calls into the library's selection or cost code.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <set>
#include <vector>

namespace oracle {

inline std::vector<double> histogram(const std::vector<int>& labels, int classes) {
  std::vector<double> h(static_cast<std::size_t>(classes), 0.0);
  for (int y : labels) h[static_cast<std::size_t>(y)] += 1.0;
  for (double& v : h) v /= static_cast<double>(labels.size());
  return h;
}

inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] == 0.0) continue;
    if (q[i] == 0.0) return std::numeric_limits<double>::infinity();
    s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

/// Label-count vectors pooled and normalized.
inline std::vector<double> pooled(const std::vector<std::vector<double>>& counts) {
  std::vector<double> sum(counts.front().size(), 0.0);
  double total = 0.0;
  for (const auto& c : counts) {
    for (std::size_t i = 0; i < c.size(); ++i) {
      sum[i] += c[i];
      total += c[i];
    }
  }
  for (double& v : sum) v /= total;
  return sum;
}

inline std::set<int> sync_set(int L, int interval) {
  std::set<int> s;
  for (int l = 1; l <= L; ++l) {
    if (l % interval == 0 || l == L) s.insert(l);
  }
  return s;
}

struct Item {
  std::vector<double> counts;
  double high = 0.0;
  double low = 0.0;
  double budget = 0.0;
};

/// Recursive include/exclude enumeration of every nonempty feasible subset;
/// returns the minimum KL (inf when nothing is feasible).
inline double best_subset_kl(const std::vector<Item>& items, const std::vector<double>& global, double server_budget,
                             int exact_size = -1) {
  double best = std::numeric_limits<double>::infinity();
  std::vector<int> chosen;
  std::function<void(std::size_t)> rec = [&](std::size_t i) {
    if (i == items.size()) {
      if (chosen.empty()) return;
      if (exact_size >= 0 && static_cast<int>(chosen.size()) != exact_size) return;
      double server = 0.0;
      for (std::size_t k = 0; k < items.size(); ++k) {
        const bool in = std::find(chosen.begin(), chosen.end(), static_cast<int>(k)) != chosen.end();
        server += in ? items[k].high : items[k].low;
        if (in && items[k].high > items[k].budget) return;
      }
      if (server > server_budget) return;
      std::vector<std::vector<double>> members;
      for (int k : chosen) members.push_back(items[static_cast<std::size_t>(k)].counts);
      best = std::min(best, kl(pooled(members), global));
      return;
    }
    rec(i + 1);
    chosen.push_back(static_cast<int>(i));
    rec(i + 1);
    chosen.pop_back();
  };
  rec(0);
  return best;
}

/// Central differences of f at x with step h.
inline std::vector<double> finite_difference(const std::function<double(const std::vector<double>&)>& f,
                                             std::vector<double> x, double h) {
  std::vector<double> g(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double saved = x[i];
    x[i] = saved + h;
    const double up = f(x);
    x[i] = saved - h;
    const double down = f(x);
    x[i] = saved;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

inline double max_relative_error(const std::vector<double>& a, const std::vector<double>& b) {
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double scale = std::max({std::abs(a[i]), std::abs(b[i]), 1e-6});
    worst = std::max(worst, std::abs(a[i] - b[i]) / scale);
  }
  return worst;
}

}  // namespace oracle
