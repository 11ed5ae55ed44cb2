#pragma once

// Random objective instances and their analytic-vs-numeric gradient error.

#include <cstdint>
#include <random>

#include "dynfl/models.hpp"
#include "oracles.hpp"

namespace gradcheck {

struct Instance {
  dynfl::Objective objective;
  dynfl::ModelParams params;
  dynfl::Dataset data;
  std::vector<std::size_t> batch;
};

inline Instance random_instance(dynfl::ObjectiveKind kind, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_int_distribution<int> dim(1, 6);
  Instance inst;
  inst.objective.kind = kind;
  inst.objective.num_classes = kind == dynfl::ObjectiveKind::quadratic_mean ? 1 : 2 + dim(rng) % 4;
  inst.objective.feature_dim = kind == dynfl::ObjectiveKind::quadratic_mean ? 1 : dim(rng);
  inst.objective.hidden = dim(rng);
  inst.params = dynfl::zero_params(inst.objective);
  for (double& v : inst.params.values) v = 0.7 * normal(rng);
  inst.data.dims = static_cast<std::size_t>(inst.objective.feature_dim);
  inst.data.num_classes = inst.objective.num_classes;
  const int rows = 3 + dim(rng);
  std::vector<double> x(inst.data.dims);
  for (int r = 0; r < rows; ++r) {
    for (double& v : x) v = normal(rng);
    inst.data.push_back(x, static_cast<int>(rng() % static_cast<unsigned>(inst.objective.num_classes)));
    inst.batch.push_back(static_cast<std::size_t>(r));
  }
  return inst;
}

/// Max relative error between the analytic gradient and central differences.
inline double max_error(const Instance& inst, double h = 1e-5) {
  const auto analytic = dynfl::loss_and_grad(inst.objective, inst.params, inst.data, inst.batch).grad;
  auto probe = inst.params;
  const auto numeric = oracle::finite_difference(
      [&](const std::vector<double>& x) {
        probe.values = x;
        return dynfl::loss_and_grad(inst.objective, probe, inst.data, inst.batch).loss;
      },
      inst.params.values, h);
  return oracle::max_relative_error(analytic, numeric);
}

}  // namespace gradcheck
