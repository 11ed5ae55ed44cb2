#pragma once

// Framework-free local objectives and the SGD update used by every client.

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dynfl/datastats.hpp"
#include "dynfl/rng.hpp"

namespace dynfl {

struct Segment {
  std::string name;
  std::size_t rows = 0;
  std::size_t cols = 1;
  std::size_t offset = 0;

  std::size_t size() const { return rows * cols; }
};

/// Flat parameter vector plus the named layout shared by server and clients.
struct ModelParams {
  std::vector<double> values;
  std::vector<Segment> layout;

  std::size_t size() const { return values.size(); }
  bool same_layout(const ModelParams& other) const;
  const Segment& segment(const std::string& name) const;
};

enum class ObjectiveKind { quadratic_mean, softmax, mlp };

struct Objective {
  ObjectiveKind kind = ObjectiveKind::softmax;
  int num_classes = 2;
  int feature_dim = 1;
  int hidden = 16;  // mlp only

  void validate() const;
  bool classifies() const { return kind != ObjectiveKind::quadratic_mean; }
};

std::string to_string(ObjectiveKind kind);
ObjectiveKind parse_objective_kind(const std::string& name);

/// Zero-filled parameters with the objective's layout.
ModelParams zero_params(const Objective& objective);
/// Zeros for quadratic/softmax; mlp weights uniform in +-1/sqrt(fan_in).
ModelParams init_params(const Objective& objective, Rng& rng);

struct LossGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

/// Mean loss and its gradient over the rows of `data` selected by `batch`.
/// quadratic_mean treats the single feature as the target z.
LossGrad loss_and_grad(const Objective& objective, const ModelParams& params, const Dataset& data,
                       std::span<const std::size_t> batch);

enum class Schedule { constant, cosine };

struct OptimizerConfig {
  double learning_rate = 0.01;
  double momentum = 0.9;
  double weight_decay = 5e-4;
  Schedule schedule = Schedule::cosine;
  std::int64_t total_steps = 1;  // cosine horizon

  void validate() const;
  double rate_at(std::int64_t step) const;
};

struct OptimizerState {
  std::vector<double> velocity;
};

/// grad += wd * params; v = momentum * v + grad; params -= rate(step) * v.
void sgd_step(ModelParams& params, std::span<const double> grad, OptimizerState& state,
              const OptimizerConfig& config, std::int64_t step);

/// min(B, n) distinct row indices, ascending.
std::vector<std::size_t> sample_batch(const Dataset& data, std::size_t batch_size, Rng& rng);

struct Evaluation {
  double loss = 0.0;
  std::optional<double> accuracy;  // classification objectives only
};

Evaluation evaluate(const Objective& objective, const ModelParams& params, const Dataset& data);

/// Argmax class for one feature row.
int predict(const Objective& objective, const ModelParams& params, std::span<const double> x);

}  // namespace dynfl
