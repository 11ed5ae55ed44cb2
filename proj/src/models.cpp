#include "dynfl/models.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include "dynfl/error.hpp"

namespace dynfl {

bool ModelParams::same_layout(const ModelParams& other) const {
  if (values.size() != other.values.size() || layout.size() != other.layout.size()) return false;
  for (std::size_t i = 0; i < layout.size(); ++i) {
    const auto& a = layout[i];
    const auto& b = other.layout[i];
    if (a.name != b.name || a.rows != b.rows || a.cols != b.cols || a.offset != b.offset) return false;
  }
  return true;
}

const Segment& ModelParams::segment(const std::string& name) const {
  for (const auto& s : layout) {
    if (s.name == name) return s;
  }
  throw ValidationError("model has no segment '" + name + "'");
}

void Objective::validate() const {
  if (feature_dim <= 0) throw ValidationError("model.feature_dim must be positive");
  switch (kind) {
    case ObjectiveKind::quadratic_mean:
      if (feature_dim != 1) throw ValidationError("quadratic_mean requires feature_dim = 1");
      break;
    case ObjectiveKind::mlp:
      if (hidden <= 0) throw ValidationError("model.hidden must be positive");
      [[fallthrough]];
    case ObjectiveKind::softmax:
      if (num_classes < 2) throw ValidationError("classification objectives need at least 2 classes");
      break;
  }
}

std::string to_string(ObjectiveKind kind) {
  switch (kind) {
    case ObjectiveKind::quadratic_mean: return "quadratic_mean";
    case ObjectiveKind::softmax: return "softmax";
    case ObjectiveKind::mlp: return "mlp";
  }
  return "?";
}

ObjectiveKind parse_objective_kind(const std::string& name) {
  if (name == "quadratic_mean") return ObjectiveKind::quadratic_mean;
  if (name == "softmax") return ObjectiveKind::softmax;
  if (name == "mlp") return ObjectiveKind::mlp;
  throw ValidationError("unknown objective kind '" + name + "' (expected quadratic_mean, softmax or mlp)");
}

ModelParams zero_params(const Objective& objective) {
  objective.validate();
  ModelParams p;
  std::size_t offset = 0;
  auto add = [&](std::string name, std::size_t rows, std::size_t cols) {
    p.layout.push_back({std::move(name), rows, cols, offset});
    offset += rows * cols;
  };
  const auto d = static_cast<std::size_t>(objective.feature_dim);
  const auto k = static_cast<std::size_t>(objective.num_classes);
  const auto h = static_cast<std::size_t>(objective.hidden);
  switch (objective.kind) {
    case ObjectiveKind::quadratic_mean:
      add("theta", 1, 1);
      break;
    case ObjectiveKind::softmax:
      add("W", k, d);
      add("b", k, 1);
      break;
    case ObjectiveKind::mlp:
      add("W1", h, d);
      add("b1", h, 1);
      add("W2", k, h);
      add("b2", k, 1);
      break;
  }
  p.values.assign(offset, 0.0);
  return p;
}

ModelParams init_params(const Objective& objective, Rng& rng) {
  ModelParams p = zero_params(objective);
  if (objective.kind != ObjectiveKind::mlp) return p;
  for (const auto& seg : p.layout) {
    if (seg.cols == 1 && seg.name.front() == 'b') continue;
    const double bound = 1.0 / std::sqrt(static_cast<double>(seg.cols));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < seg.size(); ++i) p.values[seg.offset + i] = u(rng);
  }
  return p;
}

namespace {

// Writes softmax(W x + b) into probs; W is k x d row-major.
void softmax_forward(const double* W, const double* b, std::span<const double> x, std::size_t k,
                     std::vector<double>& probs) {
  const std::size_t d = x.size();
  probs.resize(k);
  double top = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < k; ++c) {
    double z = b[c];
    const double* w = W + c * d;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    probs[c] = z;
    top = std::max(top, z);
  }
  double norm = 0.0;
  for (auto& z : probs) norm += (z = std::exp(z - top));
  for (auto& z : probs) z /= norm;
}

void hidden_forward(const double* W1, const double* b1, std::span<const double> x, std::size_t h,
                    std::vector<double>& act) {
  const std::size_t d = x.size();
  act.resize(h);
  for (std::size_t u = 0; u < h; ++u) {
    double z = b1[u];
    const double* w = W1 + u * d;
    for (std::size_t j = 0; j < d; ++j) z += w[j] * x[j];
    act[u] = std::tanh(z);
  }
}

double cross_entropy(const std::vector<double>& probs, int label) {
  return -std::log(std::max(probs[static_cast<std::size_t>(label)], std::numeric_limits<double>::min()));
}

void check_shapes(const Objective& objective, const ModelParams& params, const Dataset& data) {
  const ModelParams expected = zero_params(objective);
  if (!params.same_layout(expected)) throw ValidationError("parameter layout does not match the objective");
  if (data.dims != static_cast<std::size_t>(objective.feature_dim)) {
    throw ValidationError("dataset dims (" + std::to_string(data.dims) + ") != objective feature_dim (" +
                          std::to_string(objective.feature_dim) + ")");
  }
  if (objective.classifies() && data.num_classes > objective.num_classes) {
    throw ValidationError("dataset has more classes than the objective");
  }
}

}  // namespace

LossGrad loss_and_grad(const Objective& objective, const ModelParams& params, const Dataset& data,
                       std::span<const std::size_t> batch) {
  if (batch.empty()) throw ValidationError("loss_and_grad: empty batch");
  check_shapes(objective, params, data);
  LossGrad out;
  out.grad.assign(params.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  const auto& v = params.values;

  switch (objective.kind) {
    case ObjectiveKind::quadratic_mean: {
      const double theta = v[0];
      double sum = 0.0;
      double loss = 0.0;
      for (std::size_t i : batch) {
        const double z = data.row(i)[0];
        sum += z;
        loss += 0.5 * (theta - z) * (theta - z);
      }
      out.loss = loss * inv_n;
      out.grad[0] = theta - sum * inv_n;
      break;
    }
    case ObjectiveKind::softmax: {
      const auto k = static_cast<std::size_t>(objective.num_classes);
      const auto d = data.dims;
      const auto& sw = params.segment("W");
      const auto& sb = params.segment("b");
      std::vector<double> probs;
      for (std::size_t i : batch) {
        const auto x = data.row(i);
        const int y = data.labels[i];
        softmax_forward(v.data() + sw.offset, v.data() + sb.offset, x, k, probs);
        out.loss += cross_entropy(probs, y);
        for (std::size_t c = 0; c < k; ++c) {
          const double delta = (probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_n;
          double* gw = out.grad.data() + sw.offset + c * d;
          for (std::size_t j = 0; j < d; ++j) gw[j] += delta * x[j];
          out.grad[sb.offset + c] += delta;
        }
      }
      out.loss *= inv_n;
      break;
    }
    case ObjectiveKind::mlp: {
      const auto k = static_cast<std::size_t>(objective.num_classes);
      const auto h = static_cast<std::size_t>(objective.hidden);
      const auto d = data.dims;
      const auto& s1 = params.segment("W1");
      const auto& sb1 = params.segment("b1");
      const auto& s2 = params.segment("W2");
      const auto& sb2 = params.segment("b2");
      std::vector<double> act;
      std::vector<double> probs;
      std::vector<double> back(h);
      for (std::size_t i : batch) {
        const auto x = data.row(i);
        const int y = data.labels[i];
        hidden_forward(v.data() + s1.offset, v.data() + sb1.offset, x, h, act);
        softmax_forward(v.data() + s2.offset, v.data() + sb2.offset, act, k, probs);
        out.loss += cross_entropy(probs, y);
        std::fill(back.begin(), back.end(), 0.0);
        for (std::size_t c = 0; c < k; ++c) {
          const double delta = (probs[c] - (static_cast<int>(c) == y ? 1.0 : 0.0)) * inv_n;
          const double* w2 = v.data() + s2.offset + c * h;
          double* gw2 = out.grad.data() + s2.offset + c * h;
          for (std::size_t u = 0; u < h; ++u) {
            gw2[u] += delta * act[u];
            back[u] += delta * w2[u];
          }
          out.grad[sb2.offset + c] += delta;
        }
        for (std::size_t u = 0; u < h; ++u) {
          const double pre = back[u] * (1.0 - act[u] * act[u]);
          double* gw1 = out.grad.data() + s1.offset + u * d;
          for (std::size_t j = 0; j < d; ++j) gw1[j] += pre * x[j];
          out.grad[sb1.offset + u] += pre;
        }
      }
      out.loss *= inv_n;
      break;
    }
  }
  if (!std::isfinite(out.loss)) throw NumericError("non-finite loss");
  return out;
}

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ValidationError("optimizer.learning_rate must be a finite non-negative number");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ValidationError("optimizer.momentum must lie in [0, 1)");
  if (!(weight_decay >= 0.0)) throw ValidationError("optimizer.weight_decay must be >= 0");
  if (schedule == Schedule::cosine && total_steps <= 0) {
    throw ValidationError("cosine schedule needs a positive step horizon");
  }
}

double OptimizerConfig::rate_at(std::int64_t step) const {
  if (schedule == Schedule::constant) return learning_rate;
  const double progress = std::clamp(static_cast<double>(step) / static_cast<double>(total_steps), 0.0, 1.0);
  return 0.5 * learning_rate * (1.0 + std::cos(std::numbers::pi * progress));
}

void sgd_step(ModelParams& params, std::span<const double> grad, OptimizerState& state,
              const OptimizerConfig& config, std::int64_t step) {
  if (grad.size() != params.size()) throw ValidationError("sgd_step: gradient size mismatch");
  auto& w = params.values;
  const double rate = config.rate_at(step);
  if (config.momentum == 0.0) {
    for (std::size_t i = 0; i < w.size(); ++i) w[i] -= rate * (grad[i] + config.weight_decay * w[i]);
    return;
  }
  if (state.velocity.size() != w.size()) state.velocity.assign(w.size(), 0.0);
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double g = grad[i] + config.weight_decay * w[i];
    state.velocity[i] = config.momentum * state.velocity[i] + g;
    w[i] -= rate * state.velocity[i];
  }
}

std::vector<std::size_t> sample_batch(const Dataset& data, std::size_t batch_size, Rng& rng) {
  const std::size_t n = data.size();
  if (n == 0) throw ValidationError("sample_batch: empty client dataset");
  std::vector<std::size_t> all(n);
  std::iota(all.begin(), all.end(), 0);
  if (batch_size >= n) return all;
  std::vector<std::size_t> out;
  out.reserve(batch_size);
  std::sample(all.begin(), all.end(), std::back_inserter(out), batch_size, rng);
  return out;
}

namespace {

void forward_probs(const Objective& objective, const ModelParams& params, std::span<const double> x,
                   std::vector<double>& act, std::vector<double>& probs) {
  const auto& v = params.values;
  const auto k = static_cast<std::size_t>(objective.num_classes);
  if (objective.kind == ObjectiveKind::softmax) {
    softmax_forward(v.data() + params.segment("W").offset, v.data() + params.segment("b").offset, x, k, probs);
  } else if (objective.kind == ObjectiveKind::mlp) {
    hidden_forward(v.data() + params.segment("W1").offset, v.data() + params.segment("b1").offset, x,
                   static_cast<std::size_t>(objective.hidden), act);
    softmax_forward(v.data() + params.segment("W2").offset, v.data() + params.segment("b2").offset, act, k,
                    probs);
  } else {
    throw ValidationError("quadratic_mean has no class predictions");
  }
}

int argmax(const std::vector<double>& probs) {
  return static_cast<int>(std::max_element(probs.begin(), probs.end()) - probs.begin());
}

}  // namespace

int predict(const Objective& objective, const ModelParams& params, std::span<const double> x) {
  std::vector<double> act;
  std::vector<double> probs;
  forward_probs(objective, params, x, act, probs);
  return argmax(probs);
}

Evaluation evaluate(const Objective& objective, const ModelParams& params, const Dataset& data) {
  if (data.size() == 0) throw ValidationError("evaluate: empty dataset");
  check_shapes(objective, params, data);
  Evaluation e;
  if (!objective.classifies()) {
    std::vector<std::size_t> all(data.size());
    std::iota(all.begin(), all.end(), 0);
    e.loss = loss_and_grad(objective, params, data, all).loss;
    return e;
  }
  std::vector<double> act;
  std::vector<double> probs;
  std::size_t correct = 0;
  double loss = 0.0;
  for (std::size_t i = 0; i < data.size(); ++i) {
    forward_probs(objective, params, data.row(i), act, probs);
    loss += cross_entropy(probs, data.labels[i]);
    if (argmax(probs) == data.labels[i]) ++correct;
  }
  e.loss = loss / static_cast<double>(data.size());
  if (!std::isfinite(e.loss)) throw NumericError("non-finite evaluation loss");
  e.accuracy = static_cast<double>(correct) / static_cast<double>(data.size());
  return e;
}

}  // namespace dynfl
