#include <doctest.h>

#include <cmath>
#include <numbers>

#include "dynfl/error.hpp"
#include "dynfl/models.hpp"
#include "gradcheck.hpp"

using namespace dynfl;

namespace {

Dataset scalar_data(const std::vector<double>& z) {
  Dataset d;
  d.dims = 1;
  d.num_classes = 1;
  for (double v : z) d.push_back(std::span<const double>(&v, 1), 0);
  return d;
}

std::vector<std::size_t> all_rows(const Dataset& d) {
  std::vector<std::size_t> idx(d.size());
  for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
  return idx;
}

OptimizerConfig plain(double lr) {
  OptimizerConfig c;
  c.learning_rate = lr;
  c.momentum = 0.0;
  c.weight_decay = 0.0;
  c.schedule = Schedule::constant;
  return c;
}

}  // namespace

TEST_CASE("parameter layouts") {
  Objective q{ObjectiveKind::quadratic_mean, 1, 1};
  CHECK(zero_params(q).size() == 1);
  Objective s{ObjectiveKind::softmax, 10, 20};
  const auto sp = zero_params(s);
  CHECK(sp.size() == 210);
  CHECK(sp.segment("W").rows == 10);
  CHECK(sp.segment("b").offset == 200);
  Objective m{ObjectiveKind::mlp, 3, 4, 5};
  const auto mp = zero_params(m);
  CHECK(mp.size() == 5 * 4 + 5 + 3 * 5 + 3);
  CHECK_THROWS_AS(mp.segment("theta"), ValidationError);
  CHECK_FALSE(mp.same_layout(sp));
  CHECK(parse_objective_kind(to_string(ObjectiveKind::mlp)) == ObjectiveKind::mlp);
  CHECK_THROWS_AS(parse_objective_kind("cnn"), ValidationError);

  Rng rng(3);
  const auto init = init_params(m, rng);
  const auto& w1 = init.segment("W1");
  for (std::size_t i = 0; i < w1.size(); ++i) CHECK(std::abs(init.values[w1.offset + i]) <= 0.5);
  const auto& b2 = init.segment("b2");
  for (std::size_t i = 0; i < b2.size(); ++i) CHECK(init.values[b2.offset + i] == 0.0);
}

TEST_CASE("quadratic gradient vanishes at the batch mean") {
  const Objective q{ObjectiveKind::quadratic_mean, 1, 1};
  const auto d = scalar_data({1.0, 2.0, 6.0});
  auto p = zero_params(q);
  p.values[0] = 3.0;
  const auto lg = loss_and_grad(q, p, d, all_rows(d));
  CHECK(lg.grad[0] == 0.0);
  CHECK(lg.loss == doctest::Approx((4.0 + 1.0 + 9.0) / 6.0));
}

TEST_CASE("softmax at zero parameters has loss ln 2 on two balanced classes") {
  const Objective s{ObjectiveKind::softmax, 2, 3};
  Dataset d;
  d.dims = 3;
  d.num_classes = 2;
  d.push_back(std::vector<double>{1, 2, 3}, 0);
  d.push_back(std::vector<double>{-1, 0, 4}, 1);
  const auto lg = loss_and_grad(s, zero_params(s), d, all_rows(d));
  CHECK(lg.loss == doctest::Approx(std::numbers::ln2).epsilon(1e-14));
}

TEST_CASE("analytic gradients agree with finite differences") {
  for (auto kind : {ObjectiveKind::quadratic_mean, ObjectiveKind::softmax, ObjectiveKind::mlp}) {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
      const auto inst = gradcheck::random_instance(kind, seed);
      CHECK(gradcheck::max_error(inst) < 1e-4);
    }
  }
}

TEST_CASE("sgd step follows the update rule") {
  ModelParams p;
  p.values = {1.0};
  p.layout = {{"theta", 1, 1, 0}};
  OptimizerState state;
  const std::vector<double> g{0.5};
  sgd_step(p, g, state, plain(0.1), 0);
  CHECK(p.values[0] == doctest::Approx(0.95).epsilon(1e-15));

  sgd_step(p, g, state, plain(0.0), 1);
  CHECK(p.values[0] == doctest::Approx(0.95).epsilon(1e-15));

  // Momentum and decay: g' = 0.5 + 0.1 * 1 = 0.6; v1 = 0.6; v2 = 0.9 * 0.6 + g''.
  ModelParams m = p;
  m.values = {1.0};
  OptimizerState ms;
  OptimizerConfig c = plain(0.1);
  c.momentum = 0.9;
  c.weight_decay = 0.1;
  sgd_step(m, g, ms, c, 0);
  CHECK(m.values[0] == doctest::Approx(1.0 - 0.1 * 0.6));
  const double g2 = 0.5 + 0.1 * m.values[0];
  const double expected = m.values[0] - 0.1 * (0.9 * 0.6 + g2);
  sgd_step(m, g, ms, c, 1);
  CHECK(m.values[0] == doctest::Approx(expected));
}

TEST_CASE("full-batch quadratic descent contracts by (1 - eta) per step") {
  const Objective q{ObjectiveKind::quadratic_mean, 1, 1};
  const auto d = scalar_data({0.5, -2.0, 4.25, 1.0});
  const double mean = (0.5 - 2.0 + 4.25 + 1.0) / 4.0;
  for (double eta : {0.1, 0.5, 0.9, 1.0}) {
    auto p = zero_params(q);
    p.values[0] = 7.0;
    OptimizerState state;
    for (int k = 1; k <= 30; ++k) {
      const auto lg = loss_and_grad(q, p, d, all_rows(d));
      sgd_step(p, lg.grad, state, plain(eta), k - 1);
      CHECK(std::abs(p.values[0] - (mean + std::pow(1.0 - eta, k) * (7.0 - mean))) <= 1e-12);
    }
  }
}

TEST_CASE("cosine schedule endpoints") {
  OptimizerConfig c;
  c.learning_rate = 0.2;
  c.total_steps = 100;
  CHECK(c.rate_at(0) == doctest::Approx(0.2));
  CHECK(c.rate_at(50) == doctest::Approx(0.1));
  CHECK(c.rate_at(100) == doctest::Approx(0.0));
  CHECK(c.rate_at(200) == doctest::Approx(0.0));
  c.schedule = Schedule::constant;
  CHECK(c.rate_at(100) == 0.2);
  c.momentum = 1.0;
  CHECK_THROWS_AS(c.validate(), ValidationError);
}

TEST_CASE("sample_batch draws distinct rows uniformly") {
  const auto d = scalar_data(std::vector<double>(20, 1.0));
  Rng rng(9);
  CHECK(sample_batch(d, 50, rng) == all_rows(d));
  CHECK(sample_batch(d, 20, rng) == all_rows(d));

  Rng a(4), b(4);
  for (int i = 0; i < 5; ++i) CHECK(sample_batch(d, 5, a) == sample_batch(d, 5, b));

  std::vector<int> hits(20, 0);
  const int draws = 10000;
  for (int i = 0; i < draws; ++i) {
    const auto batch = sample_batch(d, 5, rng);
    CHECK(std::is_sorted(batch.begin(), batch.end()));
    CHECK(std::adjacent_find(batch.begin(), batch.end()) == batch.end());
    for (auto idx : batch) ++hits[idx];
  }
  const double p = 5.0 / 20.0;
  const double mu = draws * p;
  const double sigma = std::sqrt(draws * p * (1.0 - p));
  for (int h : hits) CHECK(std::abs(h - mu) <= 3.0 * sigma);
}

TEST_CASE("evaluation of classifiers") {
  const Objective s{ObjectiveKind::softmax, 2, 2};
  Dataset d;
  d.dims = 2;
  d.num_classes = 2;
  d.push_back(std::vector<double>{1, 0}, 0);
  d.push_back(std::vector<double>{0, 1}, 1);
  d.push_back(std::vector<double>{2, 0}, 0);
  auto p = zero_params(s);
  const auto& w = p.segment("W");
  p.values[w.offset + 0] = 5.0;  // class 0 <- x0
  p.values[w.offset + 3] = 5.0;  // class 1 <- x1
  const auto e = evaluate(s, p, d);
  CHECK(e.accuracy.value() == 1.0);
  CHECK(predict(s, p, d.row(1)) == 1);

  Dataset shuffled;
  shuffled.dims = 2;
  shuffled.num_classes = 2;
  for (std::size_t i : {2u, 0u, 1u}) shuffled.push_back(d.row(i), d.labels[i]);
  const auto e2 = evaluate(s, p, shuffled);
  CHECK(e2.accuracy.value() == e.accuracy.value());
  CHECK(e2.loss == doctest::Approx(e.loss));

  const Objective q{ObjectiveKind::quadratic_mean, 1, 1};
  CHECK_FALSE(evaluate(q, zero_params(q), scalar_data({1.0})).accuracy.has_value());
}

TEST_CASE("random parameters are at chance on balanced ten-class data") {
  const Objective s{ObjectiveKind::softmax, 10, 20};
  double total = 0.0;
  const int seeds = 30;
  for (int seed = 0; seed < seeds; ++seed) {
    const auto d = synth_blobs(10, 20, 50, 1.0, static_cast<std::uint64_t>(seed));
    auto p = zero_params(s);
    Rng rng(static_cast<std::uint64_t>(1000 + seed));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    for (double& v : p.values) v = u(rng);
    total += evaluate(s, p, d).accuracy.value();
  }
  CHECK(std::abs(total / seeds - 0.1) <= 0.03);
}

TEST_CASE("non-finite loss is reported") {
  const Objective q{ObjectiveKind::quadratic_mean, 1, 1};
  auto p = zero_params(q);
  p.values[0] = std::numeric_limits<double>::infinity();
  const auto d = scalar_data({1.0});
  CHECK_THROWS_AS(loss_and_grad(q, p, d, all_rows(d)), NumericError);
}
