#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <map>
#include <random>

#include "dynfl/datastats.hpp"
#include "dynfl/error.hpp"
#include "oracles.hpp"

using namespace dynfl;

namespace {

LabelDistribution dist(std::vector<double> probs, std::size_t count) { return {std::move(probs), count}; }

Dataset labelled(const std::vector<int>& per_class_counts) {
  Dataset d;
  d.dims = 1;
  d.num_classes = static_cast<int>(per_class_counts.size());
  double x = 0.0;
  for (int c = 0; c < d.num_classes; ++c) {
    for (int i = 0; i < per_class_counts[static_cast<std::size_t>(c)]; ++i) {
      x += 1.0;
      d.push_back(std::span<const double>(&x, 1), c);
    }
  }
  return d;
}

LabelDistribution random_dist(std::mt19937_64& rng, int classes) {
  std::uniform_int_distribution<std::size_t> n(0, 30);
  std::vector<std::size_t> counts(static_cast<std::size_t>(classes));
  for (auto& c : counts) c = n(rng);
  counts[0] += 1;
  return LabelDistribution::from_counts(counts);
}

}  // namespace

TEST_CASE("empirical_distribution counts classes") {
  const auto a = empirical_distribution(std::vector<int>{0, 0, 1, 1}, 2);
  CHECK(a.count == 4);
  CHECK(a.probs == std::vector<double>{0.5, 0.5});

  const auto b = empirical_distribution(std::vector<int>{3}, 4);
  CHECK(b.probs == std::vector<double>{0, 0, 0, 1});

  const std::vector<int> labels{0, 0, 0, 1, 2};
  const auto c = empirical_distribution(labels, 3);
  const auto expected = oracle::histogram(labels, 3);
  CHECK(c.count == 5);
  for (std::size_t i = 0; i < 3; ++i) CHECK(c.probs[i] == doctest::Approx(expected[i]).epsilon(1e-15));
  CHECK(c.probs[0] == doctest::Approx(0.6));

  CHECK(empirical_distribution(std::vector<int>{}, 3).empty());
  CHECK_THROWS_AS(empirical_distribution(std::vector<int>{0, 3}, 3), ValidationError);
}

TEST_CASE("joint_distribution is the count-weighted mixture") {
  const auto single = dist({0.25, 0.75}, 8);
  const auto j1 = joint_distribution(std::vector{single});
  CHECK(j1.probs == single.probs);
  CHECK(j1.count == 8);

  const auto j2 = joint_distribution(std::vector{dist({1, 0}, 10), dist({0, 1}, 10)});
  CHECK(j2.count == 20);
  CHECK(j2.probs == std::vector<double>{0.5, 0.5});

  const auto j3 = joint_distribution(std::vector{dist({1, 0, 0}, 2), dist({0, 1, 0}, 4), dist({0, 0, 1}, 2)});
  const auto expected = oracle::pooled({{2, 0, 0}, {0, 4, 0}, {0, 0, 2}});
  CHECK(j3.count == 8);
  for (std::size_t i = 0; i < 3; ++i) CHECK(j3.probs[i] == doctest::Approx(expected[i]));
  CHECK(j3.probs[1] == doctest::Approx(0.5));

  CHECK_THROWS_AS(joint_distribution(std::vector{dist({1, 0}, 1), dist({1, 0, 0}, 1)}), ValidationError);
  CHECK_THROWS_AS(joint_distribution(std::vector{LabelDistribution::empty_of(2)}), ValidationError);
}

TEST_CASE("kl_divergence values and zero handling") {
  const auto half = dist({0.5, 0.5}, 2);
  CHECK(kl_divergence(half, half) == 0.0);
  CHECK(kl_divergence(dist({1, 0}, 1), half) == doctest::Approx(std::log(2.0)).epsilon(1e-15));
  CHECK(kl_divergence(dist({0.6, 0.4}, 5), half) == doctest::Approx(0.020135513550688863).epsilon(1e-12));
  CHECK(std::isinf(kl_divergence(half, dist({1, 0}, 1))));
  CHECK_THROWS_AS(kl_divergence(half, dist({1, 0, 0}, 1)), ValidationError);
  CHECK_THROWS_AS(kl_divergence(LabelDistribution::empty_of(2), half), ValidationError);
}

TEST_CASE("kl_divergence is non-negative and vanishes only on equal inputs") {
  std::mt19937_64 rng(11);
  for (int trial = 0; trial < 500; ++trial) {
    const auto p = random_dist(rng, 5);
    const auto q = random_dist(rng, 5);
    const double d = kl_divergence(p, q);
    CHECK(d >= 0.0);
    CHECK(kl_divergence(p, p) <= 1e-12);
    bool equal = true;
    for (std::size_t i = 0; i < 5; ++i) equal = equal && std::abs(p.probs[i] - q.probs[i]) <= 1e-12;
    if (!equal) CHECK(d > 1e-12);
    const double expected = oracle::kl(p.probs, q.probs);
    if (std::isinf(expected)) {
      CHECK(std::isinf(d));
    } else {
      CHECK(d == doctest::Approx(expected).epsilon(1e-12));
    }
  }
}

TEST_CASE("joint of random members satisfies distribution invariants") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<LabelDistribution> members;
    for (int m = 0; m < 1 + trial % 6; ++m) members.push_back(random_dist(rng, 4));
    const auto j = joint_distribution(members);
    double sum = 0.0;
    for (double p : j.probs) {
      CHECK(p >= 0.0);
      sum += p;
    }
    CHECK(std::abs(sum - 1.0) <= 1e-9);
  }
}

TEST_CASE("balanced partition with K = 1 over two equal classes") {
  const auto d = labelled({50, 50});
  const auto clients = partition(d, {PartitionMode::balanced_k, 1, 0.0, 2, 3});
  REQUIRE(clients.size() == 2);
  std::set<int> classes;
  for (const auto& c : clients) {
    CHECK(c.size() == 50);
    const auto counts = c.data.class_counts();
    CHECK(std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }) == 1);
    classes.insert(c.data.labels.front());
  }
  CHECK(classes.size() == 2);
}

TEST_CASE("balanced partition: 10 clients, K = 2, 10 classes x 100") {
  const auto d = labelled(std::vector<int>(10, 100));
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    const auto clients = partition(d, {PartitionMode::balanced_k, 2, 0.0, 10, seed});
    std::vector<std::size_t> per_class(10, 0);
    for (const auto& c : clients) {
      CHECK(c.size() == 100);
      const auto counts = c.data.class_counts();
      CHECK(std::count_if(counts.begin(), counts.end(), [](std::size_t n) { return n > 0; }) == 2);
      for (std::size_t k = 0; k < 10; ++k) per_class[k] += counts[k];
    }
    CHECK(per_class == std::vector<std::size_t>(10, 100));
  }
}

TEST_CASE("balanced partition rejects infeasible layouts") {
  CHECK_THROWS_AS(partition(labelled({10, 10, 10}), {PartitionMode::balanced_k, 4, 0.0, 2, 0}), ValidationError);
  // 1 slot for 3 classes: two classes would be dropped.
  CHECK_THROWS_AS(partition(labelled({10, 10, 10}), {PartitionMode::balanced_k, 1, 0.0, 1, 0}), ValidationError);
  // Unequal class sizes cannot give equal client volumes.
  CHECK_THROWS_AS(partition(labelled({10, 30}), {PartitionMode::balanced_k, 1, 0.0, 2, 0}), ValidationError);
  CHECK_THROWS_AS(partition(Dataset{}, {PartitionMode::balanced_k, 1, 0.0, 2, 0}), ValidationError);
}

TEST_CASE("dirichlet partition conserves samples and matches the global distribution") {
  const auto d = synth_blobs(6, 3, 40, 0.5, 9);
  const auto global = empirical_distribution(d.labels, d.num_classes);
  for (double alpha : {0.05, 0.5, 5.0}) {
    const auto clients = partition(d, {PartitionMode::dirichlet, 1, alpha, 8, 21});
    std::multiset<std::vector<double>> seen;
    std::vector<std::size_t> per_class(6, 0);
    std::vector<LabelDistribution> dists;
    for (const auto& c : clients) {
      CHECK(c.size() > 0);
      const auto counts = c.data.class_counts();
      for (std::size_t k = 0; k < 6; ++k) per_class[k] += counts[k];
      for (std::size_t i = 0; i < c.size(); ++i) {
        auto row = c.data.row(i);
        std::vector<double> key(row.begin(), row.end());
        key.push_back(c.data.labels[i]);
        seen.insert(key);
      }
      dists.push_back(c.label_dist);
    }
    CHECK(per_class == d.class_counts());
    std::multiset<std::vector<double>> original;
    for (std::size_t i = 0; i < d.size(); ++i) {
      auto row = d.row(i);
      std::vector<double> key(row.begin(), row.end());
      key.push_back(d.labels[i]);
      original.insert(key);
    }
    CHECK(seen == original);
    const auto joint = joint_distribution(dists);
    for (std::size_t k = 0; k < 6; ++k) CHECK(std::abs(joint.probs[k] - global.probs[k]) <= 1e-9);
  }
}

TEST_CASE("partition is deterministic given the seed") {
  const auto d = synth_blobs(5, 2, 20, 1.0, 1);
  for (auto mode : {PartitionMode::balanced_k, PartitionMode::dirichlet}) {
    const PartitionSpec spec{mode, 2, 0.3, 5, 77};
    const auto a = partition(d, spec);
    const auto b = partition(d, spec);
    REQUIRE(a.size() == b.size());
    for (std::size_t m = 0; m < a.size(); ++m) {
      CHECK(a[m].data.labels == b[m].data.labels);
      CHECK(a[m].data.features == b[m].data.features);
    }
  }
  CHECK_THROWS_AS(partition(d, {PartitionMode::dirichlet, 1, 0.0, 2, 0}), ValidationError);
}

TEST_CASE("synth_blobs construction") {
  const auto d = synth_blobs(2, 2, 50, 0.3, 4);
  CHECK(d.size() == 100);
  CHECK(d.class_counts() == std::vector<std::size_t>{50, 50});

  const auto flat = synth_blobs(3, 5, 4, 0.0, 4);
  for (std::size_t i = 0; i < flat.size(); ++i) {
    const auto row = flat.row(i);
    for (std::size_t j = 0; j < 5; ++j) CHECK(row[j] == (static_cast<int>(j) == flat.labels[i] ? 1.0 : 0.0));
  }
  const auto a = synth_blobs(3, 2, 10, 1.0, 99);
  const auto b = synth_blobs(3, 2, 10, 1.0, 99);
  CHECK(a.features == b.features);
  CHECK(a.labels == b.labels);

  const auto split = synth_blobs_split(3, 2, 10, 5, 1.0, 99);
  CHECK(split.train.features == a.features);
  CHECK(split.test.size() == 15);
  CHECK_THROWS_AS(synth_blobs(0, 2, 10, 1.0, 1), ValidationError);
}

TEST_CASE("load_csv reads features and trailing label") {
  const std::string path = "dynfl_test_dataset.csv";
  {
    std::ofstream f(path);
    f << "x0,x1,label\n0.5,1.5,0\n-1,2e-1,2\n";
  }
  const auto d = load_csv(path);
  CHECK(d.dims == 2);
  CHECK(d.num_classes == 3);
  CHECK(d.labels == std::vector<int>{0, 2});
  CHECK(d.features == std::vector<double>{0.5, 1.5, -1.0, 0.2});
  {
    std::ofstream f(path);
    f << "x0,label\nabc,1\n";
  }
  CHECK_THROWS_AS(load_csv(path), ValidationError);
  std::remove(path.c_str());
}

TEST_CASE("blob shape with clean dimensions") {
  BlobShape shape{2.0, 1.5, 0.3, 0.0};
  const auto split = synth_blobs_split(3, 7, 4, 2, shape, 12);
  for (std::size_t i = 0; i < split.train.size(); ++i) {
    const auto row = split.train.row(i);
    const auto c = static_cast<std::size_t>(split.train.labels[i]);
    // Zero clean noise leaves the clean coordinates exactly on the center.
    for (std::size_t j = 3; j < 6; ++j) CHECK(row[j] == (j == 3 + c ? 0.3 : 0.0));
  }
  const BlobShape plain{0.7, 1.0, 0.0, 0.0};
  CHECK(synth_blobs_split(3, 7, 4, 2, plain, 12).train.features == synth_blobs_split(3, 7, 4, 2, 0.7, 12).train.features);
  CHECK_THROWS_AS(synth_blobs_split(3, 5, 4, 2, shape, 12), ValidationError);
  shape.separation = 0.0;
  CHECK_THROWS_AS(synth_blobs_split(3, 7, 4, 2, shape, 12), ValidationError);
}
