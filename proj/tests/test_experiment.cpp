#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "dynfl/error.hpp"
#include "dynfl/experiment.hpp"

using namespace dynfl;
using nlohmann::json;

namespace {

json toy_config() {
  return json::parse(R"({
    "seed": 3,
    "dataset": {"num_classes": 4, "dims": 6, "per_class": 30, "test_per_class": 10},
    "partition": {"mode": "balanced_k", "k": 1, "num_clients": 8},
    "training": {"rounds": 2, "active_fraction": 0.5, "local_steps": 6, "batch_size": 5},
    "model": {"objective": "softmax", "learning_rate": 0.1}
  })");
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::stringstream ss(line);
  std::string cell;
  while (std::getline(ss, cell, sep)) out.push_back(cell);
  return out;
}

}  // namespace

TEST_CASE("minimal config receives defaults") {
  const auto c = parse_config(json::object());
  CHECK(c.training.ens_times == 4);
  CHECK(c.model.optimizer.momentum == 0.9);
  CHECK(c.model.optimizer.weight_decay == 5e-4);
  CHECK(c.model.optimizer.schedule == Schedule::cosine);
  CHECK(c.training.batch_size == 10);
  CHECK(c.training.local_epochs == 5);
  CHECK_FALSE(c.training.local_steps.has_value());
  CHECK(c.training.active_fraction == 0.1);
}

TEST_CASE("unknown fields are rejected by path") {
  auto j = toy_config();
  j["training"]["freqency"] = 4;
  try {
    parse_config(j);
    FAIL("accepted an unknown field");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("freqency") != std::string::npos);
  }
  j = toy_config();
  j["extra"] = true;
  CHECK_THROWS_AS(parse_config(j), ValidationError);
  j = toy_config();
  j["training"]["high_level"] = "z";
  CHECK_THROWS_WITH_AS(parse_config(j), doctest::Contains("training.high_level"), ValidationError);
  j = toy_config();
  j["training"]["rounds"] = "two";
  CHECK_THROWS_AS(parse_config(j), ValidationError);
}

TEST_CASE("config round-trips through JSON") {
  auto j = toy_config();
  j["training"]["budget"] = {{"mode", "fix"}, {"beta", 0.3}};
  j["training"]["selection"] = "genetic";
  const auto c1 = parse_config(j);
  const auto j1 = to_json(c1);
  const auto c2 = parse_config(j1);
  CHECK(to_json(c2) == j1);
  CHECK(c2.training.budget.mode == BudgetMode::fix);
  CHECK(c2.training.selection == SelectionMethod::genetic);
}

TEST_CASE("number formatting is locale free and round-trips") {
  for (double v : {0.1, 1.0 / 3.0, 1e-300, 12345678.25, -0.0}) CHECK(std::stod(format_number(v)) == v);
  CHECK(format_number(std::numeric_limits<double>::infinity()) == "inf");
  CHECK(format_number(3.0).find(',') == std::string::npos);
}

TEST_CASE("a two-round toy run writes two metric rows") {
  const auto dir = std::filesystem::temp_directory_path() / "dynfl_toy_run";
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  auto j = toy_config();
  j["output"] = {{"dir", dir.string()}};
  const auto cfg = dir / "config.json";
  std::ofstream(cfg) << j.dump();
  std::ostringstream log;
  REQUIRE(cmd_run(cfg.string(), {}, log) == 0);
  const auto first = read_file(dir / "metrics.csv");
  std::stringstream lines(first);
  std::string header, line;
  std::getline(lines, header);
  CHECK(header == kMetricsColumns);
  int rows = 0;
  const auto columns = split(header, ',');
  while (std::getline(lines, line)) {
    const auto cells = split(line, ',');
    REQUIRE(cells.size() == columns.size());
    CHECK(std::stoi(cells[0]) == rows + 1);
    for (const auto& cell : cells) CHECK_NOTHROW(std::stod(cell));
    ++rows;
  }
  CHECK(rows == 2);
  CHECK(std::filesystem::exists(dir / "metrics.json"));
  CHECK(std::filesystem::exists(dir / "resolved_config.json"));

  // Rerunning from the resolved config reproduces the metrics.
  const auto again = dir / "again";
  RunOverrides o;
  o.out_dir = again.string();
  o.threads = 4;
  REQUIRE(cmd_run((dir / "resolved_config.json").string(), o, log) == 0);
  CHECK(read_file(again / "metrics.csv") == first);
  std::filesystem::remove_all(dir);
}

TEST_CASE("FedAvg levels bill one sync per client per round") {
  auto j = toy_config();
  j["training"]["high_level"] = "g";
  j["training"]["low_level"] = "g";
  j["training"]["rounds"] = 3;
  const auto c = parse_config(j);
  const auto out = run_experiment(c);
  REQUIRE(out.metrics.size() == 3);
  double cumulative = 0.0;
  for (const auto& m : out.metrics) {
    CHECK(m.normalized_cost == doctest::Approx(1.0 / out.L).epsilon(1e-15));
    CHECK(m.cumulative_normalized_cost >= cumulative);
    cumulative = m.cumulative_normalized_cost;
  }
}

TEST_CASE("invalid inputs give exit code 2") {
  std::ostringstream log;
  CHECK(cmd_run("/nonexistent/config.json", {}, log) == 2);
  TheoryOptions t;
  t.etas = {1.5};
  std::ostringstream out;
  CHECK(cmd_theory(t, out) == 2);
}

TEST_CASE("theory report has a parseable max deviation") {
  TheoryOptions t;
  t.trials = 2;
  std::ostringstream out;
  CHECK(cmd_theory(t, out) == 0);
  const auto text = out.str();
  const auto pos = text.find("max_abs_deviation");
  REQUIRE(pos != std::string::npos);
  std::stringstream line(text.substr(pos));
  std::string key;
  double value = -1.0;
  line >> key >> value;
  CHECK(value >= 0.0);
  CHECK(value <= 1e-10);
  CHECK(text.find("PASS") != std::string::npos);
}
