#include "dynfl/experiment.hpp"

#include <algorithm>
#include <charconv>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <random>
#include <set>
#include <sstream>

#include "dynfl/error.hpp"
#include "dynfl/rng.hpp"
#include "dynfl/theory.hpp"

namespace dynfl {

using nlohmann::json;

namespace {

// Reads one JSON object, remembering which keys were consumed so leftovers
// can be reported as unknown fields.
class ObjectReader {
 public:
  ObjectReader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ValidationError(where() + " must be a JSON object");
  }

  template <typename T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return fallback;
    return convert<T>(*it, at(key));
  }

  template <typename T>
  std::optional<T> optional(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end() || it->is_null()) return std::nullopt;
    return convert<T>(*it, at(key));
  }

  const json* child(const std::string& key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string at(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it) {
      if (!seen_.count(it.key())) throw ValidationError("unknown field '" + at(it.key()) + "'");
    }
  }

 private:
  std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

  template <typename T>
  static T convert(const json& v, const std::string& path) {
    if constexpr (std::is_same_v<T, bool>) {
      if (!v.is_boolean()) throw ValidationError("'" + path + "' must be a boolean");
      return v.get<bool>();
    } else if constexpr (std::is_same_v<T, std::uint64_t>) {
      if (!v.is_number_unsigned()) throw ValidationError("'" + path + "' must be a non-negative integer");
      return v.get<std::uint64_t>();
    } else if constexpr (std::is_integral_v<T>) {
      if (!v.is_number_integer()) throw ValidationError("'" + path + "' must be an integer");
      return v.get<T>();
    } else if constexpr (std::is_floating_point_v<T>) {
      if (!v.is_number()) throw ValidationError("'" + path + "' must be a number");
      return v.get<T>();
    } else if constexpr (std::is_same_v<T, std::string>) {
      if (!v.is_string()) throw ValidationError("'" + path + "' must be a string");
      return v.get<std::string>();
    } else {
      if (!v.is_array()) throw ValidationError("'" + path + "' must be an array");
      T out;
      for (const auto& e : v) {
        if (!e.is_string()) throw ValidationError("'" + path + "' must contain strings");
        out.push_back(e.get<std::string>());
      }
      return out;
    }
  }

  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

template <typename Fn>
auto with_path(const std::string& path, Fn&& fn) {
  try {
    return fn();
  } catch (const ValidationError& e) {
    throw ValidationError(path + ": " + e.what());
  }
}

std::string mode_name(PartitionMode m) { return m == PartitionMode::balanced_k ? "balanced_k" : "dirichlet"; }
std::string mode_name(BudgetMode m) { return m == BudgetMode::fix ? "fix" : "dynamic"; }
std::string schedule_name(Schedule s) { return s == Schedule::cosine ? "cosine" : "constant"; }

}  // namespace

ExperimentConfig parse_config(const json& j) {
  ExperimentConfig c;
  ObjectReader root(j, "");
  c.seed = root.get<std::uint64_t>("seed", c.seed);

  if (const json* d = root.child("dataset")) {
    ObjectReader r(*d, "dataset");
    auto& ds = c.dataset;
    ds.kind = r.get<std::string>("kind", ds.kind);
    if (ds.kind != "synthetic" && ds.kind != "csv") {
      throw ValidationError("'dataset.kind' must be \"synthetic\" or \"csv\"");
    }
    ds.num_classes = r.get<int>("num_classes", ds.num_classes);
    ds.dims = r.get<int>("dims", ds.dims);
    ds.per_class = r.get<int>("per_class", ds.per_class);
    ds.test_per_class = r.get<int>("test_per_class", ds.test_per_class);
    ds.shape.spread = r.get<double>("spread", ds.shape.spread);
    ds.shape.separation = r.get<double>("separation", ds.shape.separation);
    ds.shape.clean_separation = r.get<double>("clean_separation", ds.shape.clean_separation);
    ds.shape.clean_spread = r.get<double>("clean_spread", ds.shape.clean_spread);
    ds.path = r.get<std::string>("path", ds.path);
    ds.test_path = r.get<std::string>("test_path", ds.test_path);
    r.finish();
  }
  if (c.dataset.kind == "synthetic") {
    const auto& ds = c.dataset;
    if (ds.num_classes <= 0) throw ValidationError("'dataset.num_classes' must be positive");
    if (ds.dims <= 0) throw ValidationError("'dataset.dims' must be positive");
    if (ds.per_class <= 0) throw ValidationError("'dataset.per_class' must be positive");
    if (ds.test_per_class <= 0) throw ValidationError("'dataset.test_per_class' must be positive");
    with_path("dataset", [&] { ds.shape.validate(ds.num_classes, ds.dims); });
  } else if (c.dataset.path.empty()) {
    throw ValidationError("'dataset.path' is required for csv datasets");
  }

  if (const json* p = root.child("partition")) {
    ObjectReader r(*p, "partition");
    const auto mode = r.get<std::string>("mode", mode_name(c.partition.mode));
    if (mode == "balanced_k") {
      c.partition.mode = PartitionMode::balanced_k;
    } else if (mode == "dirichlet") {
      c.partition.mode = PartitionMode::dirichlet;
    } else {
      throw ValidationError("'partition.mode' must be \"balanced_k\" or \"dirichlet\"");
    }
    c.partition.k = r.get<int>("k", c.partition.k);
    c.partition.alpha = r.get<double>("alpha", c.partition.alpha);
    c.partition.num_clients = r.get<int>("num_clients", c.partition.num_clients);
    r.finish();
  }
  c.partition.seed = derive_seed(c.seed, "partition");
  if (c.dataset.kind == "synthetic") {
    with_path("partition", [&] { c.partition.validate(c.dataset.num_classes); });
  }

  auto& t = c.training;
  if (const json* tj = root.child("training")) {
    ObjectReader r(*tj, "training");
    t.rounds = r.get<int>("rounds", t.rounds);
    t.active_fraction = r.get<double>("active_fraction", t.active_fraction);
    t.local_epochs = r.optional<int>("local_epochs");
    t.local_steps = r.optional<int>("local_steps");
    t.batch_size = r.get<int>("batch_size", t.batch_size);
    t.high_level = with_path("training.high_level", [&] {
      return parse_level(r.get<std::string>("high_level", std::string(1, level_name(t.high_level))));
    });
    t.low_level = with_path("training.low_level", [&] {
      return parse_level(r.get<std::string>("low_level", std::string(1, level_name(t.low_level))));
    });
    if (const json* b = r.child("budget")) {
      ObjectReader br(*b, "training.budget");
      const auto mode = br.get<std::string>("mode", mode_name(t.budget.mode));
      if (mode == "fix") {
        t.budget.mode = BudgetMode::fix;
      } else if (mode == "dynamic") {
        t.budget.mode = BudgetMode::dynamic;
      } else {
        throw ValidationError("'training.budget.mode' must be \"fix\" or \"dynamic\"");
      }
      t.budget.beta = br.get<double>("beta", t.budget.beta);
      br.finish();
    }
    t.selection = with_path("training.selection", [&] {
      return parse_selection_method(r.get<std::string>("selection", to_string(t.selection)));
    });
    t.participation = with_path("training.participation", [&] {
      return parse_participation(r.get<std::string>("participation", to_string(t.participation)));
    });
    t.ens_times = r.get<int>("ens_times", t.ens_times);
    t.eval_every = r.get<int>("eval_every", t.eval_every);
    r.finish();
  }
  if (!t.local_epochs && !t.local_steps) t.local_epochs = 5;
  t.seed = c.seed;
  with_path("training", [&] { t.validate(); });

  auto& m = c.model;
  if (const json* mj = root.child("model")) {
    ObjectReader r(*mj, "model");
    m.kind = with_path("model.objective",
                       [&] { return parse_objective_kind(r.get<std::string>("objective", to_string(m.kind))); });
    m.hidden = r.get<int>("hidden", m.hidden);
    m.optimizer.learning_rate = r.get<double>("learning_rate", m.optimizer.learning_rate);
    m.optimizer.momentum = r.get<double>("momentum", m.optimizer.momentum);
    m.optimizer.weight_decay = r.get<double>("weight_decay", m.optimizer.weight_decay);
    const auto schedule = r.get<std::string>("schedule", schedule_name(m.optimizer.schedule));
    if (schedule == "cosine") {
      m.optimizer.schedule = Schedule::cosine;
    } else if (schedule == "constant") {
      m.optimizer.schedule = Schedule::constant;
    } else {
      throw ValidationError("'model.schedule' must be \"cosine\" or \"constant\"");
    }
    r.finish();
  }
  if (m.kind == ObjectiveKind::mlp && m.hidden <= 0) throw ValidationError("'model.hidden' must be positive");
  with_path("model", [&] { m.optimizer.validate(); });

  if (const json* oj = root.child("output")) {
    ObjectReader r(*oj, "output");
    c.output.dir = r.get<std::string>("dir", c.output.dir);
    c.output.formats = r.get<std::vector<std::string>>("formats", c.output.formats);
    for (const auto& f : c.output.formats) {
      if (f != "csv" && f != "json") throw ValidationError("'output.formats' entries must be \"csv\" or \"json\"");
    }
    c.output.wall_clock = r.get<bool>("wall_clock", c.output.wall_clock);
    r.finish();
  }
  root.finish();
  return c;
}

ExperimentConfig parse_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open config '" + path + "'");
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ValidationError("malformed JSON in '" + path + "': " + e.what());
  }
  return parse_config(j);
}

json to_json(const ExperimentConfig& c) {
  json j;
  j["seed"] = c.seed;
  auto& d = j["dataset"];
  d["kind"] = c.dataset.kind;
  if (c.dataset.kind == "synthetic") {
    d["num_classes"] = c.dataset.num_classes;
    d["dims"] = c.dataset.dims;
    d["per_class"] = c.dataset.per_class;
    d["test_per_class"] = c.dataset.test_per_class;
    d["spread"] = c.dataset.shape.spread;
    d["separation"] = c.dataset.shape.separation;
    d["clean_separation"] = c.dataset.shape.clean_separation;
    d["clean_spread"] = c.dataset.shape.clean_spread;
  } else {
    d["path"] = c.dataset.path;
    d["test_path"] = c.dataset.test_path;
    d["num_classes"] = c.dataset.num_classes;
  }
  j["partition"] = {{"mode", mode_name(c.partition.mode)},
                    {"k", c.partition.k},
                    {"alpha", c.partition.alpha},
                    {"num_clients", c.partition.num_clients}};
  const auto& t = c.training;
  auto& tj = j["training"];
  tj["rounds"] = t.rounds;
  tj["active_fraction"] = t.active_fraction;
  if (t.local_epochs) tj["local_epochs"] = *t.local_epochs;
  if (t.local_steps) tj["local_steps"] = *t.local_steps;
  tj["batch_size"] = t.batch_size;
  tj["high_level"] = std::string(1, level_name(t.high_level));
  tj["low_level"] = std::string(1, level_name(t.low_level));
  tj["budget"] = {{"mode", mode_name(t.budget.mode)}, {"beta", t.budget.beta}};
  tj["selection"] = to_string(t.selection);
  tj["participation"] = to_string(t.participation);
  tj["ens_times"] = t.ens_times;
  tj["eval_every"] = t.eval_every;
  const auto& m = c.model;
  j["model"] = {{"objective", to_string(m.kind)},
                {"hidden", m.hidden},
                {"learning_rate", m.optimizer.learning_rate},
                {"momentum", m.optimizer.momentum},
                {"weight_decay", m.optimizer.weight_decay},
                {"schedule", schedule_name(m.optimizer.schedule)}};
  j["output"] = {{"dir", c.output.dir}, {"formats", c.output.formats}, {"wall_clock", c.output.wall_clock}};
  return j;
}

std::string format_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

const char* const kMetricsColumns =
    "t,test_loss,test_accuracy,subset_size,subset_kl,round_cost,normalized_cost,cumulative_normalized_cost,wall_ms";

void write_metrics_csv(std::ostream& out, const std::vector<RoundMetrics>& rows, bool wall_clock) {
  constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
  out << kMetricsColumns << '\n';
  for (const auto& r : rows) {
    const double loss = r.eval ? r.eval->loss : kNaN;
    const double acc = r.eval && r.eval->accuracy ? *r.eval->accuracy : kNaN;
    out << r.round << ',' << format_number(loss) << ',' << format_number(acc) << ',' << r.subset_size << ','
        << format_number(r.subset_kl) << ',' << format_number(r.round_cost) << ','
        << format_number(r.normalized_cost) << ',' << format_number(r.cumulative_normalized_cost) << ','
        << format_number(wall_clock ? r.wall_ms : 0.0) << '\n';
  }
}

json metrics_to_json(const std::vector<RoundMetrics>& rows, bool wall_clock) {
  // JSON has no inf/nan; non-finite values become null.
  auto num = [](double v) { return std::isfinite(v) ? json(v) : json(nullptr); };
  json arr = json::array();
  for (const auto& r : rows) {
    json o;
    o["t"] = r.round;
    o["skipped"] = r.skipped;
    o["test_loss"] = r.eval ? num(r.eval->loss) : json(nullptr);
    o["test_accuracy"] = r.eval && r.eval->accuracy ? num(*r.eval->accuracy) : json(nullptr);
    o["subset_size"] = r.subset_size;
    o["subset_kl"] = num(r.subset_kl);
    o["round_cost"] = num(r.round_cost);
    o["normalized_cost"] = num(r.normalized_cost);
    o["cumulative_normalized_cost"] = num(r.cumulative_normalized_cost);
    o["gradient_updates"] = r.gradient_updates;
    o["sync_events"] = r.sync_events;
    o["wall_ms"] = wall_clock ? r.wall_ms : 0.0;
    arr.push_back(std::move(o));
  }
  return arr;
}

PreparedExperiment prepare(const ExperimentConfig& c) {
  PreparedExperiment p;
  Dataset train;
  if (c.dataset.kind == "synthetic") {
    auto split = synth_blobs_split(c.dataset.num_classes, c.dataset.dims, c.dataset.per_class,
                                   c.dataset.test_per_class, c.dataset.shape, derive_seed(c.seed, "dataset"));
    train = std::move(split.train);
    p.test_set = std::move(split.test);
  } else {
    const int classes = c.dataset.num_classes;
    train = load_csv(c.dataset.path, 0);
    if (!c.dataset.test_path.empty()) {
      Dataset test = load_csv(c.dataset.test_path, 0);
      const int n = std::max({train.num_classes, test.num_classes, classes});
      train.num_classes = n;
      test.num_classes = n;
      if (test.dims != train.dims) throw ValidationError("test set dims differ from training set");
      p.test_set = std::move(test);
    } else {
      train.num_classes = std::max(train.num_classes, classes);
    }
  }
  p.clients = partition(train, c.partition);
  p.objective.kind = c.model.kind;
  p.objective.num_classes = c.model.kind == ObjectiveKind::quadratic_mean ? 1 : train.num_classes;
  p.objective.feature_dim = static_cast<int>(train.dims);
  p.objective.hidden = c.model.hidden;
  p.objective.validate();
  return p;
}

RunOutcome run_experiment(const ExperimentConfig& c, int threads) {
  auto prepared = prepare(c);
  TrainingConfig training = c.training;
  training.threads = threads;
  Engine engine(std::move(prepared.clients), prepared.objective, c.model.optimizer, training,
                std::move(prepared.test_set));
  RunOutcome out;
  out.metrics = engine.run();
  out.L = engine.L();
  out.model_size = engine.global_params().size();
  out.total_gradient_updates = engine.total_gradient_updates();
  return out;
}

namespace {

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw ValidationError("cannot write '" + path.string() + "'");
  f << text;
}

}  // namespace

int cmd_run(const std::string& config_path, const RunOverrides& overrides, std::ostream& log) {
  try {
    json raw;
    {
      std::ifstream in(config_path);
      if (!in) throw ValidationError("cannot open config '" + config_path + "'");
      try {
        raw = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in '" + config_path + "': " + e.what());
      }
    }
    if (overrides.seed) raw["seed"] = *overrides.seed;
    if (overrides.out_dir) raw["output"]["dir"] = *overrides.out_dir;
    const ExperimentConfig config = parse_config(raw);

    const std::filesystem::path dir(config.output.dir);
    std::filesystem::create_directories(dir);
    write_text(dir / "resolved_config.json", to_json(config).dump(2) + "\n");

    const auto outcome = run_experiment(config, overrides.threads);
    const bool want_csv =
        std::find(config.output.formats.begin(), config.output.formats.end(), "csv") != config.output.formats.end();
    const bool want_json =
        std::find(config.output.formats.begin(), config.output.formats.end(), "json") != config.output.formats.end();
    if (want_csv) {
      std::ostringstream csv;
      write_metrics_csv(csv, outcome.metrics, config.output.wall_clock);
      write_text(dir / "metrics.csv", csv.str());
    }
    if (want_json) {
      json j;
      j["L"] = outcome.L;
      j["model_size"] = outcome.model_size;
      j["total_gradient_updates"] = outcome.total_gradient_updates;
      j["rounds"] = metrics_to_json(outcome.metrics, config.output.wall_clock);
      write_text(dir / "metrics.json", j.dump(2) + "\n");
    }
    log << "rounds=" << outcome.metrics.size() << " L=" << outcome.L << " model_size=" << outcome.model_size;
    if (!outcome.metrics.empty() && outcome.metrics.back().eval && outcome.metrics.back().eval->accuracy) {
      log << " final_accuracy=" << format_number(*outcome.metrics.back().eval->accuracy);
    }
    log << " out=" << dir.string() << '\n';
    return 0;
  } catch (const ValidationError& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  } catch (const NumericError& e) {
    log << "numeric error: " << e.what() << '\n';
    return 2;
  }
}

int cmd_theory(const TheoryOptions& options, std::ostream& out) {
  try {
    for (double eta : options.etas) {
      if (!(eta > 0.0 && eta <= 1.0)) {
        throw ValidationError("learning rate " + format_number(eta) + " outside (0, 1]");
      }
    }
    for (int k : options.ks) {
      if (k < 1) throw ValidationError("k must be >= 1");
    }
    for (int r : options.rounds) {
      if (r < 1) throw ValidationError("rounds must be >= 1");
    }
    if (options.trials < 1) throw ValidationError("trials must be >= 1");
    TheoryGrid grid{options.etas, options.ks, options.rounds, options.trials, options.seed};
    const auto report = run_theory_grid(grid);
    const auto& w = report.cases[report.worst];
    const bool ok = report.passed(options.tolerance);
    out << "cases " << report.cases.size() << '\n';
    out << "max_abs_deviation " << format_number(report.max_deviation) << '\n';
    out << "tolerance " << format_number(options.tolerance) << '\n';
    out << "worst eta=" << format_number(w.eta) << " k=" << w.k << " r=" << w.rounds << " trial=" << w.trial
        << " closed_form_gap=" << format_number(w.closed_form_gap) << " fedsgd_gap=" << format_number(w.fedsgd_gap)
        << " contraction_gap=" << format_number(w.contraction_gap) << '\n';
    out << (ok ? "PASS" : "FAIL") << '\n';
    return ok ? 0 : 1;
  } catch (const ValidationError& e) {
    out << "error: " << e.what() << '\n';
    return 2;
  }
}

SelectionProblem random_selection_problem(int num_candidates, int num_classes, double alpha, std::uint64_t seed) {
  if (num_candidates < 1 || num_classes < 1 || !(alpha > 0.0)) {
    throw ValidationError("random_selection_problem: sizes and alpha must be positive");
  }
  Rng rng(seed);
  std::gamma_distribution<double> gamma(alpha, 1.0);
  std::uniform_int_distribution<int> volume(20, 200);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  constexpr double kHigh = 10.0;
  constexpr double kLow = 1.0;

  SelectionProblem p;
  std::vector<LabelDistribution> dists;
  for (int m = 0; m < num_candidates; ++m) {
    std::vector<double> shares(static_cast<std::size_t>(num_classes));
    double total = 0.0;
    for (auto& s : shares) {
      s = gamma(rng);
      total += s;
    }
    if (!(total > 0.0)) shares[0] = total = 1.0;
    const int n = volume(rng);
    std::vector<std::size_t> counts(shares.size());
    std::size_t placed = 0;
    for (std::size_t c = 0; c < shares.size(); ++c) {
      counts[c] = static_cast<std::size_t>(std::floor(n * shares[c] / total));
      placed += counts[c];
    }
    // Flooring can empty a very flat mix; keep one label on the largest share.
    if (placed == 0) counts[static_cast<std::size_t>(std::max_element(shares.begin(), shares.end()) - shares.begin())] = 1;
    Candidate cand;
    cand.client_id = m;
    cand.dist = LabelDistribution::from_counts(counts);
    cand.high_cost = kHigh;
    cand.low_cost = kLow;
    cand.budget = unit(rng) < 0.7 ? kHigh : kLow;
    dists.push_back(cand.dist);
    p.candidates.push_back(std::move(cand));
  }
  p.global_dist = joint_distribution(dists);
  // Server budget admits between 1 and all candidates at high frequency.
  const int max_high = std::min(num_candidates, 1 + static_cast<int>(unit(rng) * num_candidates));
  p.server_budget = max_high * kHigh + (num_candidates - max_high) * kLow;
  p.ens_times = 4;
  p.seed = derive_seed(seed, "selector");
  return p;
}

int cmd_selector_bench(const BenchOptions& options, std::ostream& log) {
  try {
    if (options.trials < 1) throw ValidationError("trials must be >= 1");
    const std::filesystem::path dir(options.out_dir);
    std::filesystem::create_directories(dir);
    std::ostringstream table;
    std::ostringstream curves;
    table << "n,trial,brute_kl,brute_ms,dynacomm_kl,dynacomm_ms,genetic_kl,genetic_ms,random_kl,random_ms\n";
    curves << "n,trial,size,best_kl\n";
    using clock = std::chrono::steady_clock;
    auto timed = [](auto&& fn) {
      const auto start = clock::now();
      auto r = fn();
      return std::pair{r, std::chrono::duration<double, std::milli>(clock::now() - start).count()};
    };
    for (int n : options.sizes) {
      std::size_t dominated = 0;
      std::size_t compared = 0;
      double gap = 0.0;
      double brute_ms_total = 0.0;
      double dyn_ms_total = 0.0;
      for (int trial = 0; trial < options.trials; ++trial) {
        const auto problem = random_selection_problem(
            n, options.num_classes, options.alpha,
            derive_seed(options.seed, "bench", static_cast<std::uint64_t>(n), static_cast<std::uint64_t>(trial)));
        std::string brute_kl = "capacity_error";
        std::string brute_ms = "";
        std::optional<double> brute_value;
        try {
          auto [r, ms] = timed([&] { return brute_force_select(problem); });
          brute_value = r.kl;
          brute_kl = format_number(r.kl);
          brute_ms = format_number(ms);
          brute_ms_total += ms;
        } catch (const CapacityError&) {
        }
        auto [dyn, dyn_ms] = timed([&] { return dynacomm_select(problem); });
        auto [gen, gen_ms] = timed([&] { return genetic_select(problem); });
        const double beta = problem.server_budget / (10.0 * n);
        auto [rnd, rnd_ms] = timed([&] { return random_select(problem, std::min(1.0, beta), problem.seed); });
        dyn_ms_total += dyn_ms;
        if (brute_value) {
          ++compared;
          if (*brute_value <= dyn.kl) ++dominated;
          if (std::isfinite(dyn.kl) && std::isfinite(*brute_value)) gap += dyn.kl - *brute_value;
        }
        table << n << ',' << trial << ',' << brute_kl << ',' << brute_ms << ',' << format_number(dyn.kl) << ','
              << format_number(dyn_ms) << ',' << format_number(gen.kl) << ',' << format_number(gen_ms) << ','
              << format_number(rnd.kl) << ',' << format_number(rnd_ms) << '\n';
        try {
          for (const auto& pt : kl_curve(problem, n)) {
            curves << n << ',' << trial << ',' << pt.size << ',' << format_number(pt.best_kl) << '\n';
          }
        } catch (const CapacityError&) {
        }
      }
      log << "n=" << n << " trials=" << options.trials;
      if (compared > 0) {
        log << " brute<=dynacomm " << dominated << "/" << compared
            << " mean_gap=" << format_number(gap / static_cast<double>(compared))
            << " brute_mean_ms=" << format_number(brute_ms_total / static_cast<double>(compared));
      }
      log << " dynacomm_mean_ms=" << format_number(dyn_ms_total / options.trials) << '\n';
    }
    write_text(dir / "selector_bench.csv", table.str());
    write_text(dir / "kl_curve.csv", curves.str());
    log << "wrote " << (dir / "selector_bench.csv").string() << " and " << (dir / "kl_curve.csv").string() << '\n';
    return 0;
  } catch (const ValidationError& e) {
    log << "error: " << e.what() << '\n';
    return 2;
  }
}

int cmd_partition_stats(const std::string& config_path, const RunOverrides& overrides, std::ostream& out) {
  try {
    json raw;
    {
      std::ifstream in(config_path);
      if (!in) throw ValidationError("cannot open config '" + config_path + "'");
      try {
        raw = json::parse(in);
      } catch (const json::parse_error& e) {
        throw ValidationError("malformed JSON in '" + config_path + "': " + e.what());
      }
    }
    if (overrides.seed) raw["seed"] = *overrides.seed;
    const auto config = parse_config(raw);
    const auto prepared = prepare(config);
    std::vector<LabelDistribution> dists;
    for (const auto& c : prepared.clients) dists.push_back(c.label_dist);
    const auto global = joint_distribution(dists);
    out << "client_id,size,kl_to_global";
    for (int c = 0; c < global.num_classes(); ++c) out << ",class_" << c;
    out << '\n';
    for (const auto& client : prepared.clients) {
      out << client.client_id << ',' << client.size() << ',' << format_number(kl_divergence(client.label_dist, global));
      for (std::size_t n : client.data.class_counts()) out << ',' << n;
      out << '\n';
    }
    return 0;
  } catch (const ValidationError& e) {
    out << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace dynfl
