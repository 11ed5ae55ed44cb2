#include "dynfl/datastats.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <random>
#include <sstream>

#include "dynfl/error.hpp"
#include "dynfl/rng.hpp"

namespace dynfl {

LabelDistribution LabelDistribution::empty_of(int num_classes) {
  if (num_classes <= 0) throw ValidationError("num_classes must be positive");
  return {std::vector<double>(static_cast<std::size_t>(num_classes), 0.0), 0};
}

LabelDistribution LabelDistribution::from_counts(std::span<const std::size_t> counts) {
  LabelDistribution d = empty_of(static_cast<int>(counts.size()));
  d.count = std::accumulate(counts.begin(), counts.end(), std::size_t{0});
  if (d.count == 0) return d;
  const double total = static_cast<double>(d.count);
  for (std::size_t c = 0; c < counts.size(); ++c) d.probs[c] = static_cast<double>(counts[c]) / total;
  return d;
}

std::vector<double> LabelDistribution::weighted() const {
  std::vector<double> w(probs.size());
  for (std::size_t c = 0; c < probs.size(); ++c) w[c] = probs[c] * static_cast<double>(count);
  return w;
}

void Dataset::push_back(std::span<const double> x, int label) {
  if (x.size() != dims) throw ValidationError("feature row has wrong dimension");
  features.insert(features.end(), x.begin(), x.end());
  labels.push_back(label);
}

std::vector<std::size_t> Dataset::class_counts() const {
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) ++counts[static_cast<std::size_t>(y)];
  return counts;
}

void PartitionSpec::validate(int num_classes) const {
  if (num_clients <= 0) throw ValidationError("partition.num_clients must be positive");
  if (mode == PartitionMode::balanced_k) {
    if (k <= 0) throw ValidationError("partition.k must be positive");
    if (k > num_classes) {
      throw ValidationError("partition.k (" + std::to_string(k) + ") exceeds num_classes (" +
                            std::to_string(num_classes) + ")");
    }
  } else if (!(alpha > 0.0) || !std::isfinite(alpha)) {
    throw ValidationError("partition.alpha must be a positive finite number");
  }
}

LabelDistribution empirical_distribution(std::span<const int> labels, int num_classes) {
  if (num_classes <= 0) throw ValidationError("num_classes must be positive");
  std::vector<std::size_t> counts(static_cast<std::size_t>(num_classes), 0);
  for (int y : labels) {
    if (y < 0 || y >= num_classes) {
      throw ValidationError("label " + std::to_string(y) + " outside [0, " +
                            std::to_string(num_classes) + ")");
    }
    ++counts[static_cast<std::size_t>(y)];
  }
  return LabelDistribution::from_counts(counts);
}

LabelDistribution joint_distribution(std::span<const LabelDistribution> members) {
  if (members.empty()) throw ValidationError("joint_distribution of no members");
  const int classes = members.front().num_classes();
  std::vector<double> mass(static_cast<std::size_t>(classes), 0.0);
  std::size_t total = 0;
  for (const auto& m : members) {
    if (m.num_classes() != classes) throw ValidationError("joint_distribution: mismatched num_classes");
    if (m.empty()) continue;
    total += m.count;
    for (std::size_t c = 0; c < mass.size(); ++c) mass[c] += static_cast<double>(m.count) * m.probs[c];
  }
  if (total == 0) throw ValidationError("joint_distribution: every member is empty");
  LabelDistribution out{std::move(mass), total};
  for (double& p : out.probs) p /= static_cast<double>(total);
  return out;
}

double kl_divergence(const LabelDistribution& p, const LabelDistribution& q) {
  if (p.num_classes() != q.num_classes()) throw ValidationError("kl_divergence: mismatched num_classes");
  if (p.empty() || q.empty()) throw ValidationError("kl_divergence: empty distribution");
  double kl = 0.0;
  for (std::size_t c = 0; c < p.probs.size(); ++c) {
    const double pc = p.probs[c];
    if (pc <= 0.0) continue;
    const double qc = q.probs[c];
    if (qc <= 0.0) return std::numeric_limits<double>::infinity();
    kl += pc * std::log(pc / qc);
  }
  // Rounding can leave a -1e-17 residue for p == q.
  return std::max(kl, 0.0);
}

namespace {

Dataset subset(const Dataset& src, std::vector<std::size_t> idx) {
  std::sort(idx.begin(), idx.end());
  Dataset out;
  out.dims = src.dims;
  out.num_classes = src.num_classes;
  out.features.reserve(idx.size() * src.dims);
  out.labels.reserve(idx.size());
  for (std::size_t i : idx) out.push_back(src.row(i), src.labels[i]);
  return out;
}

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& d, Rng& rng) {
  std::vector<std::vector<std::size_t>> by_class(static_cast<std::size_t>(d.num_classes));
  for (std::size_t i = 0; i < d.size(); ++i) by_class[static_cast<std::size_t>(d.labels[i])].push_back(i);
  for (auto& v : by_class) std::shuffle(v.begin(), v.end(), rng);
  return by_class;
}

// Split n into parts proportional to shares; largest remainder keeps the sum exact.
std::vector<std::size_t> apportion(std::size_t n, std::span<const double> shares) {
  const double total = std::accumulate(shares.begin(), shares.end(), 0.0);
  std::vector<std::size_t> out(shares.size(), 0);
  std::vector<std::pair<double, std::size_t>> rema;
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < shares.size(); ++i) {
    const double exact = static_cast<double>(n) * shares[i] / total;
    out[i] = static_cast<std::size_t>(std::floor(exact));
    assigned += out[i];
    rema.emplace_back(exact - std::floor(exact), i);
  }
  std::stable_sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
  for (std::size_t r = 0; assigned < n; ++r, ++assigned) ++out[rema[r % rema.size()].second];
  return out;
}

std::vector<ClientDataset> finish(const Dataset& dataset, std::vector<std::vector<std::size_t>> assignment) {
  std::vector<ClientDataset> clients;
  clients.reserve(assignment.size());
  for (std::size_t m = 0; m < assignment.size(); ++m) {
    ClientDataset c;
    c.client_id = static_cast<int>(m);
    c.data = subset(dataset, std::move(assignment[m]));
    c.label_dist = empirical_distribution(c.data.labels, dataset.num_classes);
    clients.push_back(std::move(c));
  }
  return clients;
}

std::vector<ClientDataset> partition_balanced(const Dataset& dataset, const PartitionSpec& spec) {
  const auto M = static_cast<std::size_t>(spec.num_clients);
  const auto K = static_cast<std::size_t>(spec.k);
  const auto C = static_cast<std::size_t>(dataset.num_classes);
  Rng rng = make_rng(spec.seed, "partition.balanced");

  std::vector<std::size_t> class_order(C);
  std::iota(class_order.begin(), class_order.end(), 0);
  std::shuffle(class_order.begin(), class_order.end(), rng);
  std::vector<std::size_t> client_order(M);
  std::iota(client_order.begin(), client_order.end(), 0);
  std::shuffle(client_order.begin(), client_order.end(), rng);

  // K*M slots dealt round-robin over classes, then laid out class-major.
  // Since no class owns more than M slots, slots m, m+M, ... land in K
  // distinct classes.
  std::vector<std::size_t> slots_per_class(C, 0);
  for (std::size_t s = 0; s < K * M; ++s) ++slots_per_class[class_order[s % C]];
  std::vector<std::size_t> slot_class;
  slot_class.reserve(K * M);
  for (std::size_t c : class_order) slot_class.insert(slot_class.end(), slots_per_class[c], c);

  auto by_class = indices_by_class(dataset, rng);
  std::vector<std::size_t> next_chunk(C, 0);
  std::vector<std::vector<std::vector<std::size_t>>> chunks(C);
  for (std::size_t c = 0; c < C; ++c) {
    const std::size_t s = slots_per_class[c];
    if (s == 0) {
      if (!by_class[c].empty()) {
        throw ValidationError("balanced partition infeasible: class " + std::to_string(c) +
                              " gets no client slot (k*num_clients=" + std::to_string(K * M) +
                              " < num_classes=" + std::to_string(C) + "), so its samples cannot be placed");
      }
      continue;
    }
    if (by_class[c].size() < s) {
      throw ValidationError("balanced partition infeasible: class " + std::to_string(c) + " has " +
                            std::to_string(by_class[c].size()) + " samples for " + std::to_string(s) +
                            " client slots");
    }
    const std::vector<double> even(s, 1.0);
    const auto sizes = apportion(by_class[c].size(), even);
    std::size_t pos = 0;
    for (std::size_t part : sizes) {
      chunks[c].emplace_back(by_class[c].begin() + static_cast<std::ptrdiff_t>(pos),
                             by_class[c].begin() + static_cast<std::ptrdiff_t>(pos + part));
      pos += part;
    }
  }

  std::vector<std::vector<std::size_t>> assignment(M);
  for (std::size_t m = 0; m < M; ++m) {
    for (std::size_t j = 0; j < K; ++j) {
      const std::size_t c = slot_class[m + j * M];
      auto& chunk = chunks[c][next_chunk[c]++];
      auto& dst = assignment[client_order[m]];
      dst.insert(dst.end(), chunk.begin(), chunk.end());
    }
  }
  const auto [lo, hi] = std::minmax_element(assignment.begin(), assignment.end(),
                                            [](const auto& a, const auto& b) { return a.size() < b.size(); });
  if (hi->size() - lo->size() > 1) {
    throw ValidationError("balanced partition infeasible: per-class sample counts do not divide into equal client "
                          "volumes (client sizes range " + std::to_string(lo->size()) + ".." +
                          std::to_string(hi->size()) + ")");
  }
  return finish(dataset, std::move(assignment));
}

std::vector<ClientDataset> partition_dirichlet(const Dataset& dataset, const PartitionSpec& spec) {
  const auto M = static_cast<std::size_t>(spec.num_clients);
  const auto C = static_cast<std::size_t>(dataset.num_classes);
  if (dataset.size() < M) throw ValidationError("dirichlet partition: fewer samples than clients");
  Rng rng = make_rng(spec.seed, "partition.dirichlet");
  auto by_class = indices_by_class(dataset, rng);
  std::gamma_distribution<double> gamma(spec.alpha, 1.0);

  constexpr int kMaxAttempts = 1000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    std::vector<std::vector<std::size_t>> assignment(M);
    for (std::size_t c = 0; c < C; ++c) {
      std::vector<double> shares(M);
      double total = 0.0;
      for (auto& s : shares) total += (s = gamma(rng));
      if (!(total > 0.0)) std::fill(shares.begin(), shares.end(), 1.0);  // all draws underflowed
      const auto sizes = apportion(by_class[c].size(), shares);
      std::size_t pos = 0;
      for (std::size_t m = 0; m < M; ++m) {
        assignment[m].insert(assignment[m].end(), by_class[c].begin() + static_cast<std::ptrdiff_t>(pos),
                             by_class[c].begin() + static_cast<std::ptrdiff_t>(pos + sizes[m]));
        pos += sizes[m];
      }
    }
    const bool all_nonempty =
        std::none_of(assignment.begin(), assignment.end(), [](const auto& a) { return a.empty(); });
    if (all_nonempty) return finish(dataset, std::move(assignment));
  }
  throw ValidationError("dirichlet partition: could not give every client at least one sample after " +
                        std::to_string(kMaxAttempts) + " draws; lower num_clients or raise alpha");
}

std::vector<std::vector<double>> blob_centers(int num_classes, int dims, const BlobShape& shape,
                                              std::uint64_t seed) {
  std::vector<std::vector<double>> centers(static_cast<std::size_t>(num_classes),
                                           std::vector<double>(static_cast<std::size_t>(dims), 0.0));
  if (dims >= num_classes) {
    for (int c = 0; c < num_classes; ++c) {
      auto& center = centers[static_cast<std::size_t>(c)];
      center[static_cast<std::size_t>(c)] = shape.separation;
      if (shape.clean_separation > 0.0) center[static_cast<std::size_t>(num_classes + c)] = shape.clean_separation;
    }
    return centers;
  }
  Rng rng = make_rng(seed, "blobs.centers");
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& center : centers) {
    double norm = 0.0;
    for (auto& v : center) {
      v = normal(rng);
      norm += v * v;
    }
    norm = std::sqrt(norm);
    for (auto& v : center) v *= shape.separation / (norm > 0.0 ? norm : 1.0);
  }
  return centers;
}

Dataset draw_blobs(const std::vector<std::vector<double>>& centers, int dims, int per_class, const BlobShape& shape,
                   Rng& rng) {
  Dataset d;
  d.dims = static_cast<std::size_t>(dims);
  d.num_classes = static_cast<int>(centers.size());
  std::vector<double> scale(d.dims, shape.spread);
  if (shape.clean_separation > 0.0) {
    const auto k = static_cast<std::size_t>(d.num_classes);
    std::fill(scale.begin() + static_cast<std::ptrdiff_t>(k), scale.begin() + static_cast<std::ptrdiff_t>(2 * k),
              shape.clean_spread);
  }
  std::normal_distribution<double> normal(0.0, 1.0);
  std::vector<double> x(d.dims);
  for (int c = 0; c < d.num_classes; ++c) {
    for (int i = 0; i < per_class; ++i) {
      for (std::size_t j = 0; j < d.dims; ++j) {
        const double noise = normal(rng);
        x[j] = centers[static_cast<std::size_t>(c)][j] + scale[j] * noise;
      }
      d.push_back(x, c);
    }
  }
  return d;
}

void validate_blob_args(int num_classes, int dims, int per_class, const BlobShape& shape) {
  if (num_classes <= 0 || dims <= 0 || per_class <= 0) {
    throw ValidationError("synth_blobs: num_classes, dims and per_class must be positive");
  }
  shape.validate(num_classes, dims);
}

}  // namespace

std::vector<ClientDataset> partition(const Dataset& dataset, const PartitionSpec& spec) {
  if (dataset.size() == 0) throw ValidationError("partition: empty dataset");
  spec.validate(dataset.num_classes);
  return spec.mode == PartitionMode::balanced_k ? partition_balanced(dataset, spec)
                                                : partition_dirichlet(dataset, spec);
}

void BlobShape::validate(int num_classes, int dims) const {
  if (!(spread >= 0.0) || !std::isfinite(spread)) throw ValidationError("synth_blobs: spread must be >= 0");
  if (!(separation > 0.0) || !std::isfinite(separation)) {
    throw ValidationError("synth_blobs: separation must be positive");
  }
  if (!(clean_separation >= 0.0) || !std::isfinite(clean_separation)) {
    throw ValidationError("synth_blobs: clean_separation must be >= 0");
  }
  if (!(clean_spread >= 0.0) || !std::isfinite(clean_spread)) {
    throw ValidationError("synth_blobs: clean_spread must be >= 0");
  }
  if (clean_separation > 0.0 && dims < 2 * num_classes) {
    throw ValidationError("synth_blobs: clean dimensions need dims >= 2 * num_classes");
  }
}

Dataset synth_blobs(int num_classes, int dims, int per_class, double spread, std::uint64_t seed) {
  BlobShape shape;
  shape.spread = spread;
  validate_blob_args(num_classes, dims, per_class, shape);
  Rng rng = make_rng(seed, "blobs.train");
  return draw_blobs(blob_centers(num_classes, dims, shape, seed), dims, per_class, shape, rng);
}

BlobSplit synth_blobs_split(int num_classes, int dims, int train_per_class, int test_per_class,
                            const BlobShape& shape, std::uint64_t seed) {
  validate_blob_args(num_classes, dims, train_per_class, shape);
  if (test_per_class <= 0) throw ValidationError("synth_blobs: test_per_class must be positive");
  const auto centers = blob_centers(num_classes, dims, shape, seed);
  Rng train_rng = make_rng(seed, "blobs.train");
  Rng test_rng = make_rng(seed, "blobs.test");
  return {draw_blobs(centers, dims, train_per_class, shape, train_rng),
          draw_blobs(centers, dims, test_per_class, shape, test_rng)};
}

BlobSplit synth_blobs_split(int num_classes, int dims, int train_per_class, int test_per_class, double spread,
                            std::uint64_t seed) {
  BlobShape shape;
  shape.spread = spread;
  return synth_blobs_split(num_classes, dims, train_per_class, test_per_class, shape, seed);
}

Dataset load_csv(const std::string& path, int num_classes) {
  std::ifstream in(path);
  if (!in) throw ValidationError("cannot open dataset file '" + path + "'");
  std::string line;
  if (!std::getline(in, line)) throw ValidationError("dataset file '" + path + "' is empty");
  const auto columns = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) + 1;
  if (columns < 2) throw ValidationError("dataset file needs at least one feature column and a label column");

  Dataset d;
  d.dims = columns - 1;
  std::vector<double> row(d.dims);
  std::size_t line_no = 1;
  int max_label = -1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    std::stringstream ss(line);
    ss.imbue(std::locale::classic());
    std::string cell;
    std::size_t col = 0;
    int label = -1;
    while (std::getline(ss, cell, ',')) {
      try {
        std::size_t used = 0;
        if (col < d.dims) {
          row[col] = std::stod(cell, &used);
        } else if (col == d.dims) {
          label = std::stoi(cell, &used);
        }
      } catch (const std::exception&) {
        throw ValidationError(path + ":" + std::to_string(line_no) + ": cannot parse '" + cell + "'");
      }
      ++col;
    }
    if (col != columns) throw ValidationError(path + ":" + std::to_string(line_no) + ": wrong column count");
    if (label < 0) throw ValidationError(path + ":" + std::to_string(line_no) + ": negative label");
    max_label = std::max(max_label, label);
    d.push_back(row, label);
  }
  if (d.size() == 0) throw ValidationError("dataset file '" + path + "' has no rows");
  d.num_classes = num_classes > 0 ? num_classes : max_label + 1;
  if (max_label >= d.num_classes) throw ValidationError("label " + std::to_string(max_label) + " >= num_classes");
  return d;
}

}  // namespace dynfl
