#pragma once

// Label statistics and non-IID partitioning of classification data.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace dynfl {

/// Class-probability vector plus the number of labels behind it. A count of
/// zero marks the empty distribution, which never enters KL computations.
struct LabelDistribution {
  std::vector<double> probs;
  std::size_t count = 0;

  int num_classes() const { return static_cast<int>(probs.size()); }
  bool empty() const { return count == 0; }

  static LabelDistribution empty_of(int num_classes);
  /// Normalizes a per-class histogram.
  static LabelDistribution from_counts(std::span<const std::size_t> counts);

  /// Per-class label counts recovered from probs * count.
  std::vector<double> weighted() const;
};

/// Row-major feature matrix with one integer label per row.
struct Dataset {
  std::size_t dims = 0;
  int num_classes = 0;
  std::vector<double> features;
  std::vector<int> labels;

  std::size_t size() const { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * dims, dims};
  }
  void push_back(std::span<const double> x, int label);
  std::vector<std::size_t> class_counts() const;
};

struct ClientDataset {
  int client_id = 0;
  Dataset data;
  LabelDistribution label_dist;

  std::size_t size() const { return data.size(); }
};

enum class PartitionMode { balanced_k, dirichlet };

struct PartitionSpec {
  PartitionMode mode = PartitionMode::balanced_k;
  int k = 1;
  double alpha = 0.1;
  int num_clients = 1;
  std::uint64_t seed = 0;

  void validate(int num_classes) const;
};

LabelDistribution empirical_distribution(std::span<const int> labels, int num_classes);

/// Count-weighted mixture of member distributions (labels pooled across members).
LabelDistribution joint_distribution(std::span<const LabelDistribution> members);

/// KL(p || q) in nats. 0 ln(0/q) = 0; p_c > 0 with q_c = 0 gives +inf.
double kl_divergence(const LabelDistribution& p, const LabelDistribution& q);

std::vector<ClientDataset> partition(const Dataset& dataset, const PartitionSpec& spec);

/// Shape of synthetic blobs. Class c sits at separation * e_c with isotropic
/// noise `spread`. A positive clean_separation also places it at
/// clean_separation * e_{K+c}, and dims K..2K-1 get noise clean_spread instead.
struct BlobShape {
  double spread = 1.0;
  double separation = 1.0;
  double clean_separation = 0.0;
  double clean_spread = 0.0;

  void validate(int num_classes, int dims) const;
};

/// Gaussian blobs around per-class centers. Centers are the coordinate axes
/// when dims >= num_classes, otherwise seeded random unit vectors.
Dataset synth_blobs(int num_classes, int dims, int per_class, double spread, std::uint64_t seed);

struct BlobSplit {
  Dataset train;
  Dataset test;
};

/// Train and test sets drawn around the same centers from disjoint streams.
BlobSplit synth_blobs_split(int num_classes, int dims, int train_per_class, int test_per_class,
                            const BlobShape& shape, std::uint64_t seed);
BlobSplit synth_blobs_split(int num_classes, int dims, int train_per_class, int test_per_class,
                            double spread, std::uint64_t seed);

/// CSV with a header row; last column is the integer label. When
/// num_classes <= 0 it is inferred as max label + 1.
Dataset load_csv(const std::string& path, int num_classes = 0);

}  // namespace dynfl
