// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

#include "wiseopen/common.hpp"

namespace wiseopen {

struct OpenSetConfig {
  std::size_t dim = 16;
  std::size_t k_seen = 6;
  std::size_t k_unseen = 4;
  std::size_t labels_per_class = 25;
  std::size_t unlabeled_per_class = 100;
  std::size_t val_per_class = 20;
  std::size_t test_per_class = 50;
  double cluster_separation = 4.0;
  double cluster_stddev = 1.0;
  double unfriendly_fraction = 0.0;
  double unfriendly_noise_scale = 1.0;
  std::uint64_t seed = 0;

  void validate() const;
  double mismatch_ratio() const {
    return static_cast<double>(k_unseen) / static_cast<double>(k_seen + k_unseen);
  }
};

/// A labeled instance. `label` is a class id; seen classes are [0, K) and, in
/// the test split only, unseen classes use ids >= K.
struct LabeledExample {
  std::size_t idx = 0;
  Vector x;
  int label = 0;

  bool operator==(const LabeledExample&) const = default;
};

/// An unlabeled instance. The ground-truth fields exist for evaluation only;
/// no training path reads them.
struct UnlabeledExample {
  std::size_t idx = 0;
  Vector x;
  std::optional<int> hidden_truth;
  std::optional<bool> planted_unfriendly;

  bool operator==(const UnlabeledExample&) const = default;
};

struct OpenSetData {
  std::size_t dim = 0;
  std::size_t k_seen = 0;
  std::vector<LabeledExample> S;
  std::vector<UnlabeledExample> U;
  std::vector<LabeledExample> V;
  std::vector<LabeledExample> T;

  bool operator==(const OpenSetData&) const = default;
};

OpenSetData make_openset_mixture(const OpenSetConfig& cfg);

/// Class means: a regular simplex with edge length `separation`, embedded by a
/// seeded random orthonormal frame. Requires dim >= n_classes - 1.
std::vector<Vector> place_class_means(std::size_t dim, std::size_t n_classes,
                                      double separation, std::uint64_t seed);

struct AugmentConfig {
  double weak_jitter = 0.1;
  double strong_jitter = 0.4;
  double mask_fraction = 0.0;
};

/// x + N(0, weak_jitter^2 I).
Vector weak_augment(std::span<const double> x, std::uint64_t seed, const AugmentConfig& cfg);

/// Zero round(mask_fraction * dim) randomly chosen coordinates, then add
/// N(0, strong_jitter^2 I).
Vector strong_augment(std::span<const double> x, std::uint64_t seed, const AugmentConfig& cfg);

/// CSV with header `split,idx,label,hidden_truth,planted_unfriendly,x0..x{d-1}`.
/// Unlabeled rows carry an empty label; absent ground truth is an empty field.
void export_csv(const OpenSetData& data, const std::filesystem::path& path);

/// k_seen is taken from the argument when given, else inferred as one more
/// than the largest label in S and V.
OpenSetData import_csv(const std::filesystem::path& path,
                       std::optional<std::size_t> k_seen = std::nullopt);

}  // namespace wiseopen
