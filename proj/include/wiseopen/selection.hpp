// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "wiseopen/data_synth.hpp"
#include "wiseopen/losses.hpp"
#include "wiseopen/nn_core.hpp"

namespace wiseopen {

enum class Mechanism { kNone, kGradientVariance, kLoss };

std::string to_string(Mechanism m);
Mechanism mechanism_from_string(const std::string& s);

/// Per-instance selection scores. For gradient variance these are squared
/// distances ||g_x - g_bar||^2; for the loss mechanism they are L_u(x).
struct ScoreVector {
  Vector scores;
  Mechanism mechanism = Mechanism::kNone;
  int epoch = 0;
};

struct ThresholdPolicy {
  enum class Kind { kTopK, kOtsu };
  Kind kind = Kind::kOtsu;
  std::size_t k = 0;  // Top-k: number of largest-score instances to discard.

  static ThresholdPolicy top_k(std::size_t k) { return {Kind::kTopK, k}; }
  static ThresholdPolicy otsu() { return {Kind::kOtsu, 0}; }
};

/// rho = +inf means "select everything".
inline constexpr double kSelectAll = std::numeric_limits<double>::infinity();

struct SelectionResult {
  double rho = kSelectAll;
  std::vector<std::size_t> selected;   // positions into U, ascending
  std::vector<std::size_t> discarded;  // positions into U, ascending
  ScoreVector scores;
};

/// Shared knobs for scoring a pool of unlabeled instances.
struct ScoringContext {
  UnsupConfig unsup;
  std::uint64_t seed = 0;  // augmentation seeds derive from (seed, epoch, idx)
  int epoch = 0;
  int threads = 1;
};

/// The seeds used for instance `idx` when scoring at `epoch`.
AugSeeds scoring_seeds(std::uint64_t seed, int epoch, std::size_t idx);

/// g_bar: mean over S of the per-instance supervised gradient, summed in S order.
FlatGradient mean_labeled_gradient(const ModelParams& params,
                                   std::span<const LabeledExample> S, int threads = 1);

/// dL_u(theta; x)/dtheta for one instance.
FlatGradient instance_unsup_gradient(const ModelParams& params, const UnlabeledInput& in,
                                     const UnsupConfig& cfg);

ScoreVector gv_scores(const ModelParams& params, std::span<const UnlabeledExample> U,
                      std::span<const LabeledExample> S, const ScoringContext& ctx);
/// Same as gv_scores with g_bar supplied by the caller.
ScoreVector gv_scores(const ModelParams& params, std::span<const UnlabeledExample> U,
                      const FlatGradient& g_bar, const ScoringContext& ctx);

ScoreVector loss_scores(const ModelParams& params, std::span<const UnlabeledExample> U,
                        const ScoringContext& ctx);

/// k-th largest score (1-based k).
double topk_threshold(std::span<const double> scores, std::size_t k);

/// Otsu cut on continuous scores: candidate cuts sit at midpoints between
/// consecutive distinct sorted values and the one maximising
/// w_low * w_high * (mu_low - mu_high)^2 wins (lowest cut on ties). All-equal
/// input returns kSelectAll.
double otsu_threshold(std::span<const double> scores);

/// Relative tolerance under which two between-class variances count as tied.
inline constexpr double kOtsuTieTolerance = 1e-12;

double threshold(std::span<const double> scores, const ThresholdPolicy& policy);

/// selected = {i : score_i < rho}.
SelectionResult apply_selection(std::size_t pool_size, const ScoreVector& scores, double rho);

/// Membership by the norm form ||g - g_bar|| < sqrt(rho), given squared scores.
std::vector<std::size_t> select_by_norm(std::span<const double> squared_scores, double rho);

/// Score + threshold + partition in one call.
SelectionResult select_unlabeled(const ModelParams& params, std::span<const UnlabeledExample> U,
                                 std::span<const LabeledExample> S, Mechanism mechanism,
                                 const ThresholdPolicy& policy, const ScoringContext& ctx);

/// CSV `epoch,idx,score,selected,hidden_truth,planted_unfriendly`.
void write_selection_csv(const SelectionResult& result, std::span<const UnlabeledExample> U,
                         const std::filesystem::path& path);

}  // namespace wiseopen
