// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/selection.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>

#include "wiseopen/parallel.hpp"

namespace wiseopen {

std::string to_string(Mechanism m) {
  switch (m) {
    case Mechanism::kNone: return "none";
    case Mechanism::kGradientVariance: return "gv";
    case Mechanism::kLoss: return "loss";
  }
  return "none";
}

Mechanism mechanism_from_string(const std::string& s) {
  if (s == "none") return Mechanism::kNone;
  if (s == "gv") return Mechanism::kGradientVariance;
  if (s == "loss") return Mechanism::kLoss;
  throw ConfigError("unknown selection mechanism '" + s + "' (expected none|gv|loss)");
}

AugSeeds scoring_seeds(std::uint64_t seed, int epoch, std::size_t idx) {
  // Stream tag 0x5c keeps scoring draws apart from the training stream.
  return AugSeeds::derive(derive_seed(seed, 0x5c), static_cast<std::uint64_t>(epoch), idx);
}

FlatGradient mean_labeled_gradient(const ModelParams& params, std::span<const LabeledExample> S,
                                   int threads) {
  if (S.empty()) throw DomainError("mean_labeled_gradient: labeled set is empty");
  std::vector<Vector> per_instance(S.size());
  parallel_for(S.size(), threads, [&](std::size_t i) {
    per_instance[i].assign(params.size(), 0.0);
    supervised_loss(params, S.subspan(i, 1), &per_instance[i]);
  });
  FlatGradient g{Vector(params.size(), 0.0)};
  for (const auto& gi : per_instance)
    for (std::size_t j = 0; j < gi.size(); ++j) g.values[j] += gi[j];
  const double inv = 1.0 / static_cast<double>(S.size());
  for (auto& v : g.values) v *= inv;
  return g;
}

FlatGradient instance_unsup_gradient(const ModelParams& params, const UnlabeledInput& in,
                                     const UnsupConfig& cfg) {
  FlatGradient g{Vector(params.size(), 0.0)};
  unsup_loss_instance(params, in, cfg, &g.values);
  return g;
}

ScoreVector gv_scores(const ModelParams& params, std::span<const UnlabeledExample> U,
                      const FlatGradient& g_bar, const ScoringContext& ctx) {
  if (U.empty()) throw DomainError("gv_scores: unlabeled pool is empty");
  if (g_bar.values.size() != params.size()) throw ShapeError("gv_scores: g_bar length mismatch");
  ScoreVector out{Vector(U.size(), 0.0), Mechanism::kGradientVariance, ctx.epoch};
  parallel_for(U.size(), ctx.threads, [&](std::size_t i) {
    const UnlabeledInput in{U[i].x, scoring_seeds(ctx.seed, ctx.epoch, U[i].idx)};
    const auto g = instance_unsup_gradient(params, in, ctx.unsup);
    out.scores[i] = squared_distance(g.values, g_bar.values);
  });
  return out;
}

ScoreVector gv_scores(const ModelParams& params, std::span<const UnlabeledExample> U,
                      std::span<const LabeledExample> S, const ScoringContext& ctx) {
  if (U.empty()) throw DomainError("gv_scores: unlabeled pool is empty");
  return gv_scores(params, U, mean_labeled_gradient(params, S, ctx.threads), ctx);
}

ScoreVector loss_scores(const ModelParams& params, std::span<const UnlabeledExample> U,
                        const ScoringContext& ctx) {
  if (U.empty()) throw DomainError("loss_scores: unlabeled pool is empty");
  ScoreVector out{Vector(U.size(), 0.0), Mechanism::kLoss, ctx.epoch};
  parallel_for(U.size(), ctx.threads, [&](std::size_t i) {
    const UnlabeledInput in{U[i].x, scoring_seeds(ctx.seed, ctx.epoch, U[i].idx)};
    out.scores[i] = unsup_loss_instance(params, in, ctx.unsup);
  });
  return out;
}

double topk_threshold(std::span<const double> scores, std::size_t k) {
  if (k < 1 || k > scores.size())
    throw ConfigError("topk_threshold: k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(scores.size()) + "]");
  Vector sorted(scores.begin(), scores.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(k - 1),
                   sorted.end(), std::greater<>());
  return sorted[k - 1];
}

double otsu_threshold(std::span<const double> scores) {
  if (scores.size() < 2) throw DomainError("otsu_threshold: need at least two scores");
  Vector v(scores.begin(), scores.end());
  std::sort(v.begin(), v.end());
  const auto n = static_cast<double>(v.size());
  double total = 0.0;
  for (double s : v) total += s;

  double best = 0.0;
  double rho = kSelectAll;
  double low_sum = 0.0;
  for (std::size_t i = 0; i + 1 < v.size(); ++i) {
    low_sum += v[i];
    if (v[i] == v[i + 1]) continue;
    const double n_low = static_cast<double>(i + 1);
    const double n_high = n - n_low;
    const double mu_low = low_sum / n_low;
    const double mu_high = (total - low_sum) / n_high;
    const double w_low = n_low / n;
    const double between = w_low * (1.0 - w_low) * (mu_low - mu_high) * (mu_low - mu_high);
    if (between > best * (1.0 + kOtsuTieTolerance) && between > 0.0) {
      best = between;
      rho = 0.5 * (v[i] + v[i + 1]);
    }
  }
  return rho;
}

double threshold(std::span<const double> scores, const ThresholdPolicy& policy) {
  return policy.kind == ThresholdPolicy::Kind::kTopK ? topk_threshold(scores, policy.k)
                                                     : otsu_threshold(scores);
}

SelectionResult apply_selection(std::size_t pool_size, const ScoreVector& scores, double rho) {
  if (scores.scores.size() != pool_size)
    throw ShapeError("apply_selection: " + std::to_string(scores.scores.size()) +
                     " scores for a pool of " + std::to_string(pool_size));
  SelectionResult r;
  r.rho = rho;
  r.scores = scores;
  for (std::size_t i = 0; i < pool_size; ++i)
    (scores.scores[i] < rho ? r.selected : r.discarded).push_back(i);
  return r;
}

std::vector<std::size_t> select_by_norm(std::span<const double> squared_scores, double rho) {
  const double bound = std::sqrt(rho);
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < squared_scores.size(); ++i)
    if (std::sqrt(squared_scores[i]) < bound) out.push_back(i);
  return out;
}

SelectionResult select_unlabeled(const ModelParams& params, std::span<const UnlabeledExample> U,
                                 std::span<const LabeledExample> S, Mechanism mechanism,
                                 const ThresholdPolicy& policy, const ScoringContext& ctx) {
  ScoreVector scores;
  switch (mechanism) {
    case Mechanism::kGradientVariance: scores = gv_scores(params, U, S, ctx); break;
    case Mechanism::kLoss: scores = loss_scores(params, U, ctx); break;
    case Mechanism::kNone:
      scores = ScoreVector{Vector(U.size(), 0.0), Mechanism::kNone, ctx.epoch};
      return apply_selection(U.size(), scores, kSelectAll);
  }
  return apply_selection(U.size(), scores, threshold(scores.scores, policy));
}

void write_selection_csv(const SelectionResult& result, std::span<const UnlabeledExample> U,
                         const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << std::setprecision(17);
  os << "epoch,idx,score,selected,hidden_truth,planted_unfriendly\n";
  std::vector<char> keep(U.size(), 0);
  for (auto i : result.selected) keep[i] = 1;
  for (std::size_t i = 0; i < U.size(); ++i) {
    os << result.scores.epoch << ',' << U[i].idx << ',' << result.scores.scores[i] << ','
       << static_cast<int>(keep[i]) << ',';
    if (U[i].hidden_truth) os << *U[i].hidden_truth;
    os << ',';
    if (U[i].planted_unfriendly) os << (*U[i].planted_unfriendly ? 1 : 0);
    os << '\n';
  }
}

}  // namespace wiseopen
