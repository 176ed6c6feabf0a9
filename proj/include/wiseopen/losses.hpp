// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wiseopen/data_synth.hpp"
#include "wiseopen/nn_core.hpp"

namespace wiseopen {

/// Probabilities are clamped to this floor before any log.
inline constexpr double kLogClamp = 1e-12;

struct LossWeights {
  double lambda1 = 1.0;  // entropy minimisation
  double lambda2 = 1.0;  // open-set consistency
  double lambda3 = 1.0;  // FixMatch on pseudo-inliers

  void validate() const;
  bool all_zero() const { return lambda1 == 0.0 && lambda2 == 0.0 && lambda3 == 0.0; }
};

enum class PseudoLabelRule { kArgmax, kArgmin };

struct UnsupConfig {
  LossWeights weights;
  double rho_conf = 0.95;
  AugmentConfig augment;
  PseudoLabelRule rule = PseudoLabelRule::kArgmax;
};

struct PseudoLabelDecision {
  int y_hat = 0;
  bool mask = false;
  double confidence = 0.0;
  double ova_inlier_prob = 0.0;
};

/// Seeds of the two weak views and the strong view of one unlabeled instance.
struct AugSeeds {
  std::uint64_t weak0 = 0;
  std::uint64_t weak1 = 1;
  std::uint64_t strong = 2;

  static AugSeeds derive(std::uint64_t base, std::uint64_t a, std::uint64_t b);
};

struct UnlabeledInput {
  std::span<const double> x;
  AugSeeds seeds;
};

/// Per-instance values of the three unsupervised terms, unweighted.
struct UnsupTerms {
  double em = 0.0;
  double oc = 0.0;
  double fm = 0.0;
  PseudoLabelDecision decision;

  double weighted(const LossWeights& w) const {
    return w.lambda1 * em + w.lambda2 * oc + w.lambda3 * fm;
  }
};

// ---- Supervised losses. Each returns the batch mean; when grad is non-null
// the exact gradient of that mean is added into it.

double ce_loss(const ModelParams& params, std::span<const LabeledExample> batch,
               Vector* grad = nullptr);
double ova_loss(const ModelParams& params, std::span<const LabeledExample> batch,
                Vector* grad = nullptr);
/// ce + ova.
double supervised_loss(const ModelParams& params, std::span<const LabeledExample> batch,
                       Vector* grad = nullptr);

// ---- Unsupervised losses over a batch of augmented instances.

double em_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
               const UnsupConfig& cfg, Vector* grad = nullptr);
double oc_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
               const UnsupConfig& cfg, Vector* grad = nullptr);
double fm_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
               const UnsupConfig& cfg, Vector* grad = nullptr);

/// Gate for FixMatch: y_hat from p(view), mask iff q^{y_hat}_0 > 0.5 and
/// max p > rho_conf.
PseudoLabelDecision pseudo_label(const Prediction& pred, double rho_conf,
                                 PseudoLabelRule rule = PseudoLabelRule::kArgmax);
PseudoLabelDecision pseudo_label(const ModelParams& params, std::span<const double> view,
                                 double rho_conf,
                                 PseudoLabelRule rule = PseudoLabelRule::kArgmax);

/// All three unsupervised terms for one instance. The weak view weak0 drives
/// the pseudo-label; the pseudo-label and mask are constants for
/// differentiation. When grad is non-null, grad_scale * d(weighted loss) is
/// accumulated with the weights in cfg.
UnsupTerms unsup_terms(const ModelParams& params, const UnlabeledInput& in,
                       const UnsupConfig& cfg, Vector* grad = nullptr,
                       double grad_scale = 1.0);

/// lambda1*em + lambda2*oc + lambda3*fm for a single instance.
double unsup_loss_instance(const ModelParams& params, const UnlabeledInput& in,
                           const UnsupConfig& cfg, Vector* grad = nullptr);

/// Batch L_u: mean of unsup_loss_instance.
double unsup_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
                  const UnsupConfig& cfg, Vector* grad = nullptr);

}  // namespace wiseopen
