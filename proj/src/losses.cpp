// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/losses.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace wiseopen {

namespace {

double clamped_log(double p) { return std::log(std::max(p, kLogClamp)); }

// d/dp of -log(max(p, clamp)).
double neg_log_derivative(double p) { return p > kLogClamp ? -1.0 / p : 0.0; }

void require_nonempty(std::size_t n, const char* what) {
  if (n == 0) throw DomainError(std::string(what) + ": empty batch");
}

void require_label(const ModelParams& params, int label) {
  if (label < 0 || label >= static_cast<int>(params.arch.k_classes()))
    throw DomainError("label " + std::to_string(label) + " outside the seen classes");
}

// Cross-entropy -log p_y at one forward pass; adds scale * dL/dz_class.
double ce_term(const ForwardCache& c, int y, double scale, Vector* d_class) {
  const double py = c.pred.p[y];
  if (d_class && py > kLogClamp) {
    for (std::size_t k = 0; k < c.pred.p.size(); ++k)
      (*d_class)[k] += scale * (c.pred.p[k] - (static_cast<int>(k) == y ? 1.0 : 0.0));
  }
  return -clamped_log(py);
}

// dL/dz for a pair softmax given dL/dq.
std::array<double, 2> pair_backward(const std::array<double, 2>& q,
                                    const std::array<double, 2>& dq) {
  const double inner = q[0] * dq[0] + q[1] * dq[1];
  return {q[0] * (dq[0] - inner), q[1] * (dq[1] - inner)};
}

void add_pair(Vector& d_ova, std::size_t k, const std::array<double, 2>& dz, double scale) {
  d_ova[2 * k] += scale * dz[0];
  d_ova[2 * k + 1] += scale * dz[1];
}

double ova_term(const ForwardCache& c, int y, double scale, Vector* d_ova) {
  const auto& q = c.pred.q;
  const std::size_t K = q.size();
  std::size_t worst = K;
  double worst_q1 = std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < K; ++k) {
    if (static_cast<int>(k) == y) continue;
    const double q1 = std::max(q[k][1], kLogClamp);
    if (q1 < worst_q1) {
      worst_q1 = q1;
      worst = k;
    }
  }
  const double value = -clamped_log(q[y][0]) - std::log(worst_q1);
  if (d_ova) {
    add_pair(*d_ova, y, pair_backward(q[y], {neg_log_derivative(q[y][0]), 0.0}), scale);
    add_pair(*d_ova, worst, pair_backward(q[worst], {0.0, neg_log_derivative(q[worst][1])}),
             scale);
  }
  return value;
}

// Sum of binary entropies of all OVA pairs at one forward pass.
double entropy_term(const ForwardCache& c, double scale, Vector* d_ova) {
  double value = 0.0;
  for (std::size_t k = 0; k < c.pred.q.size(); ++k) {
    const auto& qk = c.pred.q[k];
    std::array<double, 2> dq{};
    for (int j = 0; j < 2; ++j) {
      value -= qk[j] * clamped_log(qk[j]);
      dq[j] = -(clamped_log(qk[j]) + (qk[j] > kLogClamp ? 1.0 : 0.0));
    }
    if (d_ova) add_pair(*d_ova, k, pair_backward(qk, dq), scale);
  }
  return value;
}

double supervised_impl(const ModelParams& params, std::span<const LabeledExample> batch,
                       Vector* grad, bool with_ce, bool with_ova, const char* name) {
  require_nonempty(batch.size(), name);
  const std::size_t K = params.arch.k_classes();
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& e : batch) {
    require_label(params, e.label);
    const auto c = forward_cached(params, e.x);
    Vector d_class, d_ova;
    if (grad) {
      if (with_ce) d_class.assign(K, 0.0);
      if (with_ova) d_ova.assign(2 * K, 0.0);
    }
    double v = 0.0;
    if (with_ce) v += ce_term(c, e.label, inv, grad ? &d_class : nullptr);
    if (with_ova) v += ova_term(c, e.label, inv, grad ? &d_ova : nullptr);
    if (grad) backward(params, c, d_class, d_ova, *grad);
    total += v;
  }
  return total * inv;
}

}  // namespace

void LossWeights::validate() const {
  for (double w : {lambda1, lambda2, lambda3})
    if (!std::isfinite(w) || w < 0.0) throw ConfigError("loss weights must be finite and >= 0");
}

AugSeeds AugSeeds::derive(std::uint64_t base, std::uint64_t a, std::uint64_t b) {
  const auto root = derive_seed(base, a, b);
  return {derive_seed(root, 0), derive_seed(root, 1), derive_seed(root, 2)};
}

double ce_loss(const ModelParams& params, std::span<const LabeledExample> batch, Vector* grad) {
  return supervised_impl(params, batch, grad, true, false, "ce_loss");
}

double ova_loss(const ModelParams& params, std::span<const LabeledExample> batch, Vector* grad) {
  return supervised_impl(params, batch, grad, false, true, "ova_loss");
}

double supervised_loss(const ModelParams& params, std::span<const LabeledExample> batch,
                       Vector* grad) {
  return supervised_impl(params, batch, grad, true, true, "supervised_loss");
}

PseudoLabelDecision pseudo_label(const Prediction& pred, double rho_conf, PseudoLabelRule rule) {
  if (!(rho_conf > 0.0 && rho_conf < 1.0)) throw ConfigError("rho_conf must lie in (0,1)");
  const auto& p = pred.p;
  const auto it = rule == PseudoLabelRule::kArgmax ? std::max_element(p.begin(), p.end())
                                                   : std::min_element(p.begin(), p.end());
  PseudoLabelDecision d;
  d.y_hat = static_cast<int>(it - p.begin());
  d.confidence = *std::max_element(p.begin(), p.end());
  d.ova_inlier_prob = pred.q[d.y_hat][0];
  d.mask = d.ova_inlier_prob > 0.5 && d.confidence > rho_conf;
  return d;
}

PseudoLabelDecision pseudo_label(const ModelParams& params, std::span<const double> view,
                                 double rho_conf, PseudoLabelRule rule) {
  return pseudo_label(forward(params, view), rho_conf, rule);
}

UnsupTerms unsup_terms(const ModelParams& params, const UnlabeledInput& in,
                       const UnsupConfig& cfg, Vector* grad, double grad_scale) {
  const std::size_t K = params.arch.k_classes();
  const auto& w = cfg.weights;
  const Vector a0 = weak_augment(in.x, in.seeds.weak0, cfg.augment);
  const Vector a1 = weak_augment(in.x, in.seeds.weak1, cfg.augment);
  const auto c0 = forward_cached(params, a0);
  const auto c1 = forward_cached(params, a1);

  UnsupTerms t;
  Vector d0_ova, d1_ova;
  if (grad) {
    d0_ova.assign(2 * K, 0.0);
    d1_ova.assign(2 * K, 0.0);
  }
  const bool g_em = grad && w.lambda1 != 0.0;
  t.em = entropy_term(c0, grad_scale * w.lambda1, g_em ? &d0_ova : nullptr) +
         entropy_term(c1, grad_scale * w.lambda1, g_em ? &d1_ova : nullptr);

  const bool g_oc = grad && w.lambda2 != 0.0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto& q0 = c0.pred.q[k];
    const auto& q1 = c1.pred.q[k];
    const std::array<double, 2> diff{q0[0] - q1[0], q0[1] - q1[1]};
    t.oc += diff[0] * diff[0] + diff[1] * diff[1];
    if (g_oc) {
      const double s = grad_scale * w.lambda2;
      add_pair(d0_ova, k, pair_backward(q0, {2.0 * diff[0], 2.0 * diff[1]}), s);
      add_pair(d1_ova, k, pair_backward(q1, {-2.0 * diff[0], -2.0 * diff[1]}), s);
    }
  }

  t.decision = pseudo_label(c0.pred, cfg.rho_conf, cfg.rule);
  if (t.decision.mask) {
    const Vector strong = strong_augment(in.x, in.seeds.strong, cfg.augment);
    const auto cs = forward_cached(params, strong);
    const bool g_fm = grad && w.lambda3 != 0.0;
    Vector ds_class;
    if (g_fm) ds_class.assign(K, 0.0);
    t.fm = ce_term(cs, t.decision.y_hat, grad_scale * w.lambda3, g_fm ? &ds_class : nullptr);
    if (g_fm) backward(params, cs, ds_class, {}, *grad);
  }

  if (grad && (g_em || g_oc)) {
    backward(params, c0, {}, d0_ova, *grad);
    backward(params, c1, {}, d1_ova, *grad);
  }
  return t;
}

double unsup_loss_instance(const ModelParams& params, const UnlabeledInput& in,
                           const UnsupConfig& cfg, Vector* grad) {
  return unsup_terms(params, in, cfg, grad).weighted(cfg.weights);
}

namespace {

double unsup_component(const ModelParams& params, std::span<const UnlabeledInput> batch,
                       const UnsupConfig& cfg, Vector* grad, const LossWeights& select,
                       const char* name) {
  require_nonempty(batch.size(), name);
  UnsupConfig local = cfg;
  local.weights = select;
  const double inv = 1.0 / static_cast<double>(batch.size());
  double total = 0.0;
  for (const auto& in : batch) total += unsup_terms(params, in, local, grad, inv).weighted(select);
  return total * inv;
}

}  // namespace

double em_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
               const UnsupConfig& cfg, Vector* grad) {
  return unsup_component(params, batch, cfg, grad, {1.0, 0.0, 0.0}, "em_loss");
}

double oc_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
               const UnsupConfig& cfg, Vector* grad) {
  return unsup_component(params, batch, cfg, grad, {0.0, 1.0, 0.0}, "oc_loss");
}

double fm_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
               const UnsupConfig& cfg, Vector* grad) {
  return unsup_component(params, batch, cfg, grad, {0.0, 0.0, 1.0}, "fm_loss");
}

double unsup_loss(const ModelParams& params, std::span<const UnlabeledInput> batch,
                  const UnsupConfig& cfg, Vector* grad) {
  return unsup_component(params, batch, cfg, grad, cfg.weights, "unsup_loss");
}

}  // namespace wiseopen
