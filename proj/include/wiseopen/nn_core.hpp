// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <vector>

#include "wiseopen/common.hpp"

namespace wiseopen {

/// Location of one dense layer inside the flat parameter vector. The weight
/// block is row-major (out x in) and is immediately followed by the bias.
struct LayerSlot {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;

  bool operator==(const LayerSlot&) const = default;
};

/// Shape of the two-headed MLP.
///
/// layer_sizes = {d, h1, ..., hL}: a trunk of tanh layers d->h1->...->hL
/// (empty when only the input width is given), followed by two linear heads
/// on the last trunk width: the class head (K logits) and the one-vs-all head
/// (2K logits, pair k occupies logits 2k and 2k+1).
///
/// Flat ordering (version 1): trunk layers in order, then the class head, then
/// the OVA head; each layer contributes W row-major then b.
class Architecture {
 public:
  static constexpr int kFlatOrderingVersion = 1;

  Architecture() = default;
  Architecture(std::vector<std::size_t> layer_sizes, std::size_t k_classes);

  const std::vector<std::size_t>& layer_sizes() const { return layer_sizes_; }
  std::size_t k_classes() const { return k_classes_; }
  std::size_t input_dim() const { return layer_sizes_.front(); }
  std::size_t feature_dim() const { return layer_sizes_.back(); }
  std::size_t param_count() const { return param_count_; }

  const std::vector<LayerSlot>& trunk() const { return trunk_; }
  const LayerSlot& head_class() const { return head_class_; }
  const LayerSlot& head_ova() const { return head_ova_; }

  bool operator==(const Architecture&) const = default;

 private:
  std::vector<std::size_t> layer_sizes_;
  std::size_t k_classes_ = 0;
  std::vector<LayerSlot> trunk_;
  LayerSlot head_class_;
  LayerSlot head_ova_;
  std::size_t param_count_ = 0;
};

/// The trainable weights. Stored flat so SGD and gradients share one layout.
struct ModelParams {
  Architecture arch;
  Vector flat;
  std::uint64_t seed = 0;

  std::size_t size() const { return flat.size(); }
  std::span<const double> weight(const LayerSlot& s) const {
    return {flat.data() + s.weight_offset, s.in * s.out};
  }
  std::span<const double> bias(const LayerSlot& s) const {
    return {flat.data() + s.bias_offset, s.out};
  }
};

struct FlatGradient {
  Vector values;
};

/// p over K classes and K one-vs-all pairs (q_0 = inlier, q_1 = outlier).
struct Prediction {
  Vector p;
  std::vector<std::array<double, 2>> q;
};

/// Activations kept from a forward pass for reverse-mode differentiation.
struct ForwardCache {
  std::vector<Vector> activations;  // [0] = input, [i+1] = tanh output of trunk layer i
  Vector class_logits;
  Vector ova_logits;
  Prediction pred;
};

ModelParams init_mlp(const std::vector<std::size_t>& layer_sizes,
                     std::size_t k_classes, std::uint64_t seed);

/// Rebuild params from a flat vector laid out per `arch`.
ModelParams unflatten(const Architecture& arch, std::span<const double> flat,
                      std::uint64_t seed = 0);

ForwardCache forward_cached(const ModelParams& params, std::span<const double> x);
Prediction forward(const ModelParams& params, std::span<const double> x);

/// Accumulates d(loss)/d(theta) into grad given the loss derivatives
/// with respect to the class logits and OVA logits of one forward pass. Either
/// derivative span may be empty, meaning that head is not on the loss path.
void backward(const ModelParams& params, const ForwardCache& cache,
              std::span<const double> d_class_logits,
              std::span<const double> d_ova_logits, std::span<double> grad);

/// Softmax Jacobian-transpose product: maps dL/dp to dL/dz for p = softmax(z).
Vector softmax_backward(std::span<const double> p, std::span<const double> dp);

/// A differentiable scalar function of the parameters. When grad is non-null
/// it must be zero-initialised with param_count entries and the function adds
/// its exact gradient into it.
using DifferentiableLoss =
    std::function<double(const ModelParams& params, Vector* grad)>;

FlatGradient grad(const ModelParams& params, const DifferentiableLoss& loss);
FlatGradient finite_diff_grad(const ModelParams& params,
                              const DifferentiableLoss& loss, double h);

/// Nesterov momentum buffer.
struct SgdState {
  Vector velocity;
};

/// v <- momentum*v + g; theta <- theta - lr*(g + momentum*v).
/// With momentum 0 this is plain theta - lr*g.
void sgd_step(ModelParams& params, const FlatGradient& g, double lr,
              double momentum, SgdState& state);

/// lr0 * cos(cycle_factor * pi * t / T), cycle_factor = 7/16 by default.
double cosine_lr(double t, double total, double lr0, double cycle_factor = 7.0 / 16.0);

/// Checkpoint: little-endian float64 blob at `path` plus `path`.json sidecar.
void save_checkpoint(const ModelParams& params, const std::filesystem::path& path);
ModelParams load_checkpoint(const std::filesystem::path& path);

}  // namespace wiseopen
