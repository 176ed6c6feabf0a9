// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/nn_core.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>

#include <json.hpp>

namespace wiseopen {

namespace {

LayerSlot make_slot(std::size_t in, std::size_t out, std::size_t& cursor) {
  LayerSlot s{in, out, cursor, cursor + in * out};
  cursor += in * out + out;
  return s;
}

// y = W x + b for one slot.
void affine(const ModelParams& params, const LayerSlot& s,
            std::span<const double> x, Vector& y) {
  const auto w = params.weight(s);
  const auto b = params.bias(s);
  y.assign(b.begin(), b.end());
  for (std::size_t o = 0; o < s.out; ++o) {
    const double* row = w.data() + o * s.in;
    double acc = 0.0;
    for (std::size_t i = 0; i < s.in; ++i) acc += row[i] * x[i];
    y[o] += acc;
  }
}

// Accumulate dW += dz x^T, db += dz and optionally dx += W^T dz.
void affine_backward(const ModelParams& params, const LayerSlot& s,
                     std::span<const double> x, std::span<const double> dz,
                     std::span<double> grad, Vector* dx) {
  const auto w = params.weight(s);
  for (std::size_t o = 0; o < s.out; ++o) {
    const double d = dz[o];
    if (d == 0.0) continue;
    double* grow = grad.data() + s.weight_offset + o * s.in;
    for (std::size_t i = 0; i < s.in; ++i) grow[i] += d * x[i];
    grad[s.bias_offset + o] += d;
    if (dx) {
      const double* row = w.data() + o * s.in;
      for (std::size_t i = 0; i < s.in; ++i) (*dx)[i] += d * row[i];
    }
  }
}

void softmax_inplace(std::span<double> z) {
  const double m = *std::max_element(z.begin(), z.end());
  double sum = 0.0;
  for (auto& v : z) {
    v = std::exp(v - m);
    sum += v;
  }
  for (auto& v : z) v /= sum;
}

void write_le_f64(std::ostream& os, double v) {
  auto bits = std::bit_cast<std::uint64_t>(v);
  char bytes[8];
  for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
  os.write(bytes, 8);
}

double read_le_f64(const unsigned char* bytes) {
  std::uint64_t bits = 0;
  for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(bytes[i]) << (8 * i);
  return std::bit_cast<double>(bits);
}

}  // namespace

Architecture::Architecture(std::vector<std::size_t> layer_sizes, std::size_t k_classes)
    : layer_sizes_(std::move(layer_sizes)), k_classes_(k_classes) {
  if (layer_sizes_.empty()) throw ConfigError("layer_sizes must be nonempty");
  if (k_classes_ < 2) throw ConfigError("k_classes must be >= 2");
  for (auto w : layer_sizes_)
    if (w == 0) throw ConfigError("layer widths must be positive");
  std::size_t cursor = 0;
  for (std::size_t i = 0; i + 1 < layer_sizes_.size(); ++i)
    trunk_.push_back(make_slot(layer_sizes_[i], layer_sizes_[i + 1], cursor));
  head_class_ = make_slot(feature_dim(), k_classes_, cursor);
  head_ova_ = make_slot(feature_dim(), 2 * k_classes_, cursor);
  param_count_ = cursor;
}

ModelParams init_mlp(const std::vector<std::size_t>& layer_sizes,
                     std::size_t k_classes, std::uint64_t seed) {
  ModelParams params;
  params.arch = Architecture(layer_sizes, k_classes);
  params.seed = seed;
  params.flat.assign(params.arch.param_count(), 0.0);
  Rng rng(mix_seed(seed));
  auto fill = [&](const LayerSlot& s) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(s.in));
    std::uniform_real_distribution<double> u(-bound, bound);
    for (std::size_t i = 0; i < s.in * s.out; ++i) params.flat[s.weight_offset + i] = u(rng);
  };
  for (const auto& s : params.arch.trunk()) fill(s);
  fill(params.arch.head_class());
  fill(params.arch.head_ova());
  return params;
}

ModelParams unflatten(const Architecture& arch, std::span<const double> flat,
                      std::uint64_t seed) {
  if (flat.size() != arch.param_count())
    throw ShapeError("unflatten: expected " + std::to_string(arch.param_count()) +
                     " values, got " + std::to_string(flat.size()));
  return ModelParams{arch, Vector(flat.begin(), flat.end()), seed};
}

ForwardCache forward_cached(const ModelParams& params, std::span<const double> x) {
  const auto& arch = params.arch;
  if (x.size() != arch.input_dim())
    throw ShapeError("forward: input has " + std::to_string(x.size()) +
                     " features, network expects " + std::to_string(arch.input_dim()));
  ForwardCache c;
  c.activations.reserve(arch.trunk().size() + 1);
  c.activations.emplace_back(x.begin(), x.end());
  for (const auto& s : arch.trunk()) {
    Vector h;
    affine(params, s, c.activations.back(), h);
    for (auto& v : h) v = std::tanh(v);
    c.activations.push_back(std::move(h));
  }
  const auto& feat = c.activations.back();
  affine(params, arch.head_class(), feat, c.class_logits);
  affine(params, arch.head_ova(), feat, c.ova_logits);

  c.pred.p = c.class_logits;
  softmax_inplace(c.pred.p);
  const std::size_t k = arch.k_classes();
  c.pred.q.resize(k);
  for (std::size_t j = 0; j < k; ++j) {
    std::array<double, 2> pair{c.ova_logits[2 * j], c.ova_logits[2 * j + 1]};
    softmax_inplace(pair);
    c.pred.q[j] = pair;
  }
  return c;
}

Prediction forward(const ModelParams& params, std::span<const double> x) {
  return forward_cached(params, x).pred;
}

void backward(const ModelParams& params, const ForwardCache& cache,
              std::span<const double> d_class_logits,
              std::span<const double> d_ova_logits, std::span<double> grad) {
  const auto& arch = params.arch;
  if (grad.size() != arch.param_count()) throw ShapeError("backward: gradient length mismatch");
  const auto& feat = cache.activations.back();
  const bool has_trunk = !arch.trunk().empty();
  Vector dh(feat.size(), 0.0);
  Vector* dh_ptr = has_trunk ? &dh : nullptr;
  if (!d_class_logits.empty())
    affine_backward(params, arch.head_class(), feat, d_class_logits, grad, dh_ptr);
  if (!d_ova_logits.empty())
    affine_backward(params, arch.head_ova(), feat, d_ova_logits, grad, dh_ptr);

  for (std::size_t li = arch.trunk().size(); li-- > 0;) {
    const auto& s = arch.trunk()[li];
    const auto& h = cache.activations[li + 1];
    Vector da(s.out);
    for (std::size_t o = 0; o < s.out; ++o) da[o] = dh[o] * (1.0 - h[o] * h[o]);
    Vector dx(s.in, 0.0);
    affine_backward(params, s, cache.activations[li], da, grad, li > 0 ? &dx : nullptr);
    dh = std::move(dx);
  }
}

Vector softmax_backward(std::span<const double> p, std::span<const double> dp) {
  const double inner = dot(p, dp);
  Vector dz(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) dz[i] = p[i] * (dp[i] - inner);
  return dz;
}

FlatGradient grad(const ModelParams& params, const DifferentiableLoss& loss) {
  FlatGradient g{Vector(params.size(), 0.0)};
  const double value = loss(params, &g.values);
  if (!std::isfinite(value)) {
    std::ostringstream msg;
    msg << "grad: loss is not finite (value=" << value << ")";
    throw NumericError(msg.str());
  }
  if (!all_finite(g.values)) throw NumericError("grad: gradient has non-finite entries");
  return g;
}

FlatGradient finite_diff_grad(const ModelParams& params, const DifferentiableLoss& loss,
                              double h) {
  if (!(h > 0.0)) throw ConfigError("finite_diff_grad: h must be > 0");
  FlatGradient g{Vector(params.size(), 0.0)};
  ModelParams probe = params;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double orig = probe.flat[i];
    probe.flat[i] = orig + h;
    const double up = loss(probe, nullptr);
    probe.flat[i] = orig - h;
    const double down = loss(probe, nullptr);
    probe.flat[i] = orig;
    g.values[i] = (up - down) / (2.0 * h);
  }
  return g;
}

void sgd_step(ModelParams& params, const FlatGradient& g, double lr, double momentum,
              SgdState& state) {
  if (!(lr >= 0.0)) throw ConfigError("sgd_step: lr must be >= 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("sgd_step: momentum must be in [0,1)");
  if (g.values.size() != params.size()) throw ShapeError("sgd_step: gradient length mismatch");
  if (!all_finite(g.values)) throw NumericError("sgd_step: non-finite gradient");
  if (state.velocity.size() != params.size()) state.velocity.assign(params.size(), 0.0);
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& v = state.velocity[i];
    v = momentum * v + g.values[i];
    params.flat[i] -= lr * (g.values[i] + momentum * v);
  }
}

double cosine_lr(double t, double total, double lr0, double cycle_factor) {
  if (total <= 0.0) throw ConfigError("cosine_lr: total epochs must be > 0");
  if (!(lr0 > 0.0)) throw ConfigError("cosine_lr: lr0 must be > 0");
  if (t < 0.0 || t > total) throw ConfigError("cosine_lr: t must lie in [0, T]");
  return lr0 * std::cos(cycle_factor * std::numbers::pi * t / total);
}

void save_checkpoint(const ModelParams& params, const std::filesystem::path& path) {
  {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw ConfigError("cannot write checkpoint " + path.string());
    for (double v : params.flat) write_le_f64(os, v);
  }
  nlohmann::ordered_json meta;
  meta["layer_sizes"] = params.arch.layer_sizes();
  meta["k_classes"] = params.arch.k_classes();
  meta["seed"] = params.seed;
  meta["flat_ordering_version"] = Architecture::kFlatOrderingVersion;
  meta["param_count"] = params.size();
  std::ofstream js(path.string() + ".json");
  js << meta.dump(2) << "\n";
}

ModelParams load_checkpoint(const std::filesystem::path& path) {
  std::ifstream js(path.string() + ".json");
  if (!js) throw ParseError("missing checkpoint sidecar " + path.string() + ".json");
  nlohmann::json meta;
  try {
    meta = nlohmann::json::parse(js);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError(std::string("checkpoint sidecar: ") + e.what());
  }
  if (meta.value("flat_ordering_version", 0) != Architecture::kFlatOrderingVersion)
    throw ParseError("checkpoint: unsupported flat ordering version");
  Architecture arch(meta.at("layer_sizes").get<std::vector<std::size_t>>(),
                    meta.at("k_classes").get<std::size_t>());
  std::ifstream is(path, std::ios::binary);
  std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                   std::istreambuf_iterator<char>());
  if (bytes.size() != 8 * arch.param_count())
    throw ParseError("checkpoint: blob size does not match architecture");
  Vector flat(arch.param_count());
  for (std::size_t i = 0; i < flat.size(); ++i) flat[i] = read_le_f64(bytes.data() + 8 * i);
  return ModelParams{arch, std::move(flat), meta.at("seed").get<std::uint64_t>()};
}

}  // namespace wiseopen
