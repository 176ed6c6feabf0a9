// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "test_util.hpp"
#include "wiseopen/losses.hpp"

using namespace wiseopen;

namespace {

// Zero weights everywhere, then class biases and OVA biases set directly so the
// prediction is the same for every input.
ModelParams constant_net(std::size_t dim, const Vector& class_bias, const Vector& ova_bias) {
  auto p = init_mlp({dim}, class_bias.size(), 0);
  std::fill(p.flat.begin(), p.flat.end(), 0.0);
  const auto& hc = p.arch.head_class();
  const auto& ho = p.arch.head_ova();
  for (std::size_t k = 0; k < class_bias.size(); ++k) p.flat[hc.bias_offset + k] = class_bias[k];
  for (std::size_t k = 0; k < ova_bias.size(); ++k) p.flat[ho.bias_offset + k] = ova_bias[k];
  return p;
}

// Sharpened random net so pseudo-label masks fire on some instances.
ModelParams confident_net(std::size_t dim, std::size_t k, std::uint64_t seed, double scale) {
  auto p = init_mlp({dim, 6}, k, seed);
  for (auto& v : p.flat) v *= scale;
  return p;
}

UnsupConfig zero_jitter() {
  UnsupConfig c;
  c.augment = {0.0, 0.0, 0.0};
  return c;
}

const double kLn2 = std::log(2.0);

}  // namespace

TEST_CASE("ce_loss examples") {
  const std::vector<LabeledExample> b{{0, {0.0, 0.0}, 3}};
  CHECK(ce_loss(constant_net(2, Vector(10, 0.0), Vector(20, 0.0)), b) ==
        doctest::Approx(std::log(10.0)).epsilon(1e-12));
  Vector sharp(10, 0.0);
  sharp[3] = 800.0;
  CHECK(ce_loss(constant_net(2, sharp, Vector(20, 0.0)), b) == doctest::Approx(0.0));

  Rng rng(5);
  const auto p = init_mlp({3, 4}, 3, 1);
  const auto two = testutil::labeled_batch(2, 3, 3, rng);
  const double mean =
      0.5 * (ce_loss(p, std::span(two).subspan(0, 1)) + ce_loss(p, std::span(two).subspan(1, 1)));
  CHECK(ce_loss(p, two) == doctest::Approx(mean).epsilon(1e-14));
  CHECK_THROWS_AS(ce_loss(p, {}), DomainError);
}

TEST_CASE("ova_loss examples") {
  const std::vector<LabeledExample> b{{0, {0.0}, 1}};
  // Pair k logits (z0, z1); large gaps give q = (1,0) for the true class and (0,1) elsewhere.
  Vector ova{-900.0, 900.0, 900.0, -900.0, -900.0, 900.0};
  CHECK(ova_loss(constant_net(1, Vector(3, 0.0), ova), b) == doctest::Approx(0.0));
  CHECK(ova_loss(constant_net(1, Vector(3, 0.0), Vector(6, 0.0)), b) ==
        doctest::Approx(2.0 * kLn2).epsilon(1e-12));

  SUBCASE("the min ranges over other classes only") {
    // K = 2, y = 0: the other class is 1 with q^1_1 = sigmoid(2).
    Vector o{0.0, 0.0, 0.0, 2.0};
    const std::vector<LabeledExample> y0{{0, {0.0}, 0}};
    const double q11 = 1.0 / (1.0 + std::exp(-2.0));
    CHECK(ova_loss(constant_net(1, Vector(2, 0.0), o), y0) ==
          doctest::Approx(kLn2 - std::log(q11)).epsilon(1e-12));
  }
  SUBCASE("min picks the least confident outlier") {
    // K = 3, y = 0: q^1_1 = sigmoid(3), q^2_1 = sigmoid(-1); min log is the latter.
    Vector o{0.0, 0.0, 0.0, 3.0, 0.0, -1.0};
    const std::vector<LabeledExample> y0{{0, {0.0}, 0}};
    const double q21 = 1.0 / (1.0 + std::exp(1.0));
    CHECK(ova_loss(constant_net(1, Vector(3, 0.0), o), y0) ==
          doctest::Approx(kLn2 - std::log(q21)).epsilon(1e-12));
  }
  SUBCASE("clamped logs stay finite") {
    Vector o{-5000.0, 5000.0, 0.0, 0.0};
    const std::vector<LabeledExample> y0{{0, {0.0}, 0}};
    const double v = ova_loss(constant_net(1, Vector(2, 0.0), o), y0);
    CHECK(std::isfinite(v));
    CHECK(v == doctest::Approx(-std::log(kLogClamp) + kLn2).epsilon(1e-9));
  }
}

TEST_CASE("supervised_loss is the sum of its parts") {
  Rng rng(8);
  const auto p = init_mlp({4, 5}, 3, 2);
  const auto b = testutil::labeled_batch(6, 4, 3, rng);
  CHECK(supervised_loss(p, b) == doctest::Approx(ce_loss(p, b) + ova_loss(p, b)).epsilon(1e-14));
  CHECK(std::isfinite(supervised_loss(p, b)));
}

TEST_CASE("em_loss examples") {
  auto cfg = zero_jitter();
  const Vector x{0.4, -0.2};
  const std::vector<UnlabeledInput> b{{x, {}}};
  CHECK(em_loss(constant_net(2, Vector(4, 0.0), Vector(8, 0.0)), b, cfg) ==
        doctest::Approx(2.0 * 4.0 * kLn2).epsilon(1e-12));
  Vector det{900.0, -900.0, -900.0, 900.0, 900.0, -900.0, 900.0, -900.0};
  CHECK(em_loss(constant_net(2, Vector(4, 0.0), det), b, cfg) == doctest::Approx(0.0));
  Rng rng(2);
  const auto p = init_mlp({2, 4}, 4, 3);
  const auto u = testutil::unlabeled_batch(10, 2, rng);
  CHECK(em_loss(p, u.inputs, UnsupConfig{}) >= 0.0);
  CHECK_THROWS_AS(em_loss(p, {}, cfg), DomainError);
}

TEST_CASE("oc_loss examples") {
  Rng rng(12);
  const auto p = init_mlp({3, 5}, 3, 6);
  const auto u = testutil::unlabeled_batch(5, 3, rng);
  CHECK(oc_loss(p, u.inputs, zero_jitter()) == 0.0);

  SUBCASE("symmetric in the two weak views") {
    const UnsupConfig cfg;
    auto swapped = u.inputs;
    for (auto& in : swapped) std::swap(in.seeds.weak0, in.seeds.weak1);
    CHECK(oc_loss(p, u.inputs, cfg) == doctest::Approx(oc_loss(p, swapped, cfg)).epsilon(1e-14));
  }
  SUBCASE("opposite deterministic pairs give 2K") {
    // One input coordinate drives every OVA pair; the two views see x = +1 and x = -1.
    auto q = init_mlp({1}, 3, 0);
    std::fill(q.flat.begin(), q.flat.end(), 0.0);
    const auto& ho = q.arch.head_ova();
    for (std::size_t k = 0; k < 3; ++k) {
      q.flat[ho.weight_offset + 2 * k] = 1000.0;
      q.flat[ho.weight_offset + 2 * k + 1] = -1000.0;
    }
    // Find seeds whose weak views land on opposite sides of zero.
    UnsupConfig cfg;
    cfg.augment.weak_jitter = 10.0;
    const Vector x{0.0};
    std::uint64_t s0 = 0, s1 = 0;
    for (std::uint64_t s = 1; s < 1000; ++s) {
      const double v = weak_augment(x, s, cfg.augment)[0];
      if (v > 1.0 && s0 == 0) s0 = s;
      if (v < -1.0 && s1 == 0) s1 = s;
    }
    REQUIRE(s0 != 0);
    REQUIRE(s1 != 0);
    const std::vector<UnlabeledInput> b{{x, {s0, s1, 9}}};
    CHECK(oc_loss(q, b, cfg) == doctest::Approx(6.0).epsilon(1e-12));
  }
}

TEST_CASE("pseudo_label gate") {
  Prediction pred;
  pred.p = {0.99, 0.005, 0.005};
  pred.q = {{0.9, 0.1}, {0.5, 0.5}, {0.5, 0.5}};
  auto d = pseudo_label(pred, 0.95);
  CHECK(d.y_hat == 0);
  CHECK(d.mask);
  CHECK(d.confidence == 0.99);
  CHECK(d.ova_inlier_prob == 0.9);

  pred.q[0] = {0.4, 0.6};
  CHECK_FALSE(pseudo_label(pred, 0.95).mask);
  CHECK_FALSE(pseudo_label(pred, 0.01).mask);

  Prediction uniform;
  uniform.p.assign(10, 0.1);
  uniform.q.assign(10, {0.9, 0.1});
  const auto u = pseudo_label(uniform, 0.2);
  CHECK(u.confidence == doctest::Approx(0.1));
  CHECK_FALSE(u.mask);
  CHECK_FALSE(pseudo_label(uniform, 0.1).mask);

  Prediction two;
  two.p = {0.7, 0.3};
  two.q = {{0.9, 0.1}, {0.8, 0.2}};
  CHECK(pseudo_label(two, 0.5, PseudoLabelRule::kArgmin).y_hat == 1);
  CHECK_THROWS_AS(pseudo_label(two, 1.0), ConfigError);
  CHECK_THROWS_AS(pseudo_label(two, 0.0), ConfigError);
}

TEST_CASE("fm_loss examples") {
  auto cfg = zero_jitter();
  const Vector x{1.0, 2.0};
  const std::vector<UnlabeledInput> b{{x, {}}};
  // All masks 0: OVA says outlier.
  Vector out_ova{-5.0, 5.0, -5.0, 5.0, -5.0, 5.0};
  Vector sharp{50.0, 0.0, 0.0};
  CHECK(fm_loss(constant_net(2, sharp, out_ova), b, cfg) == 0.0);
  // Mask 1 with a one-hot strong prediction: zero loss.
  Vector in_ova{5.0, -5.0, -5.0, 5.0, -5.0, 5.0};
  Vector huge{900.0, 0.0, 0.0};
  CHECK(fm_loss(constant_net(2, huge, in_ova), b, cfg) == doctest::Approx(0.0));

  SUBCASE("mask on, uniform strong prediction contributes ln K") {
    // A single input coordinate makes the weak view confident and the masked
    // strong view uniform.
    auto p = init_mlp({1}, 10, 0);
    std::fill(p.flat.begin(), p.flat.end(), 0.0);
    p.flat[p.arch.head_class().weight_offset + 0] = 100.0;
    p.flat[p.arch.head_ova().bias_offset + 0] = 5.0;
    UnsupConfig c;
    c.augment = {0.0, 0.0, 1.0};
    const Vector one{1.0};
    const std::vector<UnlabeledInput> bb{{one, {}}};
    CHECK(fm_loss(p, bb, c) == doctest::Approx(std::log(10.0)).epsilon(1e-12));
  }
}

TEST_CASE("unsup_loss_instance examples") {
  Rng rng(17);
  const auto p = init_mlp({3, 5}, 3, 8);
  const auto u = testutil::unlabeled_batch(8, 3, rng);
  UnsupConfig cfg;
  cfg.weights = {0.0, 0.0, 0.0};
  CHECK(unsup_loss_instance(p, u.inputs[0], cfg) == 0.0);

  SUBCASE("zero jitter and no mask leave only the entropy term") {
    auto z = zero_jitter();
    z.weights = {0.7, 1.3, 2.0};
    z.rho_conf = 0.999;
    const auto t = unsup_terms(p, u.inputs[1], z);
    REQUIRE_FALSE(t.decision.mask);
    CHECK(unsup_loss_instance(p, u.inputs[1], z) == doctest::Approx(0.7 * t.em).epsilon(1e-14));
  }
  SUBCASE("batch L_u is the mean of instances") {
    UnsupConfig c;
    double s = 0.0;
    for (const auto& in : u.inputs) s += unsup_loss_instance(p, in, c);
    CHECK(unsup_loss(p, u.inputs, c) ==
          doctest::Approx(s / static_cast<double>(u.inputs.size())).epsilon(1e-9));
  }
  SUBCASE("weighted combination of the component losses") {
    UnsupConfig c;
    c.weights = {0.3, 0.5, 2.0};
    const double direct = unsup_loss(p, u.inputs, c);
    const double parts = 0.3 * em_loss(p, u.inputs, c) + 0.5 * oc_loss(p, u.inputs, c) +
                         2.0 * fm_loss(p, u.inputs, c);
    CHECK(direct == doctest::Approx(parts).epsilon(1e-12));
  }
}

TEST_CASE("losses are nonnegative and finite on extreme inputs") {
  Rng rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    const auto p = confident_net(4, 3, 40 + trial, 20.0);
    const auto u = testutil::unlabeled_batch(6, 4, rng, 50.0);
    const auto l = testutil::labeled_batch(6, 4, 3, rng);
    for (double v : {ce_loss(p, l), ova_loss(p, l), em_loss(p, u.inputs, {}),
                     oc_loss(p, u.inputs, {}), fm_loss(p, u.inputs, {}),
                     unsup_loss(p, u.inputs, {})}) {
      CHECK(std::isfinite(v));
      CHECK(v >= 0.0);
    }
  }
}

TEST_CASE("analytic gradients match central differences") {
  Rng rng(123);
  int masks_seen = 0;
  for (int trial = 0; trial < 20; ++trial) {
    const std::size_t k = 2 + trial % 3;
    const auto p = confident_net(3, k, 900 + trial, 2.5);
    const auto l = testutil::labeled_batch(3, 3, k, rng);
    const auto u = testutil::unlabeled_batch(3, 3, rng);
    UnsupConfig cfg;
    cfg.rho_conf = 0.3;
    cfg.weights = {0.4, 0.7, 1.1};
    for (const auto& in : u.inputs) masks_seen += unsup_terms(p, in, cfg).decision.mask;

    const std::vector<std::pair<const char*, DifferentiableLoss>> losses{
        {"ce", [&](const ModelParams& q, Vector* g) { return ce_loss(q, l, g); }},
        {"ova", [&](const ModelParams& q, Vector* g) { return ova_loss(q, l, g); }},
        {"em", [&](const ModelParams& q, Vector* g) { return em_loss(q, u.inputs, cfg, g); }},
        {"oc", [&](const ModelParams& q, Vector* g) { return oc_loss(q, u.inputs, cfg, g); }},
        {"fm", [&](const ModelParams& q, Vector* g) { return fm_loss(q, u.inputs, cfg, g); }},
        {"unsup", [&](const ModelParams& q, Vector* g) { return unsup_loss(q, u.inputs, cfg, g); }},
    };
    for (const auto& [name, loss] : losses) {
      CAPTURE(name);
      CAPTURE(trial);
      const auto a = grad(p, loss);
      const auto f = finite_diff_grad(p, loss, 1e-5);
      CHECK(testutil::max_rel_error(a.values, f.values) < 1e-4);
    }
  }
  CHECK(masks_seen > 0);
}

TEST_CASE("aug seed derivation is deterministic and distinct") {
  const auto a = AugSeeds::derive(5, 1, 2);
  const auto b = AugSeeds::derive(5, 1, 2);
  const auto c = AugSeeds::derive(5, 2, 1);
  CHECK(a.weak0 == b.weak0);
  CHECK(a.strong == b.strong);
  CHECK(a.weak0 != a.weak1);
  CHECK(a.weak0 != c.weak0);
}

TEST_CASE("loss weight validation") {
  CHECK_NOTHROW(LossWeights{}.validate());
  CHECK_THROWS_AS((LossWeights{-1.0, 0.0, 0.0}.validate()), ConfigError);
  CHECK_THROWS_AS((LossWeights{0.0, std::nan(""), 0.0}.validate()), ConfigError);
  CHECK(LossWeights{0.0, 0.0, 0.0}.all_zero());
}
