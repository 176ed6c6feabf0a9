// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "wiseopen/trainer.hpp"

using namespace wiseopen;

namespace {

OpenSetData tiny_data(std::uint64_t seed = 1) {
  OpenSetConfig c;
  c.dim = 10;
  c.k_seen = 3;
  c.k_unseen = 2;
  c.labels_per_class = 4;
  c.unlabeled_per_class = 8;
  c.val_per_class = 2;
  c.test_per_class = 6;
  c.unfriendly_fraction = 0.2;
  c.unfriendly_noise_scale = 10.0;
  c.seed = seed;
  return make_openset_mixture(c);
}

TrainConfig tiny_config() {
  TrainConfig t;
  t.hidden = {8};
  t.epochs = 4;
  t.iters_per_epoch = 3;
  t.batch_l = 8;
  t.batch_u = 8;
  t.seed = 5;
  return t;
}

}  // namespace

TEST_CASE("epochs = 0 returns the initial parameters and an empty log") {
  auto cfg = tiny_config();
  cfg.epochs = 0;
  const auto d = tiny_data();
  const auto r = train(cfg, d);
  CHECK(r.log.records.empty());
  CHECK(r.params.flat == init_mlp({10, 8}, 3, derive_seed(cfg.seed, 0x11)).flat);
}

TEST_CASE("one record per epoch with monotone indices and finite losses") {
  const auto r = train(tiny_config(), tiny_data());
  REQUIRE(r.log.records.size() == 4);
  for (std::size_t t = 0; t < 4; ++t) {
    const auto& rec = r.log.records[t];
    CHECK(rec.epoch == t);
    CHECK(rec.lr == cosine_lr(static_cast<double>(t), 4.0, 0.03));
    CHECK(std::isfinite(rec.loss_s));
    CHECK(std::isfinite(rec.loss_u));
    CHECK(rec.loss_u >= 0.0);
  }
}

TEST_CASE("selection none keeps the whole pool") {
  const auto d = tiny_data();
  const auto r = train(tiny_config(), d);
  CHECK(r.selections.empty());
  for (const auto& rec : r.log.records) CHECK(rec.selected_count == d.U.size());
}

TEST_CASE("selection interval schedules recomputation and keeps stale subsets") {
  auto cfg = tiny_config();
  cfg.epochs = 25;
  cfg.iters_per_epoch = 1;
  cfg.selection = Mechanism::kGradientVariance;
  cfg.selection_interval = 10;
  const auto r = train(cfg, tiny_data());
  REQUIRE(r.selections.size() == 3);
  CHECK(r.selections[0].scores.epoch == 0);
  CHECK(r.selections[1].scores.epoch == 10);
  CHECK(r.selections[2].scores.epoch == 20);
  for (std::size_t t = 0; t < 25; ++t)
    CHECK(r.log.records[t].selected_count == r.selections[t / 10].selected.size());
}

TEST_CASE("replay determinism and thread independence") {
  auto cfg = tiny_config();
  cfg.selection = Mechanism::kLoss;
  const auto d = tiny_data();
  const auto a = train(cfg, d);
  const auto b = train(cfg, d);
  CHECK(a.log.to_csv() == b.log.to_csv());
  CHECK(a.params.flat == b.params.flat);
  cfg.threads = 4;
  const auto c = train(cfg, d);
  CHECK(a.log.to_csv() == c.log.to_csv());
  CHECK(a.params.flat == c.params.flat);
}

TEST_CASE("baseline equals train with the unsupervised and OVA terms off") {
  auto cfg = tiny_config();
  const auto d = tiny_data();
  const auto base = baseline_labeled_only(cfg, d);
  CHECK(base.log.records.size() == cfg.epochs);
  cfg.weights = {0.0, 0.0, 0.0};
  cfg.supervised_ova = false;
  const auto manual = train(cfg, d);
  CHECK(base.params.flat == manual.params.flat);
  CHECK(base.log.to_csv() == manual.log.to_csv());
  CHECK(baseline_labeled_only(tiny_config(), d).log.to_csv() == base.log.to_csv());
}

TEST_CASE("empty selection falls back with a warning") {
  auto cfg = tiny_config();
  cfg.selection = Mechanism::kGradientVariance;
  const auto d = tiny_data();
  cfg.threshold = ThresholdPolicy::top_k(d.U.size());
  const auto r = train(cfg, d);
  CHECK_FALSE(r.warnings.empty());
  for (const auto& rec : r.log.records) {
    CHECK(rec.selected_count == 0);
    CHECK(rec.loss_u == 0.0);
  }
}

TEST_CASE("preconditions and config validation") {
  const auto d = tiny_data();
  auto e = d;
  e.S.clear();
  CHECK_THROWS_AS(train(tiny_config(), e), DomainError);
  auto nu = d;
  nu.U.clear();
  auto cfg = tiny_config();
  CHECK_NOTHROW(train(cfg, nu));
  cfg.selection = Mechanism::kGradientVariance;
  CHECK_THROWS_AS(train(cfg, nu), DomainError);

  cfg = tiny_config();
  cfg.batch_l = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.selection_interval = 0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.rho_conf = 1.0;
  CHECK_THROWS_AS(cfg.validate(), ConfigError);
}

TEST_CASE("metrics csv layout") {
  const auto r = train(tiny_config(), tiny_data());
  std::istringstream is(r.log.to_csv());
  std::string header;
  std::getline(is, header);
  CHECK(header == "epoch,lr,loss_s,loss_u,selected_count,id_acc,auroc,pseudo_acc,sel_precision,sel_recall");
  std::size_t rows = 0;
  for (std::string line; std::getline(is, line);) {
    CHECK(std::count(line.begin(), line.end(), ',') == 9);
    ++rows;
  }
  CHECK(rows == 4);
}
