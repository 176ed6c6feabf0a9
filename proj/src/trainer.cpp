// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <sstream>

namespace wiseopen {

namespace {

constexpr std::uint64_t kInitStream = 0x11;
constexpr std::uint64_t kBatchStream = 0x51;
constexpr std::uint64_t kAugStream = 0x7a;

void write_number(std::ostream& os, double v) {
  if (std::isnan(v))
    os << "nan";
  else
    os << v;
}

}  // namespace

void TrainConfig::validate() const {
  if (batch_l < 1 || batch_u < 1) throw ConfigError("batch sizes must be >= 1");
  if (selection_interval < 1) throw ConfigError("selection_interval (e_s) must be >= 1");
  if (!(lr0 > 0.0)) throw ConfigError("lr0 must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must be in [0,1)");
  if (!(rho_conf > 0.0 && rho_conf < 1.0)) throw ConfigError("rho_conf must be in (0,1)");
  weights.validate();
  if (threshold.kind == ThresholdPolicy::Kind::kTopK && threshold.k < 1)
    throw ConfigError("top-k threshold needs k >= 1");
}

std::string MetricsLog::to_csv() const {
  std::ostringstream os;
  os << std::setprecision(17) << kCsvHeader << '\n';
  for (const auto& r : records) {
    os << r.epoch << ',';
    write_number(os, r.lr);
    os << ',';
    write_number(os, r.loss_s);
    os << ',';
    write_number(os, r.loss_u);
    os << ',' << r.selected_count << ',';
    write_number(os, r.id_acc);
    os << ',';
    write_number(os, r.auroc);
    os << ',';
    write_number(os, r.pseudo_acc);
    os << ',';
    write_number(os, r.sel_precision);
    os << ',';
    write_number(os, r.sel_recall);
    os << '\n';
  }
  return os.str();
}

void MetricsLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << to_csv();
}

TrainResult train(const TrainConfig& cfg, const OpenSetData& data) {
  cfg.validate();
  if (data.S.empty()) throw DomainError("train: labeled set is empty");
  if (cfg.selection != Mechanism::kNone && data.U.empty())
    throw DomainError("train: selection requires a nonempty unlabeled set");

  std::vector<std::size_t> sizes{data.dim};
  sizes.insert(sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  TrainResult out;
  out.params = init_mlp(sizes, data.k_seen, derive_seed(cfg.seed, kInitStream));
  if (cfg.epochs == 0) return out;

  UnsupConfig unsup{cfg.weights, cfg.rho_conf, cfg.augment, cfg.pseudo_label_rule};
  const bool unsup_active = !cfg.weights.all_zero();
  Rng batch_rng(derive_seed(cfg.seed, kBatchStream));
  SgdState sgd;

  std::vector<std::size_t> u_t(data.U.size());
  std::iota(u_t.begin(), u_t.end(), 0);
  SelectionResult current;
  current.selected = u_t;

  std::vector<LabeledExample> b_l(cfg.batch_l);
  std::vector<UnlabeledInput> b_u;
  b_u.reserve(cfg.batch_u);

  for (std::size_t t = 0; t < cfg.epochs; ++t) {
    if (cfg.selection != Mechanism::kNone && t % cfg.selection_interval == 0) {
      ScoringContext ctx{unsup, cfg.seed, static_cast<int>(t), cfg.threads};
      current = select_unlabeled(out.params, data.U, data.S, cfg.selection, cfg.threshold, ctx);
      u_t = current.selected;
      out.selections.push_back(current);
      if (u_t.empty())
        out.warnings.push_back("epoch " + std::to_string(t) +
                               ": selection kept no unlabeled data; unsupervised term skipped");
    }

    const double lr = cosine_lr(static_cast<double>(t), static_cast<double>(cfg.epochs), cfg.lr0);
    double sum_s = 0.0, sum_u = 0.0;
    std::uniform_int_distribution<std::size_t> pick_l(0, data.S.size() - 1);
    for (std::size_t it = 0; it < cfg.iters_per_epoch; ++it) {
      for (auto& e : b_l) e = data.S[pick_l(batch_rng)];
      FlatGradient g{Vector(out.params.size(), 0.0)};
      sum_s += cfg.supervised_ova ? supervised_loss(out.params, b_l, &g.values)
                                  : ce_loss(out.params, b_l, &g.values);

      if (!u_t.empty()) {
        std::uniform_int_distribution<std::size_t> pick_u(0, u_t.size() - 1);
        const std::uint64_t step = t * cfg.iters_per_epoch + it;
        b_u.clear();
        for (std::size_t j = 0; j < cfg.batch_u; ++j) {
          const auto& e = data.U[u_t[pick_u(batch_rng)]];
          b_u.push_back({e.x, AugSeeds::derive(derive_seed(cfg.seed, kAugStream), step, j)});
        }
        if (unsup_active) sum_u += unsup_loss(out.params, b_u, unsup, &g.values);
      }
      sgd_step(out.params, g, lr, cfg.momentum, sgd);
    }

    EpochRecord rec;
    rec.epoch = t;
    rec.lr = lr;
    const auto iters = static_cast<double>(std::max<std::size_t>(cfg.iters_per_epoch, 1));
    rec.loss_s = sum_s / iters;
    rec.loss_u = sum_u / iters;
    rec.selected_count = u_t.size();
    const auto report = evaluate(out.params, data, cfg.rho_conf,
                                 cfg.selection == Mechanism::kNone ? nullptr : &current);
    rec.id_acc = report.id_accuracy;
    rec.auroc = report.auroc;
    rec.pseudo_acc = report.pseudo_acc;
    rec.sel_precision = report.selection_precision;
    rec.sel_recall = report.selection_recall;
    if (!std::isfinite(rec.loss_s) || !std::isfinite(rec.loss_u))
      throw NumericError("train: non-finite loss at epoch " + std::to_string(t));
    out.log.records.push_back(rec);
  }
  return out;
}

TrainResult baseline_labeled_only(const TrainConfig& cfg, const OpenSetData& data) {
  TrainConfig local = cfg;
  local.weights = {0.0, 0.0, 0.0};
  local.supervised_ova = false;
  local.selection = Mechanism::kNone;
  return train(local, data);
}

}  // namespace wiseopen
