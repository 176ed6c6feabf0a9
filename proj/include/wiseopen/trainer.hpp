// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "wiseopen/data_synth.hpp"
#include "wiseopen/eval_metrics.hpp"
#include "wiseopen/losses.hpp"
#include "wiseopen/nn_core.hpp"
#include "wiseopen/selection.hpp"

namespace wiseopen {

struct TrainConfig {
  std::vector<std::size_t> hidden = {32};
  std::size_t epochs = 30;
  std::size_t iters_per_epoch = 32;
  std::size_t batch_l = 64;
  std::size_t batch_u = 128;
  double lr0 = 0.03;
  double momentum = 0.9;
  Mechanism selection = Mechanism::kNone;
  ThresholdPolicy threshold = ThresholdPolicy::otsu();
  std::size_t selection_interval = 1;  // e_s
  LossWeights weights;
  double rho_conf = 0.95;
  AugmentConfig augment;
  PseudoLabelRule pseudo_label_rule = PseudoLabelRule::kArgmax;
  bool supervised_ova = true;  // false leaves only L_ce in the supervised term
  std::uint64_t seed = 0;
  int threads = 1;  // scoring workers; never changes results

  void validate() const;
};

struct EpochRecord {
  std::size_t epoch = 0;
  double lr = 0.0;
  double loss_s = 0.0;
  double loss_u = 0.0;
  std::size_t selected_count = 0;
  double id_acc = 0.0;
  double auroc = 0.0;
  double pseudo_acc = 0.0;
  double sel_precision = 1.0;
  double sel_recall = 0.0;
};

struct MetricsLog {
  std::vector<EpochRecord> records;

  static constexpr const char* kCsvHeader =
      "epoch,lr,loss_s,loss_u,selected_count,id_acc,auroc,pseudo_acc,sel_precision,sel_recall";
  void write_csv(const std::filesystem::path& path) const;
  std::string to_csv() const;
};

struct TrainResult {
  ModelParams params;
  MetricsLog log;
  std::vector<SelectionResult> selections;  // one per selection epoch, in order
  std::vector<std::string> warnings;
};

/// The selection-aware training loop. At epoch t (0-based) the unlabeled
/// subset is recomputed when t % e_s == 0 and reused otherwise; each of the
/// I_max iterations samples B_l from S and B_u from U_t with replacement and
/// takes one Nesterov SGD step on L_s(B_l) + L_u(B_u) at the cosine rate.
TrainResult train(const TrainConfig& cfg, const OpenSetData& data);

/// Same loop with L = L_ce(B_l) only.
TrainResult baseline_labeled_only(const TrainConfig& cfg, const OpenSetData& data);

}  // namespace wiseopen
