// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <span>
#include <vector>

#include "wiseopen/data_synth.hpp"
#include "wiseopen/losses.hpp"
#include "wiseopen/nn_core.hpp"
#include "wiseopen/selection.hpp"

#include <json.hpp>

namespace wiseopen {

enum class OodScoreRule {
  kPredictedOutlierProb,  // q^{y_hat}_1 with y_hat = argmax p
  kOneMinusMaxInlier,     // 1 - max_k q^k_0
};

/// Row-major count matrix.
struct CountMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<std::size_t> counts;

  std::size_t& at(std::size_t r, std::size_t c) { return counts[r * cols + c]; }
  std::size_t at(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
  std::size_t row_sum(std::size_t r) const;
  std::size_t total() const;
};

struct EvalReport {
  double id_accuracy = 0.0;
  double auroc = 0.0;  // NaN when the test split has no unseen-class items
  CountMatrix confusion;  // (K+1) x (K+1): seen classes + merged unseen, abstain column last
  double pseudo_acc = 0.0;
  double selection_precision = 1.0;
  double selection_recall = 0.0;

  nlohmann::ordered_json to_json() const;
};

/// Fraction of seen-class items whose argmax p equals the label.
double top1_accuracy(const ModelParams& params, std::span<const LabeledExample> test);

/// Higher means more likely out-of-distribution.
double ood_score(const Prediction& pred, OodScoreRule rule = OodScoreRule::kPredictedOutlierProb);
double ood_score(const ModelParams& params, std::span<const double> x,
                 OodScoreRule rule = OodScoreRule::kPredictedOutlierProb);

/// Mann-Whitney AUROC: P(ood > id) + 0.5 P(tie), via average-rank summation.
double auroc(std::span<const double> scores_id, std::span<const double> scores_ood);

/// AUROC of ood_score over a test split: ID = labels < K, OOD = labels >= K.
double test_auroc(const ModelParams& params, std::span<const LabeledExample> test,
                  OodScoreRule rule = OodScoreRule::kPredictedOutlierProb);

/// Rows: hidden truth (K seen classes then each unseen class present, in id
/// order up to max id). Columns: K pseudo-labels plus a final abstain column
/// for masked-out instances. Pseudo-labels use the un-augmented input.
CountMatrix unlabeled_confusion(const ModelParams& params, std::span<const UnlabeledExample> U,
                                double rho_conf);

/// Collapses every unseen-class row of a confusion matrix into one.
CountMatrix merge_unseen_rows(const CountMatrix& full, std::size_t k_seen);

/// Accuracy of argmax pseudo-labels over unlabeled items whose hidden truth is
/// a seen class. Returns NaN when there are none.
double pseudo_label_accuracy(const ModelParams& params, std::span<const UnlabeledExample> U,
                             std::size_t k_seen);

struct SelectionQuality {
  double precision = 1.0;
  double recall = 0.0;
};

/// Precision/recall of non-planted ("clean") membership in the selected set.
/// Empty selection reports precision 1, recall 0.
SelectionQuality selection_quality(std::span<const std::size_t> selected,
                                   std::span<const UnlabeledExample> U);
SelectionQuality selection_quality(const SelectionResult& result,
                                   std::span<const UnlabeledExample> U);

EvalReport evaluate(const ModelParams& params, const OpenSetData& data, double rho_conf,
                    const SelectionResult* selection = nullptr);

void write_confusion_csv(const CountMatrix& m, const std::filesystem::path& path);

}  // namespace wiseopen
