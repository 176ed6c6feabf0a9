// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/eval_metrics.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace wiseopen {

namespace {

std::size_t argmax(const Vector& p) {
  return static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin());
}

nlohmann::json number_or_null(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace

std::size_t CountMatrix::row_sum(std::size_t r) const {
  return std::accumulate(counts.begin() + static_cast<std::ptrdiff_t>(r * cols),
                         counts.begin() + static_cast<std::ptrdiff_t>((r + 1) * cols),
                         std::size_t{0});
}

std::size_t CountMatrix::total() const {
  return std::accumulate(counts.begin(), counts.end(), std::size_t{0});
}

nlohmann::ordered_json EvalReport::to_json() const {
  nlohmann::ordered_json j;
  j["id_accuracy"] = number_or_null(id_accuracy);
  j["auroc"] = number_or_null(auroc);
  j["pseudo_acc"] = number_or_null(pseudo_acc);
  j["selection_precision"] = selection_precision;
  j["selection_recall"] = selection_recall;
  auto rows = nlohmann::json::array();
  for (std::size_t r = 0; r < confusion.rows; ++r) {
    auto row = nlohmann::json::array();
    for (std::size_t c = 0; c < confusion.cols; ++c) row.push_back(confusion.at(r, c));
    rows.push_back(row);
  }
  j["confusion"] = rows;
  return j;
}

double top1_accuracy(const ModelParams& params, std::span<const LabeledExample> test) {
  if (test.empty()) throw DomainError("top1_accuracy: empty test set");
  std::size_t hits = 0;
  for (const auto& e : test)
    if (static_cast<int>(argmax(forward(params, e.x).p)) == e.label) ++hits;
  return static_cast<double>(hits) / static_cast<double>(test.size());
}

double ood_score(const Prediction& pred, OodScoreRule rule) {
  if (rule == OodScoreRule::kPredictedOutlierProb) return pred.q[argmax(pred.p)][1];
  double best_inlier = 0.0;
  for (const auto& q : pred.q) best_inlier = std::max(best_inlier, q[0]);
  return 1.0 - best_inlier;
}

double ood_score(const ModelParams& params, std::span<const double> x, OodScoreRule rule) {
  return ood_score(forward(params, x), rule);
}

double auroc(std::span<const double> scores_id, std::span<const double> scores_ood) {
  if (scores_id.empty() || scores_ood.empty()) throw DomainError("auroc: empty score set");
  struct Item {
    double score;
    bool ood;
  };
  std::vector<Item> all;
  all.reserve(scores_id.size() + scores_ood.size());
  for (double s : scores_id) all.push_back({s, false});
  for (double s : scores_ood) all.push_back({s, true});
  std::sort(all.begin(), all.end(), [](const Item& a, const Item& b) { return a.score < b.score; });
  // Sum of 1-based average ranks of the OOD items; tied blocks share their mean rank.
  double rank_sum = 0.0;
  std::size_t i = 0;
  while (i < all.size()) {
    std::size_t j = i;
    while (j < all.size() && all[j].score == all[i].score) ++j;
    const double avg_rank = 0.5 * static_cast<double>(i + 1 + j);
    for (std::size_t t = i; t < j; ++t)
      if (all[t].ood) rank_sum += avg_rank;
    i = j;
  }
  const auto n_ood = static_cast<double>(scores_ood.size());
  const auto n_id = static_cast<double>(scores_id.size());
  const double u = rank_sum - n_ood * (n_ood + 1.0) / 2.0;
  return u / (n_ood * n_id);
}

double test_auroc(const ModelParams& params, std::span<const LabeledExample> test,
                  OodScoreRule rule) {
  Vector id, ood;
  const auto k = static_cast<int>(params.arch.k_classes());
  for (const auto& e : test) (e.label < k ? id : ood).push_back(ood_score(params, e.x, rule));
  if (id.empty() || ood.empty()) return std::numeric_limits<double>::quiet_NaN();
  return auroc(id, ood);
}

CountMatrix unlabeled_confusion(const ModelParams& params, std::span<const UnlabeledExample> U,
                                double rho_conf) {
  const std::size_t K = params.arch.k_classes();
  int max_truth = static_cast<int>(K) - 1;
  for (const auto& e : U) {
    if (!e.hidden_truth) throw DomainError("unlabeled_confusion: item without hidden truth");
    max_truth = std::max(max_truth, *e.hidden_truth);
  }
  CountMatrix m;
  m.rows = static_cast<std::size_t>(max_truth) + 1;
  m.cols = K + 1;
  m.counts.assign(m.rows * m.cols, 0);
  for (const auto& e : U) {
    const auto d = pseudo_label(params, e.x, rho_conf);
    const std::size_t col = d.mask ? static_cast<std::size_t>(d.y_hat) : K;
    ++m.at(static_cast<std::size_t>(*e.hidden_truth), col);
  }
  return m;
}

CountMatrix merge_unseen_rows(const CountMatrix& full, std::size_t k_seen) {
  CountMatrix m;
  m.rows = k_seen + 1;
  m.cols = full.cols;
  m.counts.assign(m.rows * m.cols, 0);
  for (std::size_t r = 0; r < full.rows; ++r)
    for (std::size_t c = 0; c < full.cols; ++c) m.at(std::min(r, k_seen), c) += full.at(r, c);
  return m;
}

double pseudo_label_accuracy(const ModelParams& params, std::span<const UnlabeledExample> U,
                             std::size_t k_seen) {
  std::size_t hits = 0, total = 0;
  for (const auto& e : U) {
    if (!e.hidden_truth || *e.hidden_truth >= static_cast<int>(k_seen)) continue;
    ++total;
    if (static_cast<int>(argmax(forward(params, e.x).p)) == *e.hidden_truth) ++hits;
  }
  if (total == 0) return std::numeric_limits<double>::quiet_NaN();
  return static_cast<double>(hits) / static_cast<double>(total);
}

SelectionQuality selection_quality(std::span<const std::size_t> selected,
                                   std::span<const UnlabeledExample> U) {
  std::size_t clean_total = 0;
  for (const auto& e : U) {
    if (!e.planted_unfriendly) throw DomainError("selection_quality: item without planted flag");
    if (!*e.planted_unfriendly) ++clean_total;
  }
  if (selected.empty()) return {1.0, 0.0};
  std::size_t clean_selected = 0;
  for (auto i : selected) {
    if (i >= U.size()) throw ShapeError("selection_quality: index outside pool");
    if (!*U[i].planted_unfriendly) ++clean_selected;
  }
  SelectionQuality q;
  q.precision = static_cast<double>(clean_selected) / static_cast<double>(selected.size());
  q.recall = clean_total == 0 ? 1.0
                              : static_cast<double>(clean_selected) /
                                    static_cast<double>(clean_total);
  return q;
}

SelectionQuality selection_quality(const SelectionResult& result,
                                   std::span<const UnlabeledExample> U) {
  return selection_quality(result.selected, U);
}

EvalReport evaluate(const ModelParams& params, const OpenSetData& data, double rho_conf,
                    const SelectionResult* selection) {
  EvalReport r;
  std::vector<LabeledExample> seen_test;
  for (const auto& e : data.T)
    if (e.label < static_cast<int>(data.k_seen)) seen_test.push_back(e);
  r.id_accuracy = seen_test.empty() ? std::numeric_limits<double>::quiet_NaN()
                                    : top1_accuracy(params, seen_test);
  r.auroc = test_auroc(params, data.T);
  const bool has_truth = std::all_of(data.U.begin(), data.U.end(),
                                     [](const auto& e) { return e.hidden_truth.has_value(); });
  if (has_truth && !data.U.empty())
    r.confusion = merge_unseen_rows(unlabeled_confusion(params, data.U, rho_conf), data.k_seen);
  r.pseudo_acc = pseudo_label_accuracy(params, data.U, data.k_seen);
  const bool has_flags = std::all_of(data.U.begin(), data.U.end(), [](const auto& e) {
    return e.planted_unfriendly.has_value();
  });
  if (has_flags && !data.U.empty()) {
    std::vector<std::size_t> all(data.U.size());
    std::iota(all.begin(), all.end(), 0);
    const auto q = selection ? selection_quality(*selection, data.U) : selection_quality(all, data.U);
    r.selection_precision = q.precision;
    r.selection_recall = q.recall;
  }
  return r;
}

void write_confusion_csv(const CountMatrix& m, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << "truth";
  for (std::size_t c = 0; c + 1 < m.cols; ++c) os << ",pred" << c;
  os << ",abstain\n";
  for (std::size_t r = 0; r < m.rows; ++r) {
    os << r;
    for (std::size_t c = 0; c < m.cols; ++c) os << ',' << m.at(r, c);
    os << '\n';
  }
}

}  // namespace wiseopen
