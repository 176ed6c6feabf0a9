// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/data_synth.hpp"

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <sstream>
#include <string>

namespace wiseopen {

namespace {

constexpr std::uint64_t kMeanStream = 1;
constexpr std::uint64_t kSampleStream = 2;

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    if (pos == std::string::npos) {
      out.push_back(line.substr(start));
      break;
    }
    out.push_back(line.substr(start, pos - start));
    start = pos + 1;
  }
  return out;
}

double parse_double(const std::string& cell, std::size_t line_no) {
  if (cell.empty()) throw ParseError("line " + std::to_string(line_no) + ": empty feature value");
  char* end = nullptr;
  errno = 0;
  const double v = std::strtod(cell.c_str(), &end);
  if (end != cell.c_str() + cell.size() || errno == ERANGE)
    throw ParseError("line " + std::to_string(line_no) + ": bad number '" + cell + "'");
  return v;
}

long parse_int(const std::string& cell, std::size_t line_no) {
  char* end = nullptr;
  errno = 0;
  const long v = std::strtol(cell.c_str(), &end, 10);
  if (cell.empty() || end != cell.c_str() + cell.size() || errno == ERANGE)
    throw ParseError("line " + std::to_string(line_no) + ": bad integer '" + cell + "'");
  return v;
}

void write_features(std::ostream& os, const Vector& x) {
  for (double v : x) os << ',' << v;
  os << '\n';
}

}  // namespace

void OpenSetConfig::validate() const {
  if (dim == 0) throw ConfigError("dim must be >= 1");
  if (k_seen < 2) throw ConfigError("k_seen must be >= 2");
  if (!(cluster_separation > 0.0)) throw ConfigError("cluster_separation must be > 0");
  if (!(cluster_stddev >= 0.0)) throw ConfigError("cluster_stddev must be >= 0");
  if (!(unfriendly_fraction >= 0.0 && unfriendly_fraction <= 1.0))
    throw ConfigError("unfriendly_fraction must lie in [0,1]");
  if (!(unfriendly_noise_scale >= 1.0)) throw ConfigError("unfriendly_noise_scale must be >= 1");
  if (dim + 1 < k_seen + k_unseen)
    throw ConfigError("dim=" + std::to_string(dim) + " cannot host " +
                      std::to_string(k_seen + k_unseen) +
                      " equidistant class means (need dim >= classes - 1)");
}

std::vector<Vector> place_class_means(std::size_t dim, std::size_t n_classes,
                                      double separation, std::uint64_t seed) {
  if (n_classes == 0) return {};
  if (dim + 1 < n_classes) throw ConfigError("place_class_means: dim too small");
  Rng rng(seed);
  const std::size_t cols = n_classes - 1;
  const auto frame = random_orthonormal_frame(dim, cols, rng);
  // Row i of the Helmert basis of the sum-zero subspace gives the coordinates
  // of simplex vertex i; vertices are sqrt(2) apart.
  const double scale = separation / std::sqrt(2.0);
  std::vector<Vector> means(n_classes, Vector(dim, 0.0));
  for (std::size_t j = 1; j <= cols; ++j) {
    const double denom = std::sqrt(static_cast<double>(j * (j + 1)));
    for (std::size_t i = 0; i <= j; ++i) {
      const double coord = (i < j ? 1.0 : -static_cast<double>(j)) / denom;
      for (std::size_t d = 0; d < dim; ++d) means[i][d] += scale * coord * frame[j - 1][d];
    }
  }
  return means;
}

OpenSetData make_openset_mixture(const OpenSetConfig& cfg) {
  cfg.validate();
  const std::size_t n_classes = cfg.k_seen + cfg.k_unseen;
  const auto means = place_class_means(cfg.dim, n_classes, cfg.cluster_separation,
                                       derive_seed(cfg.seed, kMeanStream));
  Rng rng(derive_seed(cfg.seed, kSampleStream));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::bernoulli_distribution planted(cfg.unfriendly_fraction);

  auto draw = [&](std::size_t cls, double noise) {
    Vector x = means[cls];
    for (auto& v : x) v += noise * gauss(rng);
    return x;
  };

  OpenSetData data;
  data.dim = cfg.dim;
  data.k_seen = cfg.k_seen;
  std::size_t next_idx = 0;
  auto labeled_split = [&](std::vector<LabeledExample>& out, std::size_t per_class,
                           std::size_t classes) {
    for (std::size_t c = 0; c < classes; ++c)
      for (std::size_t i = 0; i < per_class; ++i)
        out.push_back({next_idx++, draw(c, cfg.cluster_stddev), static_cast<int>(c)});
  };

  labeled_split(data.S, cfg.labels_per_class, cfg.k_seen);
  for (std::size_t c = 0; c < n_classes; ++c)
    for (std::size_t i = 0; i < cfg.unlabeled_per_class; ++i) {
      const bool bad = planted(rng);
      const double noise = cfg.cluster_stddev * (bad ? cfg.unfriendly_noise_scale : 1.0);
      data.U.push_back({next_idx++, draw(c, noise), static_cast<int>(c), bad});
    }
  labeled_split(data.V, cfg.val_per_class, cfg.k_seen);
  labeled_split(data.T, cfg.test_per_class, n_classes);
  return data;
}

Vector weak_augment(std::span<const double> x, std::uint64_t seed, const AugmentConfig& cfg) {
  Vector out(x.begin(), x.end());
  if (cfg.weak_jitter == 0.0) return out;
  Rng rng(mix_seed(seed));
  std::normal_distribution<double> gauss(0.0, cfg.weak_jitter);
  for (auto& v : out) v += gauss(rng);
  return out;
}

Vector strong_augment(std::span<const double> x, std::uint64_t seed, const AugmentConfig& cfg) {
  Vector out(x.begin(), x.end());
  Rng rng(mix_seed(seed));
  const auto n_mask = static_cast<std::size_t>(
      std::lround(std::clamp(cfg.mask_fraction, 0.0, 1.0) * static_cast<double>(out.size())));
  if (n_mask > 0) {
    std::vector<std::size_t> order(out.size());
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t i = 0; i < n_mask; ++i) out[order[i]] = 0.0;
  }
  if (cfg.strong_jitter != 0.0) {
    std::normal_distribution<double> gauss(0.0, cfg.strong_jitter);
    for (auto& v : out) v += gauss(rng);
  }
  return out;
}

void export_csv(const OpenSetData& data, const std::filesystem::path& path) {
  std::ofstream os(path);
  if (!os) throw ConfigError("cannot write " + path.string());
  os << std::setprecision(17);
  os << "split,idx,label,hidden_truth,planted_unfriendly";
  for (std::size_t d = 0; d < data.dim; ++d) os << ",x" << d;
  os << '\n';
  auto labeled = [&](const char* split, const std::vector<LabeledExample>& items) {
    for (const auto& e : items) {
      os << split << ',' << e.idx << ',' << e.label << ',' << e.label << ",0";
      write_features(os, e.x);
    }
  };
  labeled("S", data.S);
  for (const auto& e : data.U) {
    os << "U," << e.idx << ",,";
    if (e.hidden_truth) os << *e.hidden_truth;
    os << ',';
    if (e.planted_unfriendly) os << (*e.planted_unfriendly ? 1 : 0);
    write_features(os, e.x);
  }
  labeled("V", data.V);
  labeled("T", data.T);
}

OpenSetData import_csv(const std::filesystem::path& path, std::optional<std::size_t> k_seen) {
  std::ifstream is(path);
  if (!is) throw ParseError("cannot open " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw ParseError("line 1: missing header");
  const auto header = split_csv_line(line);
  static const char* kFixed[] = {"split", "idx", "label", "hidden_truth", "planted_unfriendly"};
  if (header.size() < 6) throw ParseError("line 1: header has no feature columns");
  for (std::size_t i = 0; i < 5; ++i)
    if (header[i] != kFixed[i])
      throw ParseError("line 1: expected column '" + std::string(kFixed[i]) + "', found '" +
                       header[i] + "'");
  OpenSetData data;
  data.dim = header.size() - 5;
  for (std::size_t d = 0; d < data.dim; ++d)
    if (header[5 + d] != "x" + std::to_string(d))
      throw ParseError("line 1: expected column 'x" + std::to_string(d) + "'");

  std::size_t line_no = 1;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.empty()) continue;
    const auto cells = split_csv_line(line);
    if (cells.size() != header.size())
      throw ParseError("line " + std::to_string(line_no) + ": expected " +
                       std::to_string(header.size()) + " fields, found " +
                       std::to_string(cells.size()));
    Vector x(data.dim);
    for (std::size_t d = 0; d < data.dim; ++d) x[d] = parse_double(cells[5 + d], line_no);
    const long idx = parse_int(cells[1], line_no);
    if (idx < 0) throw ParseError("line " + std::to_string(line_no) + ": negative idx");
    const auto& split = cells[0];
    if (split == "U") {
      UnlabeledExample e{static_cast<std::size_t>(idx), std::move(x), std::nullopt, std::nullopt};
      if (!cells[3].empty()) e.hidden_truth = static_cast<int>(parse_int(cells[3], line_no));
      if (!cells[4].empty()) {
        const long f = parse_int(cells[4], line_no);
        if (f != 0 && f != 1)
          throw ParseError("line " + std::to_string(line_no) + ": planted_unfriendly must be 0/1");
        e.planted_unfriendly = (f == 1);
      }
      data.U.push_back(std::move(e));
    } else if (split == "S" || split == "V" || split == "T") {
      const long label = parse_int(cells[2], line_no);
      if (label < 0) throw ParseError("line " + std::to_string(line_no) + ": negative label");
      LabeledExample e{static_cast<std::size_t>(idx), std::move(x), static_cast<int>(label)};
      (split == "S" ? data.S : split == "V" ? data.V : data.T).push_back(std::move(e));
    } else {
      throw ParseError("line " + std::to_string(line_no) + ": unknown split '" + split + "'");
    }
  }
  if (k_seen) {
    data.k_seen = *k_seen;
  } else {
    int max_label = -1;
    for (const auto* split : {&data.S, &data.V})
      for (const auto& e : *split) max_label = std::max(max_label, e.label);
    data.k_seen = static_cast<std::size_t>(max_label + 1);
  }
  for (const auto* split : {&data.S, &data.V})
    for (const auto& e : *split)
      if (e.label >= static_cast<int>(data.k_seen))
        throw ParseError("labeled split contains unseen class " + std::to_string(e.label));
  return data;
}

}  // namespace wiseopen
