// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "wiseopen/data_synth.hpp"
#include "wiseopen/selection.hpp"
#include "wiseopen/theory.hpp"
#include "wiseopen/trainer.hpp"

namespace wiseopen::cli {

using Json = nlohmann::ordered_json;

/// Reads a JSON file; syntax errors become ConfigError.
Json load_json(const std::filesystem::path& path);

/// Writes `j` with two-space indentation and a trailing newline.
void write_json(const Json& j, const std::filesystem::path& path);

// ---- synth

OpenSetConfig parse_synth_config(const Json& j);
Json to_json(const OpenSetConfig& c);

// ---- train

struct TrainRunConfig {
  TrainConfig train;
  bool labeled_only = false;            // run the labeled-only baseline loop
  std::optional<std::size_t> dim;       // checked against the dataset when present
  std::optional<std::size_t> k_seen;    // overrides inference from the dataset
};

TrainRunConfig parse_train_config(const Json& j);
Json to_json(const TrainRunConfig& c);

// ---- select

struct SelectRunConfig {
  Mechanism mechanism = Mechanism::kGradientVariance;
  ThresholdPolicy threshold = ThresholdPolicy::otsu();
  UnsupConfig unsup;
  int epoch = 0;
  std::uint64_t seed = 0;
  std::optional<std::size_t> k_seen;
};

SelectRunConfig parse_select_config(const Json& j);
Json to_json(const SelectRunConfig& c);

// ---- theory

struct SweepExpectation {
  std::optional<double> slope_min;
  std::optional<double> slope_max;
  std::optional<double> bound_factor;       // final gap <= factor * bound at every point
  std::optional<double> min_gap_fraction;   // final gap >= fraction * delta0 at every point
  std::optional<double> max_gap_fraction;   // final gap <= fraction * delta0 at every point
};

struct GridPoint {
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t m_prime = 0;
};

struct Sweep {
  std::string name;
  theory::TheoremCase which = theory::TheoremCase::kLabeledOnly;
  double lambda = 1.0;
  double tau = 1.0;
  std::optional<double> eta;
  std::vector<GridPoint> grid;
  SweepExpectation expect;
};

struct InequalityChecks {
  std::size_t points = 0;        // random (theta, eta) points; 0 disables
  std::size_t draws = 100000;
  bool oracles = false;          // Monte-Carlo conformance of the three oracles
  std::size_t drift_steps = 0;   // 0 disables the drift check
  std::size_t drift_window = 10;
  std::size_t lsm_events = 0;    // 0 disables the loss-selection bound check
};

struct TheoryRunConfig {
  std::size_t dim = 20;
  double mu = 0.5;
  double smooth = 5.0;
  bool isotropic = false;
  std::uint64_t objective_seed = 7;
  theory::OracleSpec oracle;
  double delta0 = 1.0;
  std::uint64_t start_seed = 8;
  std::size_t replications = 20;
  std::uint64_t seed = 0;
  std::vector<Sweep> sweeps;
  InequalityChecks checks;
};

TheoryRunConfig parse_theory_config(const Json& j);
Json to_json(const TheoryRunConfig& c);

}  // namespace wiseopen::cli
