// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "wiseopen/common.hpp"

namespace wiseopen::theory {

/// f(theta) = 0.5 (theta - theta*)^T H (theta - theta*) + f*, with
/// H = Q diag(eigenvalues) Q^T for a seeded random orthogonal Q.
/// Smoothness constant = max eigenvalue, PL constant = min eigenvalue.
struct QuadraticObjective {
  std::size_t dim = 0;
  double mu = 0.0;
  double smooth = 0.0;
  Vector eigenvalues;
  Vector hessian;  // dim x dim, row-major, symmetric
  Vector theta_star;
  double min_value = 0.0;

  /// Eigenvalues evenly spaced over [mu, smooth]; isotropic puts all at smooth.
  static QuadraticObjective make(std::size_t dim, double mu, double smooth, std::uint64_t seed,
                                 bool isotropic = false);

  double value(std::span<const double> theta) const;
  double gap(std::span<const double> theta) const { return value(theta) - min_value; }
  Vector gradient(std::span<const double> theta) const;
  Vector hessian_times(std::span<const double> v) const;
  double quadratic_form(std::span<const double> v) const;  // v^T H v
};

/// Largest eigenvalue of a symmetric dim x dim matrix by power iteration with
/// Rayleigh quotients.
double power_iteration(std::span<const double> matrix, std::size_t dim, std::uint64_t seed,
                       std::size_t max_iters = 200000, double tol = 1e-15);

struct SpectrumMeasurement {
  double smoothness = 0.0;  // lambda_max(H)
  double pl_constant = 0.0;  // lambda_min(H), via power iteration on (c I - H)
};
SpectrumMeasurement measure_spectrum(const QuadraticObjective& obj);

struct OracleSpec {
  double sigma2 = 1.0;
  double epsilon = 0.05;
  double nu = 1e4;

  void validate() const;
};

enum class OracleKind { kId, kFriendly, kUnfriendly };

/// c in g = grad + c * ||grad|| * u + sigma * v: 0, sqrt(eps/2), sqrt(nu/2).
double noise_coefficient(OracleKind kind, const OracleSpec& spec);

/// One stochastic gradient draw. u and v are independent uniform unit vectors,
/// so E[g] = grad and E||g - grad||^2 = c^2 ||grad||^2 + sigma^2 exactly.
Vector sample_oracle(OracleKind kind, const QuadraticObjective& obj, const OracleSpec& spec,
                     std::span<const double> theta, Rng& rng);
Vector sample_oracle(OracleKind kind, const QuadraticObjective& obj, const OracleSpec& spec,
                     std::span<const double> theta, std::uint64_t seed);

/// lambda g_id + (1 - lambda)(tau g_fr + (1 - tau) g_uf), independent draws.
/// Components with zero weight are not drawn.
Vector mixed_gradient(const QuadraticObjective& obj, const OracleSpec& spec,
                      std::span<const double> theta, double lambda, double tau, Rng& rng);

/// sigma^2 + (1 - lambda) (tau eps + (1 - tau) nu)/2 ||grad||^2.
double mixture_variance_bound(const OracleSpec& spec, double lambda, double tau,
                              double grad_sq_norm);

enum class TheoremCase {
  kAllData,         // (a): labeled + friendly + unfriendly, T = n + m + m'
  kLabeledOnly,     // (b): lambda = 1, T = n
  kLabeledFriendly  // (c): tau = 1, T = n + m
};

std::string to_string(TheoremCase c);
TheoremCase theorem_case_from_string(const std::string& s);

struct TheoryScenario {
  QuadraticObjective objective;
  OracleSpec oracle;
  TheoremCase which = TheoremCase::kLabeledOnly;
  double lambda = 1.0;
  double tau = 1.0;
  std::size_t n = 0;
  std::size_t m = 0;
  std::size_t m_prime = 0;
  std::optional<double> eta;  // overrides the theorem step size
  Vector theta0;
  std::uint64_t seed = 0;
  std::size_t replications = 1;

  double initial_gap() const { return objective.gap(theta0); }
  /// Effective mixing weights: case (b) forces lambda = 1, case (c) tau = 1.
  double effective_lambda() const;
  double effective_tau() const;
  std::size_t steps() const;
  /// The step size each theorem case prescribes (or the override).
  double step_size() const;
  /// (L sigma^2 / (T mu^2)) (1 + 2 log(T mu^2 D0 / (sigma^2 L))) for cases (b)/(c).
  double rate_bound() const;
  void validate() const;
};

/// theta0 = theta* + r u with u a seeded random unit vector and r chosen so the
/// initial gap equals delta0.
Vector start_point(const QuadraticObjective& obj, double delta0, std::uint64_t seed);

struct SpecialCase {
  double budget = 0.0;      // n + m + m' = 2 (1 - lambda)(tau eps + (1 - tau) nu) L / mu
  double eta_case_a = 0.0;  // 1 / ((1 - lambda)(tau eps + (1 - tau) nu) L)
  double eta_prime = 0.0;   // 2 / (budget mu)
};
SpecialCase special_case(const QuadraticObjective& obj, const OracleSpec& spec, double lambda,
                         double tau);

inline constexpr double kDivergenceGap = 1e12;

struct SgdMixtureRun {
  Vector mean_gap;      // averaged over replications, entries for steps 0..T
  Vector final_gaps;    // one per replication
  std::vector<bool> divergent;
  double eta = 0.0;
  std::size_t steps = 0;

  bool any_divergent() const;
  double mean_final_gap() const;
};

/// Runs R independent replications of theta_{t+1} = theta_t - eta g_mix(theta_t).
SgdMixtureRun run_sgd_mixture(const TheoryScenario& scn, int threads = 1);

struct InequalityReport {
  std::string name;
  double lhs = 0.0;        // Monte-Carlo mean of the left side
  double rhs = 0.0;        // right side (mean when it is itself estimated)
  double margin = 0.0;     // mean of (rhs - lhs); >= 0 when the inequality holds
  double std_error = 0.0;  // of the margin
  std::size_t draws = 0;
  bool holds = false;      // margin >= -3 std_error
};

/// E[f(theta - eta g) - f(theta)] <= -(eta/2)||grad||^2 + (eta^2 L / 2) E||grad - g||^2
/// with g from the (lambda, tau) mixture.
InequalityReport check_descent_step(const QuadraticObjective& obj, const OracleSpec& spec,
                                    std::span<const double> theta, double eta, double lambda,
                                    double tau, std::size_t draws, std::uint64_t seed);

/// E||grad - g_mix||^2 <= mixture_variance_bound.
InequalityReport check_mixture_variance_bound(const QuadraticObjective& obj,
                                              const OracleSpec& spec,
                                              std::span<const double> theta, double lambda,
                                              double tau, std::size_t draws,
                                              std::uint64_t seed);

struct OracleConformance {
  double max_abs_z = 0.0;        // largest |mean_i / se_i| over coordinates of g - grad
  double bias_z = 0.0;           // (sum_i z_i^2 - dim) / sqrt(2 dim), ~N(0,1) when unbiased
  double variance_mean = 0.0;    // Monte-Carlo E||g - grad||^2
  double variance_expected = 0.0;
  double variance_std_error = 0.0;
  bool unbiased = false;          // bias_z <= 3
  bool variance_ok = false;       // |mean - expected| <= 3 se
};
OracleConformance check_oracle(OracleKind kind, const QuadraticObjective& obj,
                               const OracleSpec& spec, std::span<const double> theta,
                               std::size_t draws, std::uint64_t seed);

/// theta_0..theta_T and the stochastic gradients used at each step.
struct SgdTrajectory {
  std::vector<Vector> thetas;
  std::vector<Vector> used_gradients;
  double eta = 0.0;
};
SgdTrajectory record_trajectory(const TheoryScenario& scn, std::size_t steps,
                                std::uint64_t seed);

struct DriftReport {
  std::size_t windows = 0;
  std::size_t violations = 0;
  double max_ratio = 0.0;  // max lhs / rhs over windows with rhs > 0
  bool holds() const { return violations == 0; }
};

/// For every start t and window 0 <= m <= max_window:
/// ||grad(theta_{t+m}) - grad(theta_t)|| <= eta L' ||sum_{k=0}^{m-1} g_{t+k}||.
DriftReport check_drift_bound(const SgdTrajectory& traj, const QuadraticObjective& obj,
                              double smooth_prime, std::size_t max_window);

/// One per-instance quadratic loss with PL constant >= mu.
struct InstanceQuadratic {
  QuadraticObjective loss;
};

struct LsmReport {
  std::size_t selected = 0;
  std::size_t violations = 0;
  double max_slack_ratio = 0.0;  // max (lhs - min) / (bound - min) over selected
  bool holds() const { return violations == 0; }
};

/// For every instance with ||grad_x(theta) - g_bar|| <= sqrt(rho):
/// l_x(theta) <= (sqrt(rho) + ||g_bar||)^2 / (2 mu) + l_x(theta*_x).
LsmReport check_lsm_bound(std::span<const InstanceQuadratic> instances,
                          std::span<const double> theta, double rho,
                          std::span<const double> g_bar, double mu);

/// Least-squares slope of log(gap) against log(n).
double fit_rate(std::span<const double> ns, std::span<const double> gaps);

}  // namespace wiseopen::theory
