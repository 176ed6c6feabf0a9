// SPDX-License-Identifier: Apache-2.0
#include "wiseopen/theory.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "wiseopen/parallel.hpp"

namespace wiseopen::theory {

namespace {

struct RunningMoments {
  double sum = 0.0;
  double sum_sq = 0.0;
  std::size_t n = 0;

  void add(double v) {
    sum += v;
    sum_sq += v * v;
    ++n;
  }
  double mean() const { return sum / static_cast<double>(n); }
  double std_error() const {
    const double m = mean();
    const double var = std::max(0.0, (sum_sq - static_cast<double>(n) * m * m) /
                                         static_cast<double>(n - 1));
    return std::sqrt(var / static_cast<double>(n));
  }
};

InequalityReport finish(std::string name, const RunningMoments& lhs, double rhs_mean,
                        const RunningMoments& margin) {
  InequalityReport r;
  r.name = std::move(name);
  r.lhs = lhs.mean();
  r.rhs = rhs_mean;
  r.margin = margin.mean();
  r.std_error = margin.std_error();
  r.draws = margin.n;
  r.holds = r.margin >= -3.0 * r.std_error;
  return r;
}

}  // namespace

QuadraticObjective QuadraticObjective::make(std::size_t dim, double mu, double smooth,
                                            std::uint64_t seed, bool isotropic) {
  if (dim == 0) throw ConfigError("quadratic: dim must be >= 1");
  if (!(mu > 0.0) || !(smooth >= mu)) throw ConfigError("quadratic: need 0 < mu <= L");
  QuadraticObjective q;
  q.dim = dim;
  q.smooth = smooth;
  q.mu = isotropic ? smooth : mu;
  q.eigenvalues.resize(dim);
  for (std::size_t i = 0; i < dim; ++i)
    q.eigenvalues[i] = (isotropic || dim == 1)
                           ? (isotropic ? smooth : mu)
                           : mu + (smooth - mu) * static_cast<double>(i) /
                                      static_cast<double>(dim - 1);
  if (!isotropic && dim == 1) q.smooth = mu;

  Rng rng(mix_seed(seed));
  const auto basis = random_orthonormal_frame(dim, dim, rng);
  q.hessian.assign(dim * dim, 0.0);
  for (std::size_t k = 0; k < dim; ++k)
    for (std::size_t i = 0; i < dim; ++i)
      for (std::size_t j = 0; j < dim; ++j)
        q.hessian[i * dim + j] += q.eigenvalues[k] * basis[k][i] * basis[k][j];
  // Exact symmetry.
  for (std::size_t i = 0; i < dim; ++i)
    for (std::size_t j = i + 1; j < dim; ++j) q.hessian[j * dim + i] = q.hessian[i * dim + j];

  std::normal_distribution<double> gauss(0.0, 1.0);
  q.theta_star.resize(dim);
  for (auto& v : q.theta_star) v = gauss(rng);
  return q;
}

Vector QuadraticObjective::hessian_times(std::span<const double> v) const {
  Vector out(dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) {
    const double* row = hessian.data() + i * dim;
    double acc = 0.0;
    for (std::size_t j = 0; j < dim; ++j) acc += row[j] * v[j];
    out[i] = acc;
  }
  return out;
}

double QuadraticObjective::quadratic_form(std::span<const double> v) const {
  return dot(v, hessian_times(v));
}

double QuadraticObjective::value(std::span<const double> theta) const {
  if (theta.size() != dim) throw ShapeError("quadratic: theta length mismatch");
  Vector e(dim);
  for (std::size_t i = 0; i < dim; ++i) e[i] = theta[i] - theta_star[i];
  return 0.5 * quadratic_form(e) + min_value;
}

Vector QuadraticObjective::gradient(std::span<const double> theta) const {
  if (theta.size() != dim) throw ShapeError("quadratic: theta length mismatch");
  Vector e(dim);
  for (std::size_t i = 0; i < dim; ++i) e[i] = theta[i] - theta_star[i];
  return hessian_times(e);
}

double power_iteration(std::span<const double> matrix, std::size_t dim, std::uint64_t seed,
                       std::size_t max_iters, double tol) {
  if (matrix.size() != dim * dim) throw ShapeError("power_iteration: matrix is not dim x dim");
  Rng rng(mix_seed(seed));
  Vector v = random_unit_vector(dim, rng);
  double lambda = 0.0;
  Vector w(dim);
  for (std::size_t it = 0; it < max_iters; ++it) {
    for (std::size_t i = 0; i < dim; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < dim; ++j) acc += matrix[i * dim + j] * v[j];
      w[i] = acc;
    }
    const double next = dot(v, w);
    const double n = norm(w);
    if (n == 0.0) return 0.0;
    for (std::size_t i = 0; i < dim; ++i) v[i] = w[i] / n;
    if (it > 0 && std::abs(next - lambda) <= tol * std::abs(next)) return next;
    lambda = next;
  }
  return lambda;
}

SpectrumMeasurement measure_spectrum(const QuadraticObjective& obj) {
  SpectrumMeasurement m;
  m.smoothness = power_iteration(obj.hessian, obj.dim, 0x5eed);
  Vector shifted(obj.hessian.size());
  for (std::size_t i = 0; i < obj.dim; ++i)
    for (std::size_t j = 0; j < obj.dim; ++j)
      shifted[i * obj.dim + j] = (i == j ? m.smoothness : 0.0) - obj.hessian[i * obj.dim + j];
  m.pl_constant = m.smoothness - power_iteration(shifted, obj.dim, 0x5eef);
  return m;
}

void OracleSpec::validate() const {
  if (!(sigma2 >= 0.0)) throw ConfigError("oracle: sigma2 must be >= 0");
  if (!(epsilon >= 0.0 && epsilon < 1.0)) throw ConfigError("oracle: epsilon must lie in [0,1)");
  if (!(nu > 1.0)) throw ConfigError("oracle: nu must be > 1");
}

double noise_coefficient(OracleKind kind, const OracleSpec& spec) {
  switch (kind) {
    case OracleKind::kId: return 0.0;
    case OracleKind::kFriendly: return std::sqrt(spec.epsilon / 2.0);
    case OracleKind::kUnfriendly: return std::sqrt(spec.nu / 2.0);
  }
  return 0.0;
}

Vector sample_oracle(OracleKind kind, const QuadraticObjective& obj, const OracleSpec& spec,
                     std::span<const double> theta, Rng& rng) {
  Vector g = obj.gradient(theta);
  const double scaled = noise_coefficient(kind, spec) * norm(g);
  const double sigma = std::sqrt(spec.sigma2);
  const Vector u = random_unit_vector(obj.dim, rng);
  const Vector v = random_unit_vector(obj.dim, rng);
  for (std::size_t i = 0; i < obj.dim; ++i) g[i] += scaled * u[i] + sigma * v[i];
  return g;
}

Vector sample_oracle(OracleKind kind, const QuadraticObjective& obj, const OracleSpec& spec,
                     std::span<const double> theta, std::uint64_t seed) {
  Rng rng(mix_seed(seed));
  return sample_oracle(kind, obj, spec, theta, rng);
}

Vector mixed_gradient(const QuadraticObjective& obj, const OracleSpec& spec,
                      std::span<const double> theta, double lambda, double tau, Rng& rng) {
  if (!(lambda >= 0.0 && lambda <= 1.0) || !(tau >= 0.0 && tau <= 1.0))
    throw ConfigError("mixed_gradient: lambda and tau must lie in [0,1]");
  const double w_id = lambda;
  const double w_fr = (1.0 - lambda) * tau;
  const double w_uf = (1.0 - lambda) * (1.0 - tau);
  Vector out(obj.dim, 0.0);
  auto add = [&](OracleKind kind, double w) {
    if (w == 0.0) return;
    const Vector g = sample_oracle(kind, obj, spec, theta, rng);
    for (std::size_t i = 0; i < obj.dim; ++i) out[i] += w * g[i];
  };
  add(OracleKind::kId, w_id);
  add(OracleKind::kFriendly, w_fr);
  add(OracleKind::kUnfriendly, w_uf);
  return out;
}

double mixture_variance_bound(const OracleSpec& spec, double lambda, double tau,
                              double grad_sq_norm) {
  return spec.sigma2 +
         (1.0 - lambda) * (tau * spec.epsilon + (1.0 - tau) * spec.nu) / 2.0 * grad_sq_norm;
}

std::string to_string(TheoremCase c) {
  switch (c) {
    case TheoremCase::kAllData: return "a";
    case TheoremCase::kLabeledOnly: return "b";
    case TheoremCase::kLabeledFriendly: return "c";
  }
  return "b";
}

TheoremCase theorem_case_from_string(const std::string& s) {
  if (s == "a" || s == "all") return TheoremCase::kAllData;
  if (s == "b" || s == "labeled_only") return TheoremCase::kLabeledOnly;
  if (s == "c" || s == "labeled_friendly") return TheoremCase::kLabeledFriendly;
  throw ConfigError("unknown theorem case '" + s + "' (expected a|b|c)");
}

double TheoryScenario::effective_lambda() const {
  return which == TheoremCase::kLabeledOnly ? 1.0 : lambda;
}

double TheoryScenario::effective_tau() const {
  return which == TheoremCase::kLabeledFriendly ? 1.0 : tau;
}

std::size_t TheoryScenario::steps() const {
  switch (which) {
    case TheoremCase::kAllData: return n + m + m_prime;
    case TheoremCase::kLabeledOnly: return n;
    case TheoremCase::kLabeledFriendly: return n + m;
  }
  return n;
}

double TheoryScenario::step_size() const {
  if (eta) return *eta;
  const double L = objective.smooth;
  const double mu = objective.mu;
  if (which == TheoremCase::kAllData) {
    const double mix = (1.0 - effective_lambda()) *
                       (effective_tau() * oracle.epsilon + (1.0 - effective_tau()) * oracle.nu);
    return mix > 1.0 ? 1.0 / (mix * L) : 1.0 / L;
  }
  const auto T = static_cast<double>(steps());
  const double arg = T * mu * mu * initial_gap() / (oracle.sigma2 * L);
  return 2.0 / (T * mu) * std::log(arg);
}

double TheoryScenario::rate_bound() const {
  if (which == TheoremCase::kAllData) return std::numeric_limits<double>::quiet_NaN();
  const double L = objective.smooth;
  const double mu = objective.mu;
  const auto T = static_cast<double>(steps());
  const double lead = L * oracle.sigma2 / (T * mu * mu);
  return lead * (1.0 + 2.0 * std::log(T * mu * mu * initial_gap() / (oracle.sigma2 * L)));
}

void TheoryScenario::validate() const {
  oracle.validate();
  if (theta0.size() != objective.dim) throw ConfigError("scenario: theta0 has wrong dimension");
  if (!(lambda >= 0.0 && lambda <= 1.0) || !(tau >= 0.0 && tau <= 1.0))
    throw ConfigError("scenario: lambda and tau must lie in [0,1]");
  if (steps() == 0) throw ConfigError("scenario: zero steps");
  if (replications == 0) throw ConfigError("scenario: replications must be >= 1");
  const double eta_v = step_size();
  if (!std::isfinite(eta_v) || !(eta_v > 0.0))
    throw ConfigError("scenario: step size is not positive (sample count too small for the "
                      "theorem schedule?)");
}

Vector start_point(const QuadraticObjective& obj, double delta0, std::uint64_t seed) {
  if (!(delta0 > 0.0)) throw ConfigError("start_point: delta0 must be > 0");
  Rng rng(mix_seed(seed));
  const Vector u = random_unit_vector(obj.dim, rng);
  const double r = std::sqrt(2.0 * delta0 / obj.quadratic_form(u));
  Vector theta = obj.theta_star;
  for (std::size_t i = 0; i < obj.dim; ++i) theta[i] += r * u[i];
  return theta;
}

SpecialCase special_case(const QuadraticObjective& obj, const OracleSpec& spec, double lambda,
                         double tau) {
  const double mix = (1.0 - lambda) * (tau * spec.epsilon + (1.0 - tau) * spec.nu);
  SpecialCase s;
  s.budget = 2.0 * mix * obj.smooth / obj.mu;
  s.eta_case_a = 1.0 / (mix * obj.smooth);
  s.eta_prime = 2.0 / (s.budget * obj.mu);
  return s;
}

bool SgdMixtureRun::any_divergent() const {
  return std::any_of(divergent.begin(), divergent.end(), [](bool b) { return b; });
}

double SgdMixtureRun::mean_final_gap() const {
  double s = 0.0;
  for (double g : final_gaps) s += g;
  return s / static_cast<double>(final_gaps.size());
}

SgdMixtureRun run_sgd_mixture(const TheoryScenario& scn, int threads) {
  scn.validate();
  SgdMixtureRun run;
  run.eta = scn.step_size();
  run.steps = scn.steps();
  const double lambda = scn.effective_lambda();
  const double tau = scn.effective_tau();
  const auto& obj = scn.objective;
  const std::size_t R = scn.replications;
  std::vector<Vector> gaps(R);
  std::vector<char> diverged(R, 0);

  parallel_for(R, threads, [&](std::size_t rep) {
    Rng rng(derive_seed(scn.seed, rep));
    Vector theta = scn.theta0;
    auto& traj = gaps[rep];
    traj.resize(run.steps + 1);
    traj[0] = obj.gap(theta);
    for (std::size_t t = 0; t < run.steps; ++t) {
      const Vector g = mixed_gradient(obj, scn.oracle, theta, lambda, tau, rng);
      for (std::size_t i = 0; i < obj.dim; ++i) theta[i] -= run.eta * g[i];
      const double gap = obj.gap(theta);
      if (!std::isfinite(gap) || gap > kDivergenceGap) {
        diverged[rep] = 1;
        std::fill(traj.begin() + static_cast<std::ptrdiff_t>(t + 1), traj.end(),
                  std::numeric_limits<double>::infinity());
        break;
      }
      traj[t + 1] = gap;
    }
  });

  run.mean_gap.assign(run.steps + 1, 0.0);
  for (std::size_t rep = 0; rep < R; ++rep) {
    for (std::size_t t = 0; t <= run.steps; ++t) run.mean_gap[t] += gaps[rep][t];
    run.final_gaps.push_back(gaps[rep].back());
    run.divergent.push_back(diverged[rep] != 0);
  }
  for (auto& v : run.mean_gap) v /= static_cast<double>(R);
  return run;
}

InequalityReport check_descent_step(const QuadraticObjective& obj, const OracleSpec& spec,
                                    std::span<const double> theta, double eta, double lambda,
                                    double tau, std::size_t draws, std::uint64_t seed) {
  if (draws < 2) throw ConfigError("check_descent_step: need >= 2 draws");
  const Vector grad = obj.gradient(theta);
  const double G = squared_norm(grad);
  const double L = obj.smooth;
  Rng rng(mix_seed(seed));
  RunningMoments lhs, rhs, margin;
  Vector step(obj.dim);
  for (std::size_t d = 0; d < draws; ++d) {
    const Vector g = mixed_gradient(obj, spec, theta, lambda, tau, rng);
    // f(theta - eta g) - f(theta) = -eta <grad, g> + (eta^2 / 2) g^T H g
    const double l = -eta * dot(grad, g) + 0.5 * eta * eta * obj.quadratic_form(g);
    const double r = -0.5 * eta * G + 0.5 * eta * eta * L * squared_distance(grad, g);
    lhs.add(l);
    rhs.add(r);
    margin.add(r - l);
  }
  return finish("descent_step", lhs, rhs.mean(), margin);
}

InequalityReport check_mixture_variance_bound(const QuadraticObjective& obj,
                                              const OracleSpec& spec,
                                              std::span<const double> theta, double lambda,
                                              double tau, std::size_t draws,
                                              std::uint64_t seed) {
  if (draws < 2) throw ConfigError("check_mixture_variance_bound: need >= 2 draws");
  const Vector grad = obj.gradient(theta);
  const double bound = mixture_variance_bound(spec, lambda, tau, squared_norm(grad));
  Rng rng(mix_seed(seed));
  RunningMoments lhs, margin;
  for (std::size_t d = 0; d < draws; ++d) {
    const double e = squared_distance(grad, mixed_gradient(obj, spec, theta, lambda, tau, rng));
    lhs.add(e);
    margin.add(bound - e);
  }
  return finish("mixture_variance_bound", lhs, bound, margin);
}

OracleConformance check_oracle(OracleKind kind, const QuadraticObjective& obj,
                               const OracleSpec& spec, std::span<const double> theta,
                               std::size_t draws, std::uint64_t seed) {
  if (draws < 2) throw ConfigError("check_oracle: need >= 2 draws");
  const Vector grad = obj.gradient(theta);
  Rng rng(mix_seed(seed));
  std::vector<RunningMoments> coords(obj.dim);
  RunningMoments var;
  for (std::size_t d = 0; d < draws; ++d) {
    const Vector g = sample_oracle(kind, obj, spec, theta, rng);
    double e2 = 0.0;
    for (std::size_t i = 0; i < obj.dim; ++i) {
      const double e = g[i] - grad[i];
      coords[i].add(e);
      e2 += e * e;
    }
    var.add(e2);
  }
  OracleConformance c;
  double chi2 = 0.0;
  for (const auto& m : coords) {
    const double se = m.std_error();
    const double z = se > 0.0 ? std::abs(m.mean()) / se : (m.mean() == 0.0 ? 0.0 : INFINITY);
    c.max_abs_z = std::max(c.max_abs_z, z);
    chi2 += z * z;
  }
  // One test over all coordinates; a max over dim z-scores exceeds 3 by chance.
  const auto dim = static_cast<double>(obj.dim);
  c.bias_z = (chi2 - dim) / std::sqrt(2.0 * dim);
  const double coef = noise_coefficient(kind, spec);
  c.variance_mean = var.mean();
  c.variance_expected = coef * coef * squared_norm(grad) + spec.sigma2;
  c.variance_std_error = var.std_error();
  c.unbiased = c.bias_z <= 3.0;
  c.variance_ok = std::abs(c.variance_mean - c.variance_expected) <=
                  3.0 * c.variance_std_error + 1e-12 * c.variance_expected;
  return c;
}

SgdTrajectory record_trajectory(const TheoryScenario& scn, std::size_t steps,
                                std::uint64_t seed) {
  scn.validate();
  SgdTrajectory traj;
  traj.eta = scn.step_size();
  Rng rng(mix_seed(seed));
  Vector theta = scn.theta0;
  traj.thetas.push_back(theta);
  for (std::size_t t = 0; t < steps; ++t) {
    Vector g = mixed_gradient(scn.objective, scn.oracle, theta, scn.effective_lambda(),
                              scn.effective_tau(), rng);
    for (std::size_t i = 0; i < theta.size(); ++i) theta[i] -= traj.eta * g[i];
    traj.used_gradients.push_back(std::move(g));
    traj.thetas.push_back(theta);
  }
  return traj;
}

DriftReport check_drift_bound(const SgdTrajectory& traj, const QuadraticObjective& obj,
                              double smooth_prime, std::size_t max_window) {
  DriftReport r;
  const std::size_t T = traj.used_gradients.size();
  if (traj.thetas.size() != T + 1) throw ShapeError("check_drift_bound: malformed trajectory");
  std::vector<Vector> exact;
  exact.reserve(T + 1);
  for (const auto& th : traj.thetas) exact.push_back(obj.gradient(th));
  Vector acc(obj.dim);
  for (std::size_t t = 0; t <= T; ++t) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t m = 0; m <= max_window && t + m <= T; ++m) {
      if (m > 0)
        for (std::size_t i = 0; i < obj.dim; ++i) acc[i] += traj.used_gradients[t + m - 1][i];
      const double lhs = std::sqrt(squared_distance(exact[t + m], exact[t]));
      const double rhs = traj.eta * smooth_prime * norm(acc);
      ++r.windows;
      if (lhs > rhs * (1.0 + 1e-9) + 1e-12) ++r.violations;
      if (rhs > 0.0) r.max_ratio = std::max(r.max_ratio, lhs / rhs);
    }
  }
  return r;
}

LsmReport check_lsm_bound(std::span<const InstanceQuadratic> instances,
                          std::span<const double> theta, double rho,
                          std::span<const double> g_bar, double mu) {
  if (!(mu > 0.0)) throw ConfigError("check_lsm_bound: mu must be > 0");
  if (!(rho >= 0.0)) throw ConfigError("check_lsm_bound: rho must be >= 0");
  LsmReport r;
  const double root = std::sqrt(rho);
  const double gbar_norm = norm(g_bar);
  for (const auto& inst : instances) {
    const Vector g = inst.loss.gradient(theta);
    if (std::sqrt(squared_distance(g, g_bar)) > root) continue;
    ++r.selected;
    const double lhs = inst.loss.value(theta);
    const double floor = inst.loss.min_value;
    const double bound = (root + gbar_norm) * (root + gbar_norm) / (2.0 * mu) + floor;
    const double tol = 1e-12 * std::max(1.0, std::abs(bound));
    if (lhs > bound + tol) ++r.violations;
    if (bound - floor > 0.0) r.max_slack_ratio = std::max(r.max_slack_ratio, (lhs - floor) / (bound - floor));
  }
  return r;
}

double fit_rate(std::span<const double> ns, std::span<const double> gaps) {
  if (ns.size() != gaps.size()) throw ShapeError("fit_rate: ns and gaps differ in length");
  if (ns.size() < 4) throw DomainError("fit_rate: need at least 4 grid points");
  const auto [lo, hi] = std::minmax_element(ns.begin(), ns.end());
  if (!(*lo > 0.0) || *hi / *lo < 100.0 * (1.0 - 1e-12))
    throw DomainError("fit_rate: grid must be positive and span at least two decades");
  double sx = 0.0, sy = 0.0;
  const auto k = static_cast<double>(ns.size());
  for (std::size_t i = 0; i < ns.size(); ++i) {
    if (!(gaps[i] > 0.0) || !std::isfinite(gaps[i]))
      throw DomainError("fit_rate: gaps must be positive and finite");
    sx += std::log(ns[i]);
    sy += std::log(gaps[i]);
  }
  const double mx = sx / k, my = sy / k;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < ns.size(); ++i) {
    const double dx = std::log(ns[i]) - mx;
    sxy += dx * (std::log(gaps[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

}  // namespace wiseopen::theory
