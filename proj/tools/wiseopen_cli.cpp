// SPDX-License-Identifier: Apache-2.0
// wiseopen: synthetic open-set data, selection-aware training, selection
// analysis and convergence checks on quadratic objectives.
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>

#include "cli_config.hpp"
#include "wiseopen/eval_metrics.hpp"

namespace fs = std::filesystem;
using namespace wiseopen;
using wiseopen::cli::Json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitCheckFailed = 1;
constexpr int kExitUsage = 2;

struct CommonArgs {
  std::string config;
  std::string out;
  std::optional<std::uint64_t> seed;
  int threads = 1;
  bool quiet = false;
};

void add_common(CLI::App* sub, CommonArgs& a) {
  sub->add_option("--config", a.config, "JSON configuration file")->required();
  sub->add_option("--out", a.out, "output directory")->required();
  sub->add_option("--seed", a.seed, "overrides the config seed");
  sub->add_option("--threads", a.threads, "worker threads")->check(CLI::PositiveNumber);
  sub->add_flag("--quiet", a.quiet, "suppress progress output");
}

class Log {
 public:
  explicit Log(bool quiet) : quiet_(quiet), start_(std::chrono::steady_clock::now()) {}
  template <class... Args>
  void operator()(const Args&... args) const {
    if (quiet_) return;
    std::ostringstream os;
    (os << ... << args);
    std::cout << os.str() << '\n';
  }
  double seconds() const {
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  }

 private:
  bool quiet_;
  std::chrono::steady_clock::time_point start_;
};

void prepare_out(const fs::path& out) {
  std::error_code ec;
  fs::create_directories(out, ec);
  if (ec) throw ConfigError("--out: cannot create " + out.string() + ": " + ec.message());
}

// NaN and infinities have no JSON literal; they are written as null.
Json number_or_null(double v) { return std::isfinite(v) ? Json(v) : Json(nullptr); }

// ---- synth

int cmd_synth(const CommonArgs& a) {
  const Log log(a.quiet);
  auto cfg = cli::parse_synth_config(cli::load_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const fs::path out(a.out);
  prepare_out(out);
  const auto data = make_openset_mixture(cfg);
  export_csv(data, out / "dataset.csv");
  cli::write_json(cli::to_json(cfg), out / "config.json");
  log("synth: |S|=", data.S.size(), " |U|=", data.U.size(), " |V|=", data.V.size(),
      " |T|=", data.T.size(), " -> ", (out / "dataset.csv").string());
  return kExitOk;
}

// ---- train

OpenSetData load_dataset(const std::string& path, std::optional<std::size_t> k_seen) {
  try {
    return import_csv(path, k_seen);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("--data: ") + e.what());
  } catch (const ShapeError& e) {
    throw ConfigError(std::string("--data: ") + e.what());
  }
}

Json dataset_json(const std::string& path, const OpenSetData& d) {
  return Json{{"path", path},
              {"dim", d.dim},
              {"k_seen", d.k_seen},
              {"labeled", d.S.size()},
              {"unlabeled", d.U.size()},
              {"val", d.V.size()},
              {"test", d.T.size()}};
}

std::string epoch_file(int epoch) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "epoch_%04d.csv", epoch);
  return buf;
}

int cmd_train(const CommonArgs& a, const std::string& data_path) {
  const Log log(a.quiet);
  auto cfg = cli::parse_train_config(cli::load_json(a.config));
  if (a.seed) cfg.train.seed = *a.seed;
  const auto data = load_dataset(data_path, cfg.k_seen);
  if (cfg.dim && *cfg.dim != data.dim)
    throw ConfigError("dim: config says " + std::to_string(*cfg.dim) + " but the dataset has " +
                      std::to_string(data.dim));
  if (cfg.train.selection != Mechanism::kNone && data.U.empty())
    throw ConfigError("selection: the dataset has no unlabeled pool");

  const fs::path out(a.out);
  prepare_out(out);
  Json echo = cli::to_json(cfg);
  echo["data"] = data_path;
  cli::write_json(echo, out / "config.json");

  TrainConfig tc = cfg.train;
  tc.threads = a.threads;
  const auto result = cfg.labeled_only ? baseline_labeled_only(tc, data) : train(tc, data);

  result.log.write_csv(out / "metrics.csv");
  save_checkpoint(result.params, out / "checkpoint.bin");
  if (!result.selections.empty()) {
    prepare_out(out / "selections");
    for (const auto& s : result.selections)
      write_selection_csv(s, data.U, out / "selections" / epoch_file(s.scores.epoch));
  }
  const SelectionResult* last = result.selections.empty() ? nullptr : &result.selections.back();
  const auto report = evaluate(result.params, data, tc.rho_conf, last);
  write_confusion_csv(report.confusion, out / "confusion.csv");

  Json selection_epochs = Json::array();
  for (const auto& s : result.selections)
    selection_epochs.push_back({{"epoch", s.scores.epoch},
                                {"rho", number_or_null(s.rho)},
                                {"selected", s.selected.size()},
                                {"discarded", s.discarded.size()}});
  Json summary{{"config", echo},
               {"dataset", dataset_json(data_path, data)},
               {"epochs_run", result.log.records.size()},
               {"final", report.to_json()},
               {"selection_epochs", selection_epochs},
               {"warnings", result.warnings}};
  if (!result.log.records.empty()) {
    const auto& r = result.log.records.back();
    summary["final"]["loss_s"] = number_or_null(r.loss_s);
    summary["final"]["loss_u"] = number_or_null(r.loss_u);
  }
  cli::write_json(summary, out / "summary.json");

  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  log("train: id_accuracy=", report.id_accuracy, " auroc=", report.auroc,
      " wall=", log.seconds(), "s -> ", out.string());
  return kExitOk;
}

// ---- select

int cmd_select(const CommonArgs& a, const std::string& data_path, const std::string& ckpt) {
  const Log log(a.quiet);
  auto cfg = cli::parse_select_config(cli::load_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const auto data = load_dataset(data_path, cfg.k_seen);
  ModelParams params;
  try {
    params = load_checkpoint(ckpt);
  } catch (const ParseError& e) {
    throw ConfigError(std::string("--checkpoint: ") + e.what());
  }
  if (params.arch.input_dim() != data.dim)
    throw ConfigError("--checkpoint: input dim " + std::to_string(params.arch.input_dim()) +
                      " does not match the dataset dim " + std::to_string(data.dim));
  if (params.arch.k_classes() != data.k_seen)
    throw ConfigError("--checkpoint: " + std::to_string(params.arch.k_classes()) +
                      " classes but the dataset has " + std::to_string(data.k_seen));
  if (data.U.empty()) throw ConfigError("--data: the dataset has no unlabeled pool");

  const fs::path out(a.out);
  prepare_out(out);
  Json echo = cli::to_json(cfg);
  echo["data"] = data_path;
  echo["checkpoint"] = ckpt;
  cli::write_json(echo, out / "config.json");

  const ScoringContext ctx{cfg.unsup, cfg.seed, cfg.epoch, a.threads};
  const auto sel = select_unlabeled(params, data.U, data.S, cfg.mechanism, cfg.threshold, ctx);
  write_selection_csv(sel, data.U, out / "selection.csv");

  std::vector<UnlabeledExample> kept;
  for (std::size_t i : sel.selected) kept.push_back(data.U[i]);
  const auto before = merge_unseen_rows(unlabeled_confusion(params, data.U, cfg.unsup.rho_conf), data.k_seen);
  write_confusion_csv(before, out / "confusion_before.csv");
  if (!kept.empty()) {
    const auto after = merge_unseen_rows(unlabeled_confusion(params, kept, cfg.unsup.rho_conf), data.k_seen);
    write_confusion_csv(after, out / "confusion_after.csv");
  }

  Json report{{"config", echo},
              {"rho", number_or_null(sel.rho)},
              {"selected", sel.selected.size()},
              {"discarded", sel.discarded.size()}};
  const bool flagged = std::all_of(data.U.begin(), data.U.end(),
                                   [](const UnlabeledExample& e) { return e.planted_unfriendly.has_value(); });
  if (flagged) {
    const auto q = selection_quality(sel, data.U);
    report["precision"] = q.precision;
    report["recall"] = q.recall;
  }
  report["pseudo_acc_before"] = number_or_null(pseudo_label_accuracy(params, data.U, data.k_seen));
  report["pseudo_acc_after"] =
      kept.empty() ? Json(nullptr) : number_or_null(pseudo_label_accuracy(params, kept, data.k_seen));
  cli::write_json(report, out / "report.json");
  log("select: ", to_string(cfg.mechanism), " kept ", sel.selected.size(), "/", data.U.size(),
      " -> ", out.string());
  return kExitOk;
}

// ---- theory

theory::TheoryScenario make_scenario(const cli::TheoryRunConfig& c, const theory::QuadraticObjective& obj,
                                     const Vector& theta0) {
  theory::TheoryScenario s;
  s.objective = obj;
  s.oracle = c.oracle;
  s.theta0 = theta0;
  s.replications = c.replications;
  return s;
}

Json run_sweep(const cli::TheoryRunConfig& c, std::size_t index, const theory::QuadraticObjective& obj,
               const Vector& theta0, int threads, std::ostream& csv, bool& pass, const Log& log) {
  const auto& sw = c.sweeps[index];
  Json points = Json::array();
  Vector steps, gaps;
  bool sweep_ok = true;
  std::vector<std::string> failures;

  for (std::size_t p = 0; p < sw.grid.size(); ++p) {
    auto scn = make_scenario(c, obj, theta0);
    scn.which = sw.which;
    scn.lambda = sw.lambda;
    scn.tau = sw.tau;
    scn.n = sw.grid[p].n;
    scn.m = sw.grid[p].m;
    scn.m_prime = sw.grid[p].m_prime;
    scn.eta = sw.eta;
    scn.seed = derive_seed(c.seed, index, p);
    scn.validate();
    const auto run = theory::run_sgd_mixture(scn, threads);

    for (std::size_t r = 0; r < run.final_gaps.size(); ++r) {
      std::ostringstream row;
      row.precision(17);
      row << theory::to_string(sw.which) << ',' << scn.n << ',' << scn.m << ',' << scn.m_prime << ','
          << scn.effective_lambda() << ',' << scn.effective_tau() << ',' << run.eta << ',' << r << ','
          << run.final_gaps[r];
      csv << row.str() << '\n';
    }

    const double mean_gap = run.mean_final_gap();
    const double bound = scn.rate_bound();
    std::size_t divergent = 0;
    for (bool d : run.divergent) divergent += d;
    Json point{{"n", scn.n},
               {"m", scn.m},
               {"m_prime", scn.m_prime},
               {"steps", run.steps},
               {"eta", run.eta},
               {"mean_final_gap", number_or_null(mean_gap)},
               {"gap_after_first_step", number_or_null(run.mean_gap.size() > 1 ? run.mean_gap[1] : mean_gap)},
               {"rate_bound", number_or_null(bound)},
               {"divergent", divergent}};

    auto check = [&](bool ok, const std::string& what) {
      if (!ok) {
        sweep_ok = false;
        failures.push_back("T=" + std::to_string(run.steps) + ": " + what);
      }
    };
    check(divergent == 0, std::to_string(divergent) + " divergent replications");
    if (sw.expect.bound_factor) {
      const bool ok = std::isfinite(bound) && mean_gap <= *sw.expect.bound_factor * bound;
      point["within_bound"] = ok;
      check(ok, "final gap exceeds bound_factor x rate bound");
    }
    if (sw.expect.min_gap_fraction)
      check(mean_gap >= *sw.expect.min_gap_fraction * c.delta0, "final gap below min_gap_fraction");
    if (sw.expect.max_gap_fraction)
      check(mean_gap <= *sw.expect.max_gap_fraction * c.delta0, "final gap above max_gap_fraction");

    points.push_back(point);
    steps.push_back(static_cast<double>(run.steps));
    gaps.push_back(mean_gap);
    log("theory: ", sw.name, " T=", run.steps, " mean final gap=", mean_gap);
  }

  Json result{{"name", sw.name}, {"case", theory::to_string(sw.which)}, {"points", points}};
  std::optional<double> slope;
  try {
    slope = theory::fit_rate(steps, gaps);
  } catch (const DomainError&) {
  }
  result["slope"] = slope ? Json(*slope) : Json(nullptr);
  if (sw.expect.slope_min || sw.expect.slope_max) {
    const bool ok = slope && (!sw.expect.slope_min || *slope >= *sw.expect.slope_min) &&
                    (!sw.expect.slope_max || *slope <= *sw.expect.slope_max);
    if (!ok) {
      sweep_ok = false;
      failures.push_back(slope ? "slope outside the expected range" : "slope could not be fitted");
    }
  }
  result["failures"] = failures;
  result["pass"] = sweep_ok;
  pass = pass && sweep_ok;
  return result;
}

Json inequality_json(const theory::InequalityReport& r) {
  return Json{{"lhs", r.lhs}, {"rhs", r.rhs}, {"margin", r.margin}, {"std_error", r.std_error},
              {"holds", r.holds}};
}

Json run_checks(const cli::TheoryRunConfig& c, const theory::QuadraticObjective& obj,
                const Vector& theta0, bool& pass) {
  Json out = Json::object();
  const auto& k = c.checks;

  if (k.points > 0) {
    Json pts = Json::array();
    bool ok = true;
    for (std::size_t i = 0; i < k.points; ++i) {
      Rng rng(derive_seed(c.seed, 0xc0, i));
      std::uniform_real_distribution<double> unit(0.0, 1.0);
      const double gap = c.delta0 * std::pow(10.0, 2.0 * unit(rng) - 1.0);
      const auto theta = theory::start_point(obj, gap, rng());
      const double eta = (0.05 + 0.95 * unit(rng)) / obj.smooth;
      const double lambda = unit(rng);
      const double tau = unit(rng);
      const auto d = theory::check_descent_step(obj, c.oracle, theta, eta, lambda, tau, k.draws, rng());
      const auto v = theory::check_mixture_variance_bound(obj, c.oracle, theta, lambda, tau, k.draws, rng());
      ok = ok && d.holds && v.holds;
      pts.push_back({{"eta", eta}, {"lambda", lambda}, {"tau", tau}, {"descent_step", inequality_json(d)},
                     {"mixture_variance", inequality_json(v)}});
    }
    out["proof_steps"] = {{"points", pts}, {"pass", ok}};
    pass = pass && ok;
  }

  if (k.oracles) {
    Json o = Json::object();
    bool ok = true;
    const std::pair<const char*, theory::OracleKind> kinds[] = {
        {"id", theory::OracleKind::kId}, {"friendly", theory::OracleKind::kFriendly},
        {"unfriendly", theory::OracleKind::kUnfriendly}};
    std::uint64_t tag = 0;
    for (const auto& [name, kind] : kinds) {
      const auto r = theory::check_oracle(kind, obj, c.oracle, theta0, k.draws, derive_seed(c.seed, 0x0c, tag++));
      ok = ok && r.unbiased && r.variance_ok;
      o[name] = {{"bias_z", r.bias_z},
                 {"max_abs_z", r.max_abs_z},
                 {"variance_mean", r.variance_mean},
                 {"variance_expected", r.variance_expected},
                 {"variance_std_error", r.variance_std_error},
                 {"unbiased", r.unbiased},
                 {"variance_ok", r.variance_ok}};
    }
    o["pass"] = ok;
    out["oracles"] = o;
    pass = pass && ok;
  }

  if (k.drift_steps > 0) {
    auto scn = make_scenario(c, obj, theta0);
    scn.which = theory::TheoremCase::kLabeledOnly;
    scn.n = k.drift_steps;
    const auto traj = theory::record_trajectory(scn, k.drift_steps, derive_seed(c.seed, 0xd1));
    const auto r = theory::check_drift_bound(traj, obj, obj.smooth, k.drift_window);
    out["drift"] = {{"windows", r.windows}, {"violations", r.violations}, {"max_ratio", r.max_ratio},
                    {"pass", r.holds()}};
    pass = pass && r.holds();
  }

  if (k.lsm_events > 0) {
    Json events = Json::array();
    bool ok = true;
    for (std::size_t e = 0; e < k.lsm_events; ++e) {
      Rng rng(derive_seed(c.seed, 0x15, e));
      std::vector<theory::InstanceQuadratic> inst;
      for (std::size_t i = 0; i < 16; ++i)
        inst.push_back({theory::QuadraticObjective::make(c.dim, c.mu, c.smooth, rng())});
      const auto theta = theory::start_point(obj, c.delta0, rng());
      Vector g_bar(c.dim, 0.0);
      Vector dist;
      std::vector<Vector> grads;
      for (const auto& q : inst) {
        grads.push_back(q.loss.gradient(theta));
        for (std::size_t j = 0; j < c.dim; ++j) g_bar[j] += grads.back()[j] / static_cast<double>(inst.size());
      }
      for (const auto& g : grads) dist.push_back(squared_distance(g, g_bar));
      const double rho = otsu_threshold(dist);
      const double mu_lsm = std::min(c.mu, c.smooth);
      const auto r = theory::check_lsm_bound(inst, theta, std::isfinite(rho) ? rho : *std::max_element(dist.begin(), dist.end()),
                                             g_bar, mu_lsm);
      ok = ok && r.holds();
      events.push_back({{"selected", r.selected}, {"violations", r.violations},
                        {"max_slack_ratio", r.max_slack_ratio}});
    }
    out["lsm"] = {{"events", events}, {"pass", ok}};
    pass = pass && ok;
  }
  return out;
}

int cmd_theory(const CommonArgs& a) {
  const Log log(a.quiet);
  auto cfg = cli::parse_theory_config(cli::load_json(a.config));
  if (a.seed) cfg.seed = *a.seed;
  const fs::path out(a.out);
  prepare_out(out);
  const Json echo = cli::to_json(cfg);
  cli::write_json(echo, out / "config.json");

  const auto obj = theory::QuadraticObjective::make(cfg.dim, cfg.mu, cfg.smooth, cfg.objective_seed, cfg.isotropic);
  const auto theta0 = theory::start_point(obj, cfg.delta0, cfg.start_seed);

  std::ofstream csv(out / "theory.csv", std::ios::binary);
  csv << "case,n,m,m_prime,lambda,tau,eta,replication,final_gap\n";
  bool pass = true;
  Json sweeps = Json::array();
  for (std::size_t i = 0; i < cfg.sweeps.size(); ++i)
    sweeps.push_back(run_sweep(cfg, i, obj, theta0, a.threads, csv, pass, log));
  csv.close();
  const Json checks = run_checks(cfg, obj, theta0, pass);

  const Json report{{"config", echo},
                    {"objective", {{"smooth", obj.smooth}, {"pl_constant", obj.mu}}},
                    {"initial_gap", obj.gap(theta0)},
                    {"sweeps", sweeps},
                    {"checks", checks},
                    {"pass", pass}};
  cli::write_json(report, out / "report.json");
  log("theory: ", pass ? "all checks passed" : "check failure", " wall=", log.seconds(), "s -> ",
      out.string());
  return pass ? kExitOk : kExitCheckFailed;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Open-set semi-supervised learning lab with friendly-data selection"};
  app.require_subcommand(1);

  CommonArgs synth_args, train_args, select_args, theory_args;
  std::string train_data, select_data, select_ckpt;

  auto* synth = app.add_subcommand("synth", "generate a synthetic open-set dataset");
  add_common(synth, synth_args);

  auto* trn = app.add_subcommand("train", "train with optional unlabeled-data selection");
  add_common(trn, train_args);
  trn->add_option("--data", train_data, "dataset CSV")->required();

  auto* sel = app.add_subcommand("select", "score and select the unlabeled pool at a checkpoint");
  add_common(sel, select_args);
  sel->add_option("--data", select_data, "dataset CSV")->required();
  sel->add_option("--checkpoint", select_ckpt, "model checkpoint")->required();

  auto* thy = app.add_subcommand("theory", "run convergence and inequality checks");
  add_common(thy, theory_args);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (synth->parsed()) return cmd_synth(synth_args);
    if (trn->parsed()) return cmd_train(train_args, train_data);
    if (sel->parsed()) return cmd_select(select_args, select_data, select_ckpt);
    if (thy->parsed()) return cmd_theory(theory_args);
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitCheckFailed;
  }
  return kExitUsage;
}
