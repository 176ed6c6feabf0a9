// SPDX-License-Identifier: Apache-2.0
#include "cli_config.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

namespace wiseopen::cli {

static_assert(std::is_same_v<std::uint64_t, unsigned long> || std::is_same_v<std::uint64_t, std::size_t>);

namespace {

// Pulls typed fields out of one JSON object and rejects anything it did not
// consume. Error messages carry the dotted field path.
class ObjectReader {
 public:
  ObjectReader(const Json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigError(where() + ": expected an object");
  }

  bool has(const char* key) const { return j_.contains(key); }

  void get(const char* key, double& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number()) fail(key, "expected a number");
      out = v->get<double>();
      if (!std::isfinite(out)) fail(key, "must be finite");
    }
  }
  void get(const char* key, std::size_t& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_unsigned()) fail(key, "expected a non-negative integer");
      out = v->get<std::size_t>();
    }
  }
  void get(const char* key, int& out) {
    if (const Json* v = take(key)) {
      if (!v->is_number_integer()) fail(key, "expected an integer");
      out = v->get<int>();
    }
  }
  void get(const char* key, bool& out) {
    if (const Json* v = take(key)) {
      if (!v->is_boolean()) fail(key, "expected true or false");
      out = v->get<bool>();
    }
  }
  void get(const char* key, std::string& out) {
    if (const Json* v = take(key)) {
      if (!v->is_string()) fail(key, "expected a string");
      out = v->get<std::string>();
    }
  }
  void get(const char* key, std::vector<std::size_t>& out) {
    if (const Json* v = take(key)) {
      if (!v->is_array()) fail(key, "expected an array of non-negative integers");
      out.clear();
      for (const auto& e : *v) {
        if (!e.is_number_unsigned()) fail(key, "expected an array of non-negative integers");
        out.push_back(e.get<std::size_t>());
      }
    }
  }
  template <class T>
  void get(const char* key, std::optional<T>& out) {
    if (has(key)) {
      T value{};
      get(key, value);
      out = value;
    }
  }

  /// Marks `key` consumed and returns it, or nullptr when absent.
  const Json* child(const char* key) { return take(key); }

  std::string path(const char* key) const { return path_.empty() ? key : path_ + "." + key; }

  [[noreturn]] void fail(const char* key, const std::string& what) const {
    throw ConfigError(path(key) + ": " + what);
  }

  void finish() const {
    for (const auto& [key, value] : j_.items())
      if (!seen_.count(key)) throw ConfigError(path(key.c_str()) + ": unknown key");
  }

 private:
  const Json* take(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }
  std::string where() const { return path_.empty() ? "config" : path_; }

  const Json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

// Library validation throws ConfigError without a field path; prefix it.
template <class F>
void validated(const std::string& what, F&& f) {
  try {
    f();
  } catch (const ConfigError& e) {
    throw ConfigError(what + ": " + e.what());
  }
}

Mechanism read_mechanism(ObjectReader& r, const char* key, Mechanism fallback) {
  std::string s = to_string(fallback);
  r.get(key, s);
  try {
    return mechanism_from_string(s);
  } catch (const std::exception&) {
    r.fail(key, "expected one of none, gv, loss");
  }
}

ThresholdPolicy read_threshold(ObjectReader& parent, const char* key, ThresholdPolicy fallback) {
  const Json* j = parent.child(key);
  if (!j) return fallback;
  ObjectReader r(*j, parent.path(key));
  std::string kind = "otsu";
  std::size_t k = 0;
  r.get("kind", kind);
  r.get("k", k);
  r.finish();
  if (kind == "otsu") {
    if (r.has("k")) r.fail("k", "only valid with kind topk");
    return ThresholdPolicy::otsu();
  }
  if (kind == "topk") {
    if (!r.has("k")) r.fail("k", "required with kind topk");
    return ThresholdPolicy::top_k(k);
  }
  r.fail("kind", "expected otsu or topk");
}

Json threshold_json(const ThresholdPolicy& p) {
  if (p.kind == ThresholdPolicy::Kind::kOtsu) return Json{{"kind", "otsu"}};
  return Json{{"kind", "topk"}, {"k", p.k}};
}

LossWeights read_weights(ObjectReader& parent, const char* key, LossWeights w) {
  if (const Json* j = parent.child(key)) {
    ObjectReader r(*j, parent.path(key));
    r.get("lambda1", w.lambda1);
    r.get("lambda2", w.lambda2);
    r.get("lambda3", w.lambda3);
    r.finish();
    validated(parent.path(key), [&] { w.validate(); });
  }
  return w;
}

AugmentConfig read_augment(ObjectReader& parent, const char* key, AugmentConfig a) {
  if (const Json* j = parent.child(key)) {
    ObjectReader r(*j, parent.path(key));
    r.get("weak_jitter", a.weak_jitter);
    r.get("strong_jitter", a.strong_jitter);
    r.get("mask_fraction", a.mask_fraction);
    r.finish();
    if (a.weak_jitter < 0.0) r.fail("weak_jitter", "must be >= 0");
    if (a.strong_jitter < 0.0) r.fail("strong_jitter", "must be >= 0");
    if (a.mask_fraction < 0.0 || a.mask_fraction >= 1.0) r.fail("mask_fraction", "must be in [0, 1)");
  }
  return a;
}

PseudoLabelRule read_rule(ObjectReader& r, const char* key, PseudoLabelRule fallback) {
  std::string s = fallback == PseudoLabelRule::kArgmax ? "argmax" : "argmin";
  r.get(key, s);
  if (s == "argmax") return PseudoLabelRule::kArgmax;
  if (s == "argmin") return PseudoLabelRule::kArgmin;
  r.fail(key, "expected argmax or argmin");
}

const char* rule_name(PseudoLabelRule r) { return r == PseudoLabelRule::kArgmax ? "argmax" : "argmin"; }

Json weights_json(const LossWeights& w) {
  return Json{{"lambda1", w.lambda1}, {"lambda2", w.lambda2}, {"lambda3", w.lambda3}};
}

Json augment_json(const AugmentConfig& a) {
  return Json{{"weak_jitter", a.weak_jitter},
              {"strong_jitter", a.strong_jitter},
              {"mask_fraction", a.mask_fraction}};
}

}  // namespace

Json load_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError(path.string() + ": cannot open");
  try {
    return Json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

void write_json(const Json& j, const std::filesystem::path& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error(path.string() + ": cannot write");
  os << j.dump(2) << '\n';
}

// ---- synth

OpenSetConfig parse_synth_config(const Json& j) {
  ObjectReader r(j, "");
  OpenSetConfig c;
  r.get("dim", c.dim);
  r.get("k_seen", c.k_seen);
  r.get("k_unseen", c.k_unseen);
  r.get("labels_per_class", c.labels_per_class);
  r.get("unlabeled_per_class", c.unlabeled_per_class);
  r.get("val_per_class", c.val_per_class);
  r.get("test_per_class", c.test_per_class);
  r.get("cluster_separation", c.cluster_separation);
  r.get("cluster_stddev", c.cluster_stddev);
  r.get("unfriendly_fraction", c.unfriendly_fraction);
  r.get("unfriendly_noise_scale", c.unfriendly_noise_scale);
  r.get("seed", c.seed);
  r.finish();
  validated("config", [&] { c.validate(); });
  return c;
}

Json to_json(const OpenSetConfig& c) {
  return Json{{"dim", c.dim},
              {"k_seen", c.k_seen},
              {"k_unseen", c.k_unseen},
              {"labels_per_class", c.labels_per_class},
              {"unlabeled_per_class", c.unlabeled_per_class},
              {"val_per_class", c.val_per_class},
              {"test_per_class", c.test_per_class},
              {"cluster_separation", c.cluster_separation},
              {"cluster_stddev", c.cluster_stddev},
              {"unfriendly_fraction", c.unfriendly_fraction},
              {"unfriendly_noise_scale", c.unfriendly_noise_scale},
              {"seed", c.seed}};
}

// ---- train

TrainRunConfig parse_train_config(const Json& j) {
  ObjectReader r(j, "");
  TrainRunConfig c;
  auto& t = c.train;
  r.get("hidden", t.hidden);
  r.get("epochs", t.epochs);
  r.get("iters_per_epoch", t.iters_per_epoch);
  r.get("batch_l", t.batch_l);
  r.get("batch_u", t.batch_u);
  r.get("lr0", t.lr0);
  r.get("momentum", t.momentum);
  t.selection = read_mechanism(r, "selection", t.selection);
  t.threshold = read_threshold(r, "threshold", t.threshold);
  r.get("selection_interval", t.selection_interval);
  t.weights = read_weights(r, "weights", t.weights);
  r.get("rho_conf", t.rho_conf);
  t.augment = read_augment(r, "augment", t.augment);
  t.pseudo_label_rule = read_rule(r, "pseudo_label_rule", t.pseudo_label_rule);
  r.get("supervised_ova", t.supervised_ova);
  r.get("labeled_only", c.labeled_only);
  r.get("dim", c.dim);
  r.get("k_seen", c.k_seen);
  r.get("seed", t.seed);
  r.finish();
  validated("config", [&] { t.validate(); });
  return c;
}

Json to_json(const TrainRunConfig& c) {
  const auto& t = c.train;
  Json j{{"hidden", t.hidden},
         {"epochs", t.epochs},
         {"iters_per_epoch", t.iters_per_epoch},
         {"batch_l", t.batch_l},
         {"batch_u", t.batch_u},
         {"lr0", t.lr0},
         {"momentum", t.momentum},
         {"selection", to_string(t.selection)},
         {"threshold", threshold_json(t.threshold)},
         {"selection_interval", t.selection_interval},
         {"weights", weights_json(t.weights)},
         {"rho_conf", t.rho_conf},
         {"augment", augment_json(t.augment)},
         {"pseudo_label_rule", rule_name(t.pseudo_label_rule)},
         {"supervised_ova", t.supervised_ova},
         {"labeled_only", c.labeled_only}};
  if (c.dim) j["dim"] = *c.dim;
  if (c.k_seen) j["k_seen"] = *c.k_seen;
  j["seed"] = t.seed;
  return j;
}

// ---- select

SelectRunConfig parse_select_config(const Json& j) {
  ObjectReader r(j, "");
  SelectRunConfig c;
  c.mechanism = read_mechanism(r, "mechanism", c.mechanism);
  c.threshold = read_threshold(r, "threshold", c.threshold);
  c.unsup.weights = read_weights(r, "weights", c.unsup.weights);
  r.get("rho_conf", c.unsup.rho_conf);
  c.unsup.augment = read_augment(r, "augment", c.unsup.augment);
  c.unsup.rule = read_rule(r, "pseudo_label_rule", c.unsup.rule);
  r.get("epoch", c.epoch);
  r.get("k_seen", c.k_seen);
  r.get("seed", c.seed);
  r.finish();
  if (c.mechanism == Mechanism::kNone) r.fail("mechanism", "must be gv or loss");
  if (c.unsup.rho_conf <= 0.0 || c.unsup.rho_conf >= 1.0) r.fail("rho_conf", "must be in (0, 1)");
  if (c.epoch < 0) r.fail("epoch", "must be >= 0");
  return c;
}

Json to_json(const SelectRunConfig& c) {
  Json j{{"mechanism", to_string(c.mechanism)},
         {"threshold", threshold_json(c.threshold)},
         {"weights", weights_json(c.unsup.weights)},
         {"rho_conf", c.unsup.rho_conf},
         {"augment", augment_json(c.unsup.augment)},
         {"pseudo_label_rule", rule_name(c.unsup.rule)},
         {"epoch", c.epoch}};
  if (c.k_seen) j["k_seen"] = *c.k_seen;
  j["seed"] = c.seed;
  return j;
}

// ---- theory

namespace {

Sweep parse_sweep(const Json& j, const std::string& path) {
  ObjectReader r(j, path);
  Sweep s;
  std::string which;
  r.get("name", s.name);
  r.get("case", which);
  r.get("lambda", s.lambda);
  r.get("tau", s.tau);
  r.get("eta", s.eta);
  if (which.empty()) r.fail("case", "required");
  try {
    s.which = theory::theorem_case_from_string(which);
  } catch (const std::exception&) {
    r.fail("case", "expected a, b or c");
  }
  if (s.name.empty()) s.name = theory::to_string(s.which);
  if (s.lambda < 0.0 || s.lambda > 1.0) r.fail("lambda", "must be in [0, 1]");
  if (s.tau < 0.0 || s.tau > 1.0) r.fail("tau", "must be in [0, 1]");
  if (s.eta && !(*s.eta > 0.0)) r.fail("eta", "must be > 0");

  const Json* grid = r.child("grid");
  if (!grid || !grid->is_array() || grid->empty()) r.fail("grid", "expected a non-empty array");
  for (std::size_t i = 0; i < grid->size(); ++i) {
    ObjectReader g((*grid)[i], r.path("grid") + "[" + std::to_string(i) + "]");
    GridPoint p;
    g.get("n", p.n);
    g.get("m", p.m);
    g.get("m_prime", p.m_prime);
    g.finish();
    std::size_t steps = p.n;
    if (s.which == theory::TheoremCase::kLabeledFriendly) steps += p.m;
    if (s.which == theory::TheoremCase::kAllData) steps += p.m + p.m_prime;
    if (steps == 0) g.fail("n", "the grid point has no steps");
    s.grid.push_back(p);
  }

  if (const Json* e = r.child("expect")) {
    ObjectReader x(*e, r.path("expect"));
    x.get("slope_min", s.expect.slope_min);
    x.get("slope_max", s.expect.slope_max);
    x.get("bound_factor", s.expect.bound_factor);
    x.get("min_gap_fraction", s.expect.min_gap_fraction);
    x.get("max_gap_fraction", s.expect.max_gap_fraction);
    x.finish();
    if (s.expect.bound_factor && s.which == theory::TheoremCase::kAllData)
      x.fail("bound_factor", "no rate bound exists for case a");
  }
  r.finish();
  return s;
}

Json sweep_json(const Sweep& s) {
  Json grid = Json::array();
  for (const auto& p : s.grid) grid.push_back({{"n", p.n}, {"m", p.m}, {"m_prime", p.m_prime}});
  Json j{{"name", s.name}, {"case", theory::to_string(s.which)}, {"lambda", s.lambda}, {"tau", s.tau}};
  if (s.eta) j["eta"] = *s.eta;
  j["grid"] = grid;
  Json e = Json::object();
  if (s.expect.slope_min) e["slope_min"] = *s.expect.slope_min;
  if (s.expect.slope_max) e["slope_max"] = *s.expect.slope_max;
  if (s.expect.bound_factor) e["bound_factor"] = *s.expect.bound_factor;
  if (s.expect.min_gap_fraction) e["min_gap_fraction"] = *s.expect.min_gap_fraction;
  if (s.expect.max_gap_fraction) e["max_gap_fraction"] = *s.expect.max_gap_fraction;
  j["expect"] = e;
  return j;
}

}  // namespace

TheoryRunConfig parse_theory_config(const Json& j) {
  ObjectReader r(j, "");
  TheoryRunConfig c;
  if (const Json* o = r.child("objective")) {
    ObjectReader x(*o, "objective");
    x.get("dim", c.dim);
    x.get("mu", c.mu);
    x.get("smooth", c.smooth);
    x.get("isotropic", c.isotropic);
    x.get("seed", c.objective_seed);
    x.finish();
    if (c.dim == 0) x.fail("dim", "must be >= 1");
    if (!(c.smooth > 0.0)) x.fail("smooth", "must be > 0");
    if (!c.isotropic && !(c.mu > 0.0 && c.mu <= c.smooth)) x.fail("mu", "must be in (0, smooth]");
  }
  if (const Json* o = r.child("oracle")) {
    ObjectReader x(*o, "oracle");
    x.get("sigma2", c.oracle.sigma2);
    x.get("epsilon", c.oracle.epsilon);
    x.get("nu", c.oracle.nu);
    x.finish();
    validated("oracle", [&] { c.oracle.validate(); });
  }
  r.get("delta0", c.delta0);
  r.get("start_seed", c.start_seed);
  r.get("replications", c.replications);
  r.get("seed", c.seed);
  if (!(c.delta0 > 0.0)) r.fail("delta0", "must be > 0");
  if (c.replications == 0) r.fail("replications", "must be >= 1");

  const Json* sweeps = r.child("sweeps");
  if (sweeps) {
    if (!sweeps->is_array()) r.fail("sweeps", "expected an array");
    for (std::size_t i = 0; i < sweeps->size(); ++i)
      c.sweeps.push_back(parse_sweep((*sweeps)[i], "sweeps[" + std::to_string(i) + "]"));
  }
  if (const Json* o = r.child("checks")) {
    ObjectReader x(*o, "checks");
    x.get("points", c.checks.points);
    x.get("draws", c.checks.draws);
    x.get("oracles", c.checks.oracles);
    x.get("drift_steps", c.checks.drift_steps);
    x.get("drift_window", c.checks.drift_window);
    x.get("lsm_events", c.checks.lsm_events);
    x.finish();
    if (c.checks.draws < 2) x.fail("draws", "must be >= 2");
  }
  r.finish();
  const bool any_check = c.checks.points || c.checks.oracles || c.checks.drift_steps ||
                         c.checks.lsm_events;
  if (c.sweeps.empty() && !any_check) r.fail("sweeps", "nothing to run");
  return c;
}

Json to_json(const TheoryRunConfig& c) {
  Json sweeps = Json::array();
  for (const auto& s : c.sweeps) sweeps.push_back(sweep_json(s));
  return Json{{"objective",
               {{"dim", c.dim},
                {"mu", c.mu},
                {"smooth", c.smooth},
                {"isotropic", c.isotropic},
                {"seed", c.objective_seed}}},
              {"oracle", {{"sigma2", c.oracle.sigma2}, {"epsilon", c.oracle.epsilon}, {"nu", c.oracle.nu}}},
              {"delta0", c.delta0},
              {"start_seed", c.start_seed},
              {"replications", c.replications},
              {"seed", c.seed},
              {"sweeps", sweeps},
              {"checks",
               {{"points", c.checks.points},
                {"draws", c.checks.draws},
                {"oracles", c.checks.oracles},
                {"drift_steps", c.checks.drift_steps},
                {"drift_window", c.checks.drift_window},
                {"lsm_events", c.checks.lsm_events}}}};
}

}  // namespace wiseopen::cli
