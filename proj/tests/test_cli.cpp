// SPDX-License-Identifier: Apache-2.0
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sys/wait.h>

#include <chrono>
#include <cstdlib>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "test_util.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

const fs::path kCli = WISEOPEN_CLI_PATH;
const fs::path kConfigs = fs::path(WISEOPEN_SOURCE_DIR) / "configs";

int run(const std::string& args) {
  const std::string cmd = kCli.string() + " " + args + " --quiet > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p);
  os << s;
}

// Every regular file under `a` exists under `b` with the same bytes.
void check_same_tree(const fs::path& a, const fs::path& b) {
  std::size_t files = 0;
  for (const auto& e : fs::recursive_directory_iterator(a)) {
    if (!e.is_regular_file()) continue;
    const auto rel = fs::relative(e.path(), a);
    INFO(rel.string());
    REQUIRE(fs::exists(b / rel));
    CHECK(slurp(e.path()) == slurp(b / rel));
    ++files;
  }
  CHECK(files > 0);
}

// A small dataset shared by the train and select cases.
const fs::path& small_dataset() {
  static const fs::path dir = [] {
    const auto d = testutil::temp_dir("cli_small_data");
    write_text(d / "synth.json",
               R"({"dim": 10, "k_seen": 3, "k_unseen": 2, "labels_per_class": 4,
                   "unlabeled_per_class": 12, "val_per_class": 2, "test_per_class": 6,
                   "unfriendly_fraction": 0.2, "unfriendly_noise_scale": 10.0, "seed": 4})");
    REQUIRE(run("synth --config " + (d / "synth.json").string() + " --out " + (d / "out").string()) == 0);
    return d / "out" / "dataset.csv";
  }();
  return dir;
}

fs::path small_train_config(const fs::path& dir, const std::string& selection, std::size_t epochs = 3) {
  const auto p = dir / ("train_" + selection + ".json");
  write_text(p, R"({"hidden": [8], "epochs": )" + std::to_string(epochs) +
                    R"(, "iters_per_epoch": 4, "batch_l": 8, "batch_u": 8,
                       "selection": ")" + selection + R"(", "seed": 2})");
  return p;
}

}  // namespace

TEST_CASE("synth writes the dataset and the resolved config") {
  const auto dir = testutil::temp_dir("cli_synth");
  const auto cfg = (kConfigs / "synth_planted.json").string();
  REQUIRE(run("synth --config " + cfg + " --out " + (dir / "a").string()) == 0);
  CHECK(fs::exists(dir / "a" / "dataset.csv"));
  REQUIRE(fs::exists(dir / "a" / "config.json"));
  const auto echo = json::parse(slurp(dir / "a" / "config.json"));
  CHECK(echo["seed"] == 1);
  CHECK(echo["unfriendly_fraction"] == 0.1);

  REQUIRE(run("synth --config " + cfg + " --out " + (dir / "b").string()) == 0);
  check_same_tree(dir / "a", dir / "b");

  REQUIRE(run("synth --config " + cfg + " --out " + (dir / "c").string() + " --seed 9") == 0);
  CHECK(slurp(dir / "a" / "dataset.csv") != slurp(dir / "c" / "dataset.csv"));
  CHECK(json::parse(slurp(dir / "c" / "config.json"))["seed"] == 9);
}

TEST_CASE("config errors exit with status 2") {
  const auto dir = testutil::temp_dir("cli_errors");
  write_text(dir / "unknown.json", R"({"dim": 16, "colour": "blue"})");
  CHECK(run("synth --config " + (dir / "unknown.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "type.json", R"({"dim": "sixteen"})");
  CHECK(run("synth --config " + (dir / "type.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "invalid.json", R"({"dim": 4})");
  CHECK(run("synth --config " + (dir / "invalid.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "syntax.json", "{\"dim\": ");
  CHECK(run("synth --config " + (dir / "syntax.json").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run("synth --config " + (dir / "missing.json").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run("synth --out " + (dir / "o").string()) == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("") == 2);
  CHECK(run("--help") == 0);
}

TEST_CASE("train writes metrics, summary, checkpoint and selections") {
  const auto dir = testutil::temp_dir("cli_train");
  const auto data = small_dataset().string();
  const auto cfg = small_train_config(dir, "gv").string();
  REQUIRE(run("train --config " + cfg + " --data " + data + " --out " + (dir / "a").string()) == 0);
  for (const char* f : {"metrics.csv", "summary.json", "config.json", "checkpoint.bin",
                        "checkpoint.bin.json", "confusion.csv"})
    CHECK(fs::exists(dir / "a" / f));
  for (int e = 0; e < 3; ++e) {
    char name[32];
    std::snprintf(name, sizeof name, "epoch_%04d.csv", e);
    CHECK(fs::exists(dir / "a" / "selections" / name));
  }
  std::istringstream metrics(slurp(dir / "a" / "metrics.csv"));
  std::string header;
  std::getline(metrics, header);
  CHECK(header == "epoch,lr,loss_s,loss_u,selected_count,id_acc,auroc,pseudo_acc,sel_precision,sel_recall");

  const auto summary = json::parse(slurp(dir / "a" / "summary.json"));
  CHECK(summary["epochs_run"] == 3);
  CHECK(summary["config"]["selection"] == "gv");
  CHECK(summary["dataset"]["dim"] == 10);
  CHECK(summary["final"].contains("id_accuracy"));
  CHECK(summary["selection_epochs"].size() == 3);

  SUBCASE("rerun and thread count leave every output unchanged") {
    REQUIRE(run("train --config " + cfg + " --data " + data + " --out " + (dir / "b").string()) == 0);
    check_same_tree(dir / "a", dir / "b");
    REQUIRE(run("train --config " + cfg + " --data " + data + " --out " + (dir / "c").string() +
                " --threads 8") == 0);
    check_same_tree(dir / "a", dir / "c");
  }
  SUBCASE("select on the trained checkpoint") {
    write_text(dir / "select.json", R"({"mechanism": "loss", "threshold": {"kind": "topk", "k": 5}})");
    REQUIRE(run("select --config " + (dir / "select.json").string() + " --data " + data +
                " --checkpoint " + (dir / "a" / "checkpoint.bin").string() + " --out " +
                (dir / "s").string()) == 0);
    const auto report = json::parse(slurp(dir / "s" / "report.json"));
    CHECK(report["discarded"] == 5);
    CHECK(report["selected"] == 55);
    CHECK(fs::exists(dir / "s" / "selection.csv"));
    CHECK(fs::exists(dir / "s" / "confusion_before.csv"));
    CHECK(fs::exists(dir / "s" / "confusion_after.csv"));
  }
}

TEST_CASE("train rejects a dim mismatch and bad datasets") {
  const auto dir = testutil::temp_dir("cli_train_err");
  const auto data = small_dataset().string();
  write_text(dir / "dim.json", R"({"hidden": [8], "epochs": 1, "dim": 16})");
  CHECK(run("train --config " + (dir / "dim.json").string() + " --data " + data + " --out " +
            (dir / "o").string()) == 2);
  write_text(dir / "bad.csv", "split,idx,label,planted_unfriendly,x0\nS,0,zero,,1.0\n");
  CHECK(run("train --config " + small_train_config(dir, "none").string() + " --data " +
            (dir / "bad.csv").string() + " --out " + (dir / "o").string()) == 2);
  CHECK(run("train --config " + small_train_config(dir, "none").string() + " --data " +
            (dir / "absent.csv").string() + " --out " + (dir / "o").string()) == 2);
}

TEST_CASE("epochs = 1 smoke run on the bundled fixture") {
  const auto dir = testutil::temp_dir("cli_smoke");
  REQUIRE(run("synth --config " + (kConfigs / "synth_planted.json").string() + " --out " +
              (dir / "data").string()) == 0);
  auto cfg = json::parse(slurp(kConfigs / "train_gv.json"));
  cfg["epochs"] = 1;
  write_text(dir / "smoke.json", cfg.dump());
  const auto t0 = std::chrono::steady_clock::now();
  REQUIRE(run("train --config " + (dir / "smoke.json").string() + " --data " +
              (dir / "data" / "dataset.csv").string() + " --out " + (dir / "o").string()) == 0);
  CHECK(std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() < 10.0);
}

TEST_CASE("theory sanity scenario records a zero gap after one step") {
  const auto dir = testutil::temp_dir("cli_theory");
  REQUIRE(run("theory --config " + (kConfigs / "theory_sigma0.json").string() + " --out " +
              (dir / "a").string()) == 0);
  const auto report = json::parse(slurp(dir / "a" / "report.json"));
  CHECK(report["pass"] == true);
  const auto& point = report["sweeps"][0]["points"][0];
  CHECK(point["gap_after_first_step"].get<double>() <= 1e-12);
  std::istringstream csv(slurp(dir / "a" / "theory.csv"));
  std::string header, row;
  std::getline(csv, header);
  CHECK(header == "case,n,m,m_prime,lambda,tau,eta,replication,final_gap");
  std::getline(csv, row);
  CHECK(row.rfind("b,1,0,0,", 0) == 0);

  REQUIRE(run("theory --config " + (kConfigs / "theory_sigma0.json").string() + " --out " +
              (dir / "b").string() + " --threads 8") == 0);
  check_same_tree(dir / "a", dir / "b");
}

TEST_CASE("theory exit codes") {
  const auto dir = testutil::temp_dir("cli_theory_err");
  write_text(dir / "bad_case.json", R"({"sweeps": [{"case": "z", "grid": [{"n": 10}]}]})");
  CHECK(run("theory --config " + (dir / "bad_case.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "no_grid.json", R"({"sweeps": [{"case": "b"}]})");
  CHECK(run("theory --config " + (dir / "no_grid.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "extra.json", R"({"sweeps": [{"case": "b", "grid": [{"n": 10, "k": 1}]}]})");
  CHECK(run("theory --config " + (dir / "extra.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "short.json", R"({"sweeps": [{"case": "b", "grid": [{"n": 10}]}]})");
  CHECK(run("theory --config " + (dir / "short.json").string() + " --out " + (dir / "o").string()) == 2);
  write_text(dir / "empty.json", "{}");
  CHECK(run("theory --config " + (dir / "empty.json").string() + " --out " + (dir / "o").string()) == 2);

  // A demand the run cannot meet is a check failure, not a usage error.
  write_text(dir / "unmet.json",
             R"({"replications": 2, "sweeps": [{"case": "b", "grid": [{"n": 100}],
                 "expect": {"max_gap_fraction": 1e-9}}]})");
  CHECK(run("theory --config " + (dir / "unmet.json").string() + " --out " + (dir / "u").string()) == 1);
  CHECK(json::parse(slurp(dir / "u" / "report.json"))["pass"] == false);
}

TEST_CASE("bundled labeled-only grid fits a slope in range") {
  const auto dir = testutil::temp_dir("cli_theory_b");
  REQUIRE(run("theory --config " + (kConfigs / "theory_case_b.json").string() + " --out " +
              (dir / "o").string()) == 0);
  const auto report = json::parse(slurp(dir / "o" / "report.json"));
  const double slope = report["sweeps"][0]["slope"].get<double>();
  CHECK(slope >= -1.3);
  CHECK(slope <= -0.7);
  for (const auto& p : report["sweeps"][0]["points"]) CHECK(p["within_bound"] == true);
  std::istringstream csv(slurp(dir / "o" / "theory.csv"));
  std::size_t lines = 0;
  for (std::string l; std::getline(csv, l);) ++lines;
  CHECK(lines == 1 + 4 * 20);
}

TEST_CASE("gv selection matches or beats no selection on the demo seed") {
  const auto dir = testutil::temp_dir("cli_demo");
  const auto data = (dir / "data" / "dataset.csv").string();
  REQUIRE(run("synth --config " + (kConfigs / "synth_planted.json").string() + " --out " +
              (dir / "data").string()) == 0);
  REQUIRE(run("train --config " + (kConfigs / "train_none.json").string() + " --data " + data +
              " --out " + (dir / "none").string()) == 0);
  REQUIRE(run("train --config " + (kConfigs / "train_gv.json").string() + " --data " + data +
              " --out " + (dir / "gv").string()) == 0);
  const auto acc = [&](const char* name) {
    return json::parse(slurp(dir / name / "summary.json"))["final"]["id_accuracy"].get<double>();
  };
  CHECK(acc("gv") >= acc("none"));
}
