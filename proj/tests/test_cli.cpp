#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <sys/wait.h>

#include "doctest.h"
#include "netloc/suite_store.hpp"
#include "netloc/synthetic_bench.hpp"
#include "test_util.hpp"

namespace fs = std::filesystem;

namespace {

int run(const std::string& args, const std::string& env = {}) {
  const std::string cmd = env + (env.empty() ? "" : " ") + "\"" NETLOC_CLI_PATH "\" " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::vector<netloc::UnitId> read_truth(const fs::path& p) {
  std::ifstream in(p);
  std::vector<netloc::UnitId> out;
  netloc::UnitId u;
  while (in >> u.layer >> u.index) out.push_back(u);
  return out;
}

std::string q(const fs::path& p) { return "\"" + p.string() + "\""; }

std::string localize_args(const fs::path& data, const fs::path& out) {
  return "localize --suite " + q(data / "LatentBeliefs.suite") + " --activations " + q(data / "activations") +
         " --localizer LatentBeliefs-simple --out " + q(out);
}

}  // namespace

TEST_CASE("cli localize, crossval and ablate-plan on a planted suite") {
  TempDir tmp("cli");
  const auto data = tmp.path / "data";
  REQUIRE(run("synth --kind suite --seed 3 --out " + q(data)) == 0);
  const auto truth = read_truth(data / "truth.txt");
  REQUIRE(truth.size() == 10);

  const auto out = tmp.path / "loc";
  REQUIRE(run(localize_args(data, out)) == 0);
  const auto mask = netloc::read_mask(out / "synthetic.LatentBeliefs-simple.target.mask");
  CHECK(netloc::recovery_score(mask, truth).recall >= 0.9);
  CHECK(slurp(out / "localize_summary.txt").find("synthetic LatentBeliefs-simple:") != std::string::npos);

  const auto again = tmp.path / "loc2";
  REQUIRE(run(localize_args(data, again) + " --threads 4") == 0);
  for (const char* f : {"synthetic.LatentBeliefs-simple.target.mask", "synthetic.LatentBeliefs-simple.least_active.mask",
                        "layer_distribution.csv", "localize_summary.txt"})
    CHECK(slurp(out / f) == slurp(again / f));

  const auto cv = tmp.path / "cv";
  REQUIRE(run("crossval --suite " + q(data / "LatentBeliefs.suite") + " --activations " + q(data / "activations") +
              " --localizer LatentBeliefs-simple --seed 1 --out " + q(cv)) == 0);
  CHECK(slurp(cv / "crossval_summary.txt").find("10/10 folds significant") != std::string::npos);

  const auto plan = tmp.path / "plan";
  REQUIRE(run("ablate-plan --mask " + q(out / "synthetic.LatentBeliefs-simple.target.mask") + " --mask " +
              q(out / "synthetic.LatentBeliefs-simple.least_active.mask") + " --out " + q(plan)) == 0);
  CHECK(slurp(plan / "ablation_plan.csv").rfind("mask_file,model_id,localizer,selection,condition,n_units", 0) == 0);

  CHECK(run("report --dir " + q(cv) + " --out " + q(cv)) == 0);
  CHECK(slurp(cv / "report.txt").find("crossval_summary.txt") != std::string::npos);
}

TEST_CASE("cli usage and validation exit codes") {
  TempDir tmp("cli_codes");
  const auto data = tmp.path / "data";
  REQUIRE(run("synth --kind suite --seed 4 --n 20 --out " + q(data)) == 0);
  CHECK(run(localize_args(data, tmp.path / "a") + " --localizer NoSuchLocalizer") == 2);
  CHECK(run("localize --fdr holm") == 2);
  CHECK(run("frobnicate") == 2);
  CHECK(run("--help") == 0);
  // a known localizer whose suite was not supplied
  CHECK(run(localize_args(data, tmp.path / "b") + " --localizer MoralIntent-simple") == 3);
  CHECK(run("crossval --suite " + q(data / "LatentBeliefs.suite") + " --activations " + q(data / "activations") +
            " --localizer LatentBeliefs-simple --k 50 --out " + q(tmp.path / "c")) == 3);
  CHECK(run("localize --suite " + q(data / "LatentBeliefs.suite") + " --activations " + q(tmp.path / "nowhere") +
            " --localizer LatentBeliefs-simple --out " + q(tmp.path / "d")) == 3);
}

TEST_CASE("cli effects verdicts") {
  TempDir tmp("cli_effects");
  REQUIRE(run("synth --kind log --seed 300 --out " + q(tmp.path)) == 0);
  REQUIRE(run("effects --log " + q(tmp.path / "accuracy_log.jsonl") + " --out " + q(tmp.path)) == 0);
  CHECK(slurp(tmp.path / "verdict.txt").find("P3.1 supported; others unsupported") != std::string::npos);

  const auto planted = tmp.path / "planted";
  REQUIRE(run("synth --kind log --seed 12 --tom-effect 0.15 --prag-effect 0.15 --control-effect 0.03 --out " +
              q(planted)) == 0);
  REQUIRE(run("effects --log " + q(planted / "accuracy_log.jsonl") + " --out " + q(planted)) == 0);
  CHECK(slurp(planted / "verdict.txt").find("all predictions supported") != std::string::npos);

  // a behavioral table with no spread in ToM accuracy leaves P1 undefined
  const auto flat = tmp.path / "flat.csv";
  {
    std::ofstream f(flat);
    f << "model_id,family,size_billions,model_type,dataset_id,ds_type,domain,accuracy,n_items\n";
    for (int m = 0; m < 4; ++m)
      for (const char* d : {"tom", "pragmatics"})
        f << "m" << m << ",fam" << m % 2 << ",7,base," << d << "_a,plain," << d << ","
          << (std::string(d) == "tom" ? 0.6 : 0.5 + 0.1 * m) << ",100\n";
  }
  CHECK(run("effects --behavioral " + q(flat) + " --out " + q(tmp.path / "flat")) == 4);
}

TEST_CASE("cli option precedence: flag over environment over config") {
  TempDir tmp("cli_prec");
  const auto data = tmp.path / "data";
  REQUIRE(run("synth --kind suite --seed 5 --out " + q(data)) == 0);
  const auto ini = tmp.path / "netloc.ini";
  {
    std::ofstream f(ini);
    f << "threads = 2\n[localize]\nalpha = 1e-300\n";
  }
  auto count = [&](const fs::path& out) {
    return netloc::read_mask(out / "synthetic.LatentBeliefs-simple.target.mask").units.size();
  };
  const auto base = localize_args(data, tmp.path / "cfg") + " --config " + q(ini);
  REQUIRE(run(base) == 0);
  CHECK(count(tmp.path / "cfg") == 0);

  REQUIRE(run(localize_args(data, tmp.path / "env") + " --config " + q(ini), "NETLOC_ALPHA=0.05") == 0);
  CHECK(count(tmp.path / "env") > 0);

  REQUIRE(run(localize_args(data, tmp.path / "flag") + " --config " + q(ini) + " --alpha 1e-300",
              "NETLOC_ALPHA=0.05") == 0);
  CHECK(count(tmp.path / "flag") == 0);

  REQUIRE(run(localize_args(data, tmp.path / "cfgenv"), "NETLOC_CONFIG=" + q(ini)) == 0);
  CHECK(count(tmp.path / "cfgenv") == 0);

  CHECK(run(localize_args(data, tmp.path / "badenv"), "NETLOC_FDR=holm") == 2);
}

TEST_CASE("cli bench") {
  TempDir tmp("cli_bench");
  CHECK(run("bench --seeds 3 --out " + q(tmp.path)) == 0);
  CHECK(slurp(tmp.path / "bench_summary.txt").find("FAIL") == std::string::npos);
}
