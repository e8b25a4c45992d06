#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace netloc::cli {

struct Common {
  unsigned threads = 1;
  std::filesystem::path out = ".";
};

struct LocalizeArgs {
  std::vector<std::filesystem::path> suites;
  std::vector<std::filesystem::path> activations;
  std::vector<std::string> localizers;  // names or "all"
  std::string model;  // empty: every model found
  double alpha = 0.05;
  double cap_fraction = 0.01;
  std::string fdr = "bh";
  std::string fdr_scope = "model";
  std::string conjunction_p = "minimizing-pair";
  bool cross_suite_pairs = false;
};

struct CrossvalArgs {
  LocalizeArgs loc;
  std::size_t k = 10;
  std::uint64_t seed = 0;
  bool per_unit = false;
};

struct AblatePlanArgs {
  std::vector<std::filesystem::path> masks;
};

struct EffectsArgs {
  std::filesystem::path log;
  std::filesystem::path behavioral;
  std::filesystem::path atoms;
  std::string localizer;  // restrict the ablation log to one localizer
};

struct ReportArgs {
  std::filesystem::path dir;
};

struct BenchArgs {
  std::size_t seeds = 20;
  bool atoms = false;
};

struct SynthArgs {
  std::string kind = "suite";  // suite | log | behavioral | atoms
  std::uint64_t seed = 0;
  // suite
  std::size_t layers = 8;
  std::size_t hidden = 128;
  std::size_t n = 100;
  std::size_t planted = 10;
  std::size_t distractors = 0;
  std::size_t target_sets = 1;
  std::size_t control_sets = 1;
  double effect = 2.0;
  bool heavy_tails = false;
  bool paired = false;
  std::string suite_name = "LatentBeliefs";
  std::string model = "synthetic";
  // log
  double intact_acc = 0.75;
  double tom_effect = 0.0;
  double prag_effect = 0.0;
  double syntax_effect = 0.0;
  double control_effect = 0.0;
  // 0 keeps the generator's default for the chosen kind
  std::size_t models = 0;
  std::size_t datasets = 0;
  std::size_t items = 0;
  // behavioral
  bool disjoint_skill = false;
  // atoms
  double percepts_effect = 1.0;
};

// Each returns the process exit code; failures are reported by exception.
int run_localize(const Common& c, const LocalizeArgs& a);
int run_crossval(const Common& c, const CrossvalArgs& a);
int run_ablate_plan(const Common& c, const AblatePlanArgs& a);
int run_effects(const Common& c, const EffectsArgs& a);
int run_report(const Common& c, const ReportArgs& a);
int run_bench(const Common& c, const BenchArgs& a);
int run_synth(const Common& c, const SynthArgs& a);

}  // namespace netloc::cli
