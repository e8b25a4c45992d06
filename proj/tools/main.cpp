#include <algorithm>
#include <cctype>
#include <cstdlib>
#include <fstream>
#include <iostream>
#include <map>

#include "CLI11.hpp"
#include "commands.hpp"
#include "netloc/error.hpp"
#include "netloc/localizer_engine.hpp"

namespace {

using namespace netloc::cli;

struct Options {
  Common common;
  LocalizeArgs localize;
  CrossvalArgs crossval;
  AblatePlanArgs ablate;
  EffectsArgs effects;
  ReportArgs report;
  BenchArgs bench;
  SynthArgs synth;
  std::string config;
};

void add_common(CLI::App* sub, Options& o) {
  sub->add_option("--threads", o.common.threads, "Worker threads (outputs do not depend on it)")
      ->check(CLI::Range(1u, 1024u));
  sub->add_option("--out", o.common.out, "Output directory");
  sub->add_option("--config", o.config, "INI file; [section] names a subcommand");
}

std::string localizer_list() {
  std::string s;
  for (auto n : netloc::kLocalizerNames) s += (s.empty() ? "" : ", ") + std::string(n);
  return s;
}

void add_localize_options(CLI::App* sub, LocalizeArgs& a) {
  sub->add_option("--suite", a.suites, "Localizer suite file (repeatable)")->check(CLI::ExistingFile);
  sub->add_option("--activations", a.activations, "Activation store, or a directory searched for stores (repeatable)");
  sub->add_option("--localizer", a.localizers, "Localizer name (repeatable) or 'all': " + localizer_list());
  sub->add_option("--model", a.model, "Restrict to one model id");
  sub->add_option("--alpha", a.alpha, "Significance level")->check(CLI::Range(0.0, 1.0));
  sub->add_option("--cap-fraction", a.cap_fraction, "Largest mask as a fraction of all units")
      ->check(CLI::Range(0.0, 1.0));
  sub->add_option("--fdr", a.fdr, "Multiple-comparison correction")->check(CLI::IsMember({"bh", "bonferroni", "none"}));
  sub->add_option("--fdr-scope", a.fdr_scope, "Correction family")->check(CLI::IsMember({"model", "layer"}));
  sub->add_option("--conjunction-p", a.conjunction_p, "p-value of the conjunctive statistic")
      ->check(CLI::IsMember({"minimizing-pair", "max-p"}));
  sub->add_flag("--cross-suite-pairs", a.cross_suite_pairs, "Pair targets and controls across member suites");
}

void build(CLI::App& app, Options& o, int& code) {
  app.require_subcommand(1);

  auto* loc = app.add_subcommand("localize", "Select target and least-active subnetworks");
  add_common(loc, o);
  add_localize_options(loc, o.localize);
  loc->callback([&] { code = run_localize(o.common, o.localize); });

  auto* cv = app.add_subcommand("crossval", "k-fold generalization of a localization");
  add_common(cv, o);
  add_localize_options(cv, o.crossval.loc);
  cv->add_option("--k", o.crossval.k, "Number of folds")->check(CLI::Range(2, 1000));
  cv->add_option("--seed", o.crossval.seed, "Fold assignment seed");
  cv->add_flag("--per-unit", o.crossval.per_unit, "Also report the per-unit held-out significance fraction");
  cv->callback([&] { code = run_crossval(o.common, o.crossval); });

  auto* ab = app.add_subcommand("ablate-plan", "Canonical masks and an ablation plan for the model adapter");
  add_common(ab, o);
  ab->add_option("--mask", o.ablate.masks, "Mask file (repeatable)")->check(CLI::ExistingFile);
  ab->callback([&] { code = run_ablate_plan(o.common, o.ablate); });

  auto* ef = app.add_subcommand("effects", "Evaluate the prediction contrasts");
  add_common(ef, o);
  ef->add_option("--log", o.effects.log, "Accuracy log")->check(CLI::ExistingFile);
  ef->add_option("--behavioral", o.effects.behavioral, "Behavioral accuracy CSV")->check(CLI::ExistingFile);
  ef->add_option("--atoms", o.effects.atoms, "ATOMS-annotated accuracy CSV")->check(CLI::ExistingFile);
  ef->add_option("--localizer", o.effects.localizer, "Only use ablations under this localizer");
  ef->callback([&] { code = run_effects(o.common, o.effects); });

  auto* rp = app.add_subcommand("report", "Collect the text and CSV outputs of a directory");
  add_common(rp, o);
  rp->add_option("--dir", o.report.dir, "Directory holding earlier outputs (default: --out)");
  rp->callback([&] { code = run_report(o.common, o.report); });

  auto* bn = app.add_subcommand("bench", "Run the synthetic oracle suite");
  add_common(bn, o);
  bn->add_option("--seeds", o.bench.seeds, "Seeds per check")->check(CLI::Range(1, 100000));
  bn->add_flag("--atoms", o.bench.atoms, "Include the ATOMS subset search check");
  bn->callback([&] { code = run_bench(o.common, o.bench); });

  auto& s = o.synth;
  auto* sy = app.add_subcommand("synth", "Write synthetic suites, logs or tables");
  add_common(sy, o);
  sy->add_option("--kind", s.kind, "What to generate")->check(CLI::IsMember({"suite", "log", "behavioral", "atoms"}));
  sy->add_option("--seed", s.seed, "Generator seed");
  sy->add_option("--layers", s.layers, "suite: layers");
  sy->add_option("--hidden", s.hidden, "suite: units per layer");
  sy->add_option("--n", s.n, "suite: stimuli per condition");
  sy->add_option("--planted", s.planted, "suite: planted units");
  sy->add_option("--distractors", s.distractors, "suite: units shifted in the first target set only");
  sy->add_option("--target-sets", s.target_sets, "suite: target conditions");
  sy->add_option("--control-sets", s.control_sets, "suite: control conditions");
  sy->add_option("--effect", s.effect, "suite: planted shift in noise sd");
  sy->add_flag("--heavy-tails", s.heavy_tails, "suite: Student-t(3) noise");
  sy->add_flag("--paired", s.paired, "suite: one paired target/control set");
  sy->add_option("--suite-name", s.suite_name, "suite: suite name");
  sy->add_option("--model", s.model, "suite: model id");
  sy->add_option("--intact-acc", s.intact_acc, "log: intact accuracy");
  sy->add_option("--tom-effect", s.tom_effect, "log: ToM drop under target ablation");
  sy->add_option("--prag-effect", s.prag_effect, "log: pragmatics drop under target ablation");
  sy->add_option("--syntax-effect", s.syntax_effect, "log: syntax drop under target ablation");
  sy->add_option("--control-effect", s.control_effect, "log: drop under control ablation");
  sy->add_option("--models", s.models, "log, behavioral: number of models");
  sy->add_option("--datasets", s.datasets, "log, behavioral, atoms: datasets per domain");
  sy->add_option("--items", s.items, "log, behavioral, atoms: items per dataset");
  sy->add_flag("--disjoint-skill", s.disjoint_skill, "behavioral: independent ToM and pragmatics skills");
  sy->add_option("--percepts-effect", s.percepts_effect, "atoms: logit effect of the percepts flag");
  sy->callback([&] { code = run_synth(o.common, o.synth); });
}

// Long option names given on the command line, with or without "=value".
bool given(const std::vector<std::string>& args, std::size_t from, const std::string& lname) {
  for (std::size_t i = from; i < args.size(); ++i)
    if (args[i] == "--" + lname || args[i].rfind("--" + lname + "=", 0) == 0) return true;
  return false;
}

std::string env_name(const std::string& lname) {
  std::string s = "NETLOC_";
  for (char ch : lname) s += ch == '-' ? '_' : static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
  return s;
}

bool truthy(const std::string& v) {
  std::string l;
  for (char ch : v) l += static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  return l == "1" || l == "true" || l == "yes" || l == "on";
}

std::vector<std::string> split_commas(const std::string& v) {
  std::vector<std::string> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = v.find(',', start);
    out.push_back(v.substr(start, pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  return out;
}

// Precedence is flags > NETLOC_* environment > config file > defaults. CLI11
// alone would let the config file win over the environment, so both sources
// are turned into explicit arguments for options the user did not pass.
std::vector<std::string> inject(CLI::App& app, std::vector<std::string> args) {
  std::size_t pos = 0;
  CLI::App* sub = nullptr;
  for (; pos < args.size(); ++pos) {
    for (auto* s : app.get_subcommands({}))
      if (s->get_name() == args[pos]) sub = s;
    if (sub) break;
  }
  if (!sub) return args;

  std::string config_path;
  for (std::size_t i = pos + 1; i < args.size(); ++i) {
    if (args[i] == "--config" && i + 1 < args.size()) config_path = args[i + 1];
    if (args[i].rfind("--config=", 0) == 0) config_path = args[i].substr(9);
  }
  if (config_path.empty())
    if (const char* e = std::getenv("NETLOC_CONFIG")) config_path = e;

  std::map<std::string, std::vector<std::string>> from_config;
  if (!config_path.empty()) {
    std::ifstream in(config_path);
    if (!in) throw netloc::UsageError("cannot read config file " + config_path);
    for (const auto& item : CLI::ConfigINI().from_config(in)) {
      if (!item.parents.empty() && item.parents.front() != sub->get_name()) continue;
      std::string key = item.name;
      std::replace(key.begin(), key.end(), '_', '-');
      // section entries override global ones
      if (!item.parents.empty() || !from_config.count(key)) from_config[key] = item.inputs;
    }
  }

  std::vector<std::string> extra;
  for (const CLI::Option* opt : sub->get_options()) {
    const auto& lnames = opt->get_lnames();
    if (lnames.empty()) continue;
    const std::string& lname = lnames.front();
    if (lname == "help" || lname == "config" || given(args, pos + 1, lname)) continue;

    std::vector<std::string> values;
    if (const char* e = std::getenv(env_name(lname).c_str())) {
      values = opt->get_expected_max() > 1 ? split_commas(e) : std::vector<std::string>{e};
    } else if (auto it = from_config.find(lname); it != from_config.end()) {
      values = it->second;
    } else {
      continue;
    }
    if (opt->get_type_size() == 0) {
      if (!values.empty() && truthy(values.front())) extra.push_back("--" + lname);
      continue;
    }
    for (const auto& v : values) {
      extra.push_back("--" + lname);
      extra.push_back(v);
    }
  }
  args.insert(args.begin() + static_cast<std::ptrdiff_t>(pos) + 1, extra.begin(), extra.end());
  return args;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"netloc: functional localization, cross-validation and ablation effects for language models"};
  app.set_version_flag("--version", "netloc 1.0.0");
  Options o;
  int code = 0;
  build(app, o, code);

  try {
    std::vector<std::string> args(argv + 1, argv + argc);
    args = inject(app, std::move(args));
    std::reverse(args.begin(), args.end());
    app.parse(args);
    return code;
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForVersion& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return static_cast<int>(netloc::ErrorKind::Usage);
  } catch (const netloc::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(e.kind());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return static_cast<int>(netloc::ErrorKind::Validation);
  }
}
