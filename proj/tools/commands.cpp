#include "commands.hpp"

#include <algorithm>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <sstream>

#include "netloc/effects.hpp"
#include "netloc/error.hpp"
#include "netloc/format.hpp"
#include "netloc/generalization.hpp"
#include "netloc/localizer_engine.hpp"
#include "netloc/oracle_suite.hpp"
#include "netloc/suite_store.hpp"
#include "netloc/synthetic_bench.hpp"

namespace fs = std::filesystem;

namespace netloc::cli {
namespace {

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

std::ifstream open_in(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ValidationError("cannot read " + path.string());
  return in;
}

std::string file_safe(std::string s) {
  for (std::size_t pos = 0; (pos = s.find('/', pos)) != std::string::npos;) s.replace(pos, 1, "__");
  return s;
}

// A path is a store when it holds a manifest; otherwise every store below it is used.
std::vector<ActivationTensor> load_tensors(const std::vector<fs::path>& roots) {
  std::vector<fs::path> dirs;
  for (const auto& root : roots) {
    if (!fs::exists(root)) throw ValidationError("activation path " + root.string() + " does not exist");
    if (fs::exists(root / "manifest")) {
      dirs.push_back(root);
      continue;
    }
    for (const auto& entry : fs::recursive_directory_iterator(root))
      if (entry.is_regular_file() && entry.path().filename() == "manifest") dirs.push_back(entry.path().parent_path());
  }
  std::sort(dirs.begin(), dirs.end());
  dirs.erase(std::unique(dirs.begin(), dirs.end()), dirs.end());
  if (dirs.empty()) throw ValidationError("no activation stores found");

  std::vector<ActivationTensor> tensors;
  for (const auto& d : dirs) tensors.push_back(read_activation_tensor(d));
  auto key = [](const ActivationTensor& t) { return std::tie(t.model_id, t.suite_name, t.condition_name); };
  std::sort(tensors.begin(), tensors.end(), [&](const auto& a, const auto& b) { return key(a) < key(b); });
  for (std::size_t i = 1; i < tensors.size(); ++i)
    if (key(tensors[i]) == key(tensors[i - 1]))
      throw ValidationError("duplicate activation store for " + tensors[i].model_id + " " + tensors[i].suite_name +
                            "/" + tensors[i].condition_name);
  return tensors;
}

std::vector<LocalizerConfig> load_localizers(const LocalizeArgs& a) {
  std::vector<LocalizerSuite> suites;
  for (const auto& p : a.suites) suites.push_back(read_suite(p));
  if (suites.empty()) throw UsageError("at least one --suite is required");

  std::vector<LocalizerConfig> out;
  const bool all = std::find(a.localizers.begin(), a.localizers.end(), "all") != a.localizers.end();
  if (all) {
    for (auto name : kLocalizerNames) {
      try {
        out.push_back(make_localizer(name, suites));
      } catch (const ValidationError&) {
        // member suite not supplied
      }
    }
    if (out.empty()) throw ValidationError("no localizer can be built from the given suites");
    return out;
  }
  if (a.localizers.empty()) throw UsageError("at least one --localizer is required");
  for (const auto& name : a.localizers) out.push_back(make_localizer(name, suites));
  return out;
}

StatOptions stat_options(const Common& c, const LocalizeArgs& a) {
  StatOptions o;
  o.alpha = a.alpha;
  o.fdr = parse_fdr_method(a.fdr);
  o.scope = a.fdr_scope == "layer" ? FdrScope::Layer : FdrScope::Model;
  o.conjunction_p = a.conjunction_p == "max-p" ? ConjunctionP::MaxP : ConjunctionP::MinimizingPair;
  o.cross_suite_pairs = a.cross_suite_pairs;
  o.threads = c.threads;
  return o;
}

// Tensors grouped by model, restricted to --model when given.
std::map<std::string, std::vector<ActivationTensor>> by_model(std::vector<ActivationTensor> tensors,
                                                              const std::string& model) {
  std::map<std::string, std::vector<ActivationTensor>> out;
  for (auto& t : tensors)
    if (model.empty() || t.model_id == model) out[t.model_id].push_back(std::move(t));
  if (out.empty()) throw ValidationError("no activation stores for model " + model);
  return out;
}

void require_conditions(const std::string& model, const LocalizerConfig& cfg,
                        const std::vector<ActivationTensor>& tensors) {
  const auto missing = missing_conditions(cfg, tensors);
  if (missing.empty()) return;
  std::string msg = "model " + model + ", localizer " + cfg.name + ": missing activation stores:";
  for (const auto& m : missing) msg += " " + m;
  throw ValidationError(msg);
}

void write_text(const fs::path& path, const std::string& text) {
  auto out = open_out(path);
  out << text;
}

}  // namespace

int run_localize(const Common& c, const LocalizeArgs& a) {
  const auto configs = load_localizers(a);
  const auto models = by_model(load_tensors(a.activations), a.model);
  const auto opts = stat_options(c, a);

  std::vector<SubnetworkMask> masks;
  std::ostringstream summary;
  for (const auto& [model, tensors] : models) {
    for (const auto& cfg : configs) {
      require_conditions(model, cfg, tensors);
      const auto stats = localize(tensors, cfg, opts);
      Diagnostics diag;
      const auto target = select_target_subnetwork(stats, a.cap_fraction, &diag);
      const auto least = select_least_active(stats, target.units.size(), a.cap_fraction);
      const auto stem = file_safe(model) + "." + cfg.name;
      write_mask(target, c.out / (stem + ".target.mask"));
      write_mask(least, c.out / (stem + ".least_active.mask"));
      masks.push_back(target);

      const auto n_sig = static_cast<std::size_t>(std::count(stats.significant.begin(), stats.significant.end(), true));
      summary << model << ' ' << cfg.name << ": " << n_sig << " significant units, mask " << target.units.size() << '/'
              << mask_capacity(a.cap_fraction, stats.size()) << " (cap), method " << to_string(cfg.method)
              << (cfg.paired ? " paired" : "") << '\n';
      for (const auto& w : diag.warnings) summary << "  warning: " << w << '\n';
    }
  }
  {
    auto out = open_out(c.out / "layer_distribution.csv");
    write_layer_distribution_csv(out, masks);
  }
  write_text(c.out / "localize_summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

int run_crossval(const Common& c, const CrossvalArgs& a) {
  const auto configs = load_localizers(a.loc);
  const auto models = by_model(load_tensors(a.loc.activations), a.loc.model);
  CrossValOptions opts;
  opts.k = a.k;
  opts.seed = a.seed;
  opts.alpha = a.loc.alpha;
  opts.cap_fraction = a.loc.cap_fraction;
  opts.stat = stat_options(c, a.loc);
  opts.per_unit = a.per_unit;

  auto csv = open_out(c.out / "crossval_folds.csv");
  csv << "model_id,localizer,fold,mask_size,test_t,test_p,significant,unit_fraction,diagnostic\n";
  std::ostringstream summary;
  for (const auto& [model, tensors] : models) {
    for (const auto& cfg : configs) {
      require_conditions(model, cfg, tensors);
      const auto folds = kfold_generalization(tensors, cfg, opts);
      for (const auto& f : folds)
        csv << model << ',' << cfg.name << ',' << f.fold_index << ',' << f.mask_size << ',' << format_double(f.test_t)
            << ',' << format_double(f.test_p) << ',' << (f.significant ? 1 : 0) << ','
            << format_double(f.unit_fraction) << ',' << f.diagnostic << '\n';
      summary << model << ' ' << cfg.name << ": " << count_significant(folds) << '/' << folds.size()
              << " folds significant\n";
    }
  }
  write_text(c.out / "crossval_summary.txt", summary.str());
  std::cout << summary.str();
  return 0;
}

int run_ablate_plan(const Common& c, const AblatePlanArgs& a) {
  if (a.masks.empty()) throw UsageError("at least one --mask is required");
  std::vector<SubnetworkMask> masks;
  for (const auto& p : a.masks) masks.push_back(read_mask(p));

  // A target and a least-active mask for the same model and localizer are ablated as a pair.
  std::map<std::pair<std::string, std::string>, std::map<SelectionKind, std::size_t>> sizes;
  for (const auto& m : masks) {
    auto& slot = sizes[{m.model_id, m.localizer_name}];
    if (slot.count(m.selection_kind))
      throw ValidationError("two " + std::string(to_string(m.selection_kind)) + " masks for " + m.model_id + " " +
                            m.localizer_name);
    slot[m.selection_kind] = m.units.size();
  }
  for (const auto& [key, s] : sizes)
    if (s.size() == 2 && s.at(SelectionKind::Target) != s.at(SelectionKind::LeastActive))
      throw ValidationError("target and least-active masks for " + key.first + " " + key.second + " differ in size");

  std::sort(masks.begin(), masks.end(), [](const auto& x, const auto& y) {
    return std::tie(x.model_id, x.localizer_name, x.selection_kind) <
           std::tie(y.model_id, y.localizer_name, y.selection_kind);
  });
  auto csv = open_out(c.out / "ablation_plan.csv");
  csv << "mask_file,model_id,localizer,selection,condition,n_units,n_layers,hidden_dim\n";
  for (const auto& m : masks) {
    const auto file = file_safe(m.model_id) + "." + m.localizer_name + "." + std::string(to_string(m.selection_kind)) +
                      ".mask";
    write_mask(m, c.out / file);
    const auto cond = m.selection_kind == SelectionKind::Target ? Condition::TargetAblation : Condition::ControlAblation;
    csv << file << ',' << m.model_id << ',' << m.localizer_name << ',' << to_string(m.selection_kind) << ','
        << to_string(cond) << ',' << m.units.size() << ',' << m.n_layers << ',' << m.hidden_dim << '\n';
  }
  std::cout << masks.size() << " masks planned\n";
  return 0;
}

int run_effects(const Common& c, const EffectsArgs& a) {
  if (a.log.empty() && a.behavioral.empty() && a.atoms.empty())
    throw UsageError("effects needs --log, --behavioral or --atoms");

  if (!a.log.empty()) {
    auto log = read_accuracy_log(a.log);
    if (!a.localizer.empty()) {
      std::erase_if(log, [&](const AccuracyRecord& r) {
        return r.condition != Condition::Intact && r.localizer_name != a.localizer;
      });
    }
    const auto report = evaluate_ablation_predictions(log);
    {
      auto out = open_out(c.out / "contrasts.csv");
      write_contrast_csv(out, report.contrasts);
    }
    {
      auto out = open_out(c.out / "descriptive.csv");
      write_descriptive_csv(out, report.descriptive);
    }
    {
      auto out = open_out(c.out / "verdict.txt");
      write_ablation_verdict(out, report);
    }
    std::cout << verdict_summary(report.contrasts) << '\n';
  }
  if (!a.behavioral.empty()) {
    auto in = open_in(a.behavioral);
    const auto rows = read_behavioral_csv(in);
    const auto report = evaluate_behavioral_predictions(rows, c.threads);
    auto out = open_out(c.out / "behavioral_verdict.txt");
    write_behavioral_verdict(out, report);
    write_behavioral_verdict(std::cout, report);
  }
  if (!a.atoms.empty()) {
    auto in = open_in(a.atoms);
    const auto rows = read_atoms_rows_csv(in);
    const auto data = atoms_design(rows);
    const auto scores = atoms_subset_search(data.base, data.flags, c.threads);
    auto out = open_out(c.out / "atoms_models.csv");
    write_atoms_csv(out, scores);
    std::cout << "ATOMS best model: base";
    for (const auto& p : scores.front().predictors) std::cout << " + " << p;
    std::cout << '\n';
  }
  return 0;
}

int run_report(const Common& c, const ReportArgs& a) {
  const fs::path dir = a.dir.empty() ? c.out : a.dir;
  static const std::pair<const char*, const char*> sections[] = {
      {"localize_summary.txt", "Localization"},
      {"crossval_summary.txt", "Cross-validation"},
      {"ablation_plan.csv", "Ablation plan"},
      {"verdict.txt", "Ablation predictions"},
      {"contrasts.csv", "Contrast table"},
      {"behavioral_verdict.txt", "Behavioral predictions"},
      {"atoms_models.csv", "ATOMS models"},
      {"bench_summary.txt", "Synthetic oracles"},
  };
  std::ostringstream report;
  std::size_t found = 0;
  for (const auto& [file, title] : sections) {
    if (!fs::exists(dir / file)) continue;
    auto in = open_in(dir / file);
    std::ostringstream body;
    body << in.rdbuf();
    report << (found++ ? "\n" : "") << "== " << title << " (" << file << ")\n" << body.str();
    if (!body.str().empty() && body.str().back() != '\n') report << '\n';
  }
  if (!found) throw ValidationError("no reportable outputs in " + dir.string());
  write_text(c.out / "report.txt", report.str());
  std::cout << report.str();
  return 0;
}

int run_bench(const Common& c, const BenchArgs& a) {
  OracleSuiteOptions opts;
  opts.seeds = a.seeds;
  opts.threads = c.threads;
  opts.include_atoms = a.atoms;
  const auto checks = run_oracle_suite(opts);

  std::ostringstream table;
  bool all = true;
  for (const auto& ch : checks) {
    all = all && ch.passed;
    table << (ch.passed ? "PASS" : "FAIL") << "  " << ch.name << ": " << format_double(ch.value)
          << (ch.at_most ? " <= " : " >= ") << format_double(ch.threshold);
    if (!ch.detail.empty()) table << "  [" << ch.detail << ']';
    table << '\n';
  }
  table << (all ? "all oracle checks passed\n" : "some oracle checks failed\n");
  write_text(c.out / "bench_summary.txt", table.str());
  std::cout << table.str();
  return all ? 0 : static_cast<int>(ErrorKind::Statistical);
}

int run_synth(const Common& c, const SynthArgs& a) {
  if (a.kind == "suite") {
    PlantSpec spec;
    spec.n_layers = a.layers;
    spec.hidden_dim = a.hidden;
    spec.n_per_condition = a.n;
    spec.effect_size = a.effect;
    spec.noise = a.heavy_tails ? NoiseKind::StudentT3 : NoiseKind::Gaussian;
    spec.seed = a.seed;
    spec.suite_name = a.suite_name;
    spec.model_id = a.model;
    spec.paired = a.paired;
    // The highest-ordered drawn units become distractors.
    auto units = random_units(a.layers, a.hidden, a.planted + a.distractors, a.seed);
    spec.distractor_units.assign(units.end() - static_cast<std::ptrdiff_t>(a.distractors), units.end());
    units.resize(a.planted);
    spec.planted_units = units;
    const auto ps = generate_planted_suite(spec, a.target_sets, a.control_sets);

    write_suite(ps.suite, c.out / (a.suite_name + ".suite"));
    for (const auto& t : ps.tensors)
      write_activation_tensor(t, c.out / "activations" / file_safe(t.model_id) / t.suite_name / t.condition_name);
    std::ostringstream truth;
    for (const auto& u : ps.truth) truth << u.layer << ' ' << u.index << '\n';
    write_text(c.out / "truth.txt", truth.str());
    std::cout << ps.tensors.size() << " activation stores, " << ps.truth.size() << " planted units\n";
  } else if (a.kind == "log") {
    EffectLogSpec spec;
    spec.intact_acc = a.intact_acc;
    spec.tom_effect = a.tom_effect;
    spec.prag_effect = a.prag_effect;
    spec.syntax_effect = a.syntax_effect;
    spec.control_effect = a.control_effect;
    if (a.models) spec.n_models = a.models;
    if (a.datasets) spec.n_datasets = a.datasets;
    if (a.items) spec.n_items = a.items;
    spec.seed = a.seed;
    const auto log = generate_effect_log(spec);
    const auto path = c.out / "accuracy_log.jsonl";
    fs::create_directories(c.out);
    fs::remove(path);
    append_accuracy_records(path, log.records);
    for (const auto& w : log.warnings) std::cerr << "warning: " << w << '\n';
    std::cout << log.records.size() << " accuracy records\n";
  } else if (a.kind == "behavioral") {
    BehavioralSpec spec;
    if (a.models) spec.n_models = a.models;
    if (a.datasets) spec.n_datasets = a.datasets;
    if (a.items) spec.n_items = a.items;
    spec.shared_skill = !a.disjoint_skill;
    spec.seed = a.seed;
    const auto rows = generate_behavioral_table(spec);
    auto out = open_out(c.out / "behavioral.csv");
    write_behavioral_csv(out, rows);
    std::cout << rows.size() << " behavioral rows\n";
  } else if (a.kind == "atoms") {
    AtomsSpec spec;
    if (a.datasets) spec.n_datasets = a.datasets;
    if (a.items) spec.n_items = a.items;
    spec.percepts_effect = a.percepts_effect;
    spec.seed = a.seed;
    const auto rows = generate_atoms_rows(spec);
    auto out = open_out(c.out / "atoms.csv");
    write_atoms_rows_csv(out, rows);
    std::cout << rows.size() << " ATOMS rows\n";
  } else {
    throw UsageError("unknown synth kind '" + a.kind + "'");
  }
  return 0;
}

}  // namespace netloc::cli
