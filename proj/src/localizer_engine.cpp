#include "netloc/localizer_engine.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <cstdio>
#include <ostream>

#include "netloc/error.hpp"
#include "netloc/parallel.hpp"
#include "netloc/unit_stats.hpp"

namespace netloc {
namespace {

constexpr std::size_t kUnitBlock = 256;

const LocalizerSuite& find_suite(std::span<const LocalizerSuite> suites, std::string_view name,
                                 std::string_view localizer) {
  for (const auto& s : suites)
    if (s.name == name) return s;
  throw ValidationError("missing suite " + std::string(name) + " required by localizer " + std::string(localizer));
}

SuitePart whole_suite(const LocalizerSuite& suite) {
  SuitePart part;
  part.suite = suite.name;
  for (const auto& set : suite.target_sets) part.target_conditions.push_back(set.condition_name);
  for (const auto& set : suite.control_sets) part.control_conditions.push_back(set.condition_name);
  part.paired = suite.paired;
  return part;
}

const ActivationTensor* find_tensor(std::span<const ActivationTensor> tensors, const std::string& suite,
                                    const std::string& condition) {
  for (const auto& t : tensors)
    if (t.suite_name == suite && t.condition_name == condition) return &t;
  return nullptr;
}

struct ResolvedTensors {
  // Per part, in config order.
  std::vector<std::vector<const ActivationTensor*>> targets;
  std::vector<std::vector<const ActivationTensor*>> controls;
  std::string model_id;
  std::size_t n_layers = 0;
  std::size_t hidden_dim = 0;

  std::vector<const ActivationTensor*> all_targets() const {
    std::vector<const ActivationTensor*> out;
    for (const auto& v : targets) out.insert(out.end(), v.begin(), v.end());
    return out;
  }
  std::vector<const ActivationTensor*> all_controls() const {
    std::vector<const ActivationTensor*> out;
    for (const auto& v : controls) out.insert(out.end(), v.begin(), v.end());
    return out;
  }
};

ResolvedTensors resolve(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg) {
  const auto missing = missing_conditions(cfg, tensors);
  if (!missing.empty()) {
    std::string msg = "localizer " + cfg.name + ": missing activations for";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  ResolvedTensors r;
  const ActivationTensor* first = nullptr;
  auto check = [&](const ActivationTensor* t) {
    if (!first) {
      first = t;
      return;
    }
    if (t->model_id != first->model_id || t->n_layers != first->n_layers || t->hidden_dim != first->hidden_dim)
      throw ValidationError("localizer " + cfg.name + ": shape mismatch between " + first->suite_name + "/" +
                            first->condition_name + " and " + t->suite_name + "/" + t->condition_name);
  };
  for (const auto& part : cfg.parts) {
    auto& tv = r.targets.emplace_back();
    auto& cv = r.controls.emplace_back();
    for (const auto& c : part.target_conditions) {
      tv.push_back(find_tensor(tensors, part.suite, c));
      check(tv.back());
    }
    for (const auto& c : part.control_conditions) {
      cv.push_back(find_tensor(tensors, part.suite, c));
      check(cv.back());
    }
  }
  if (!first) throw ValidationError("localizer " + cfg.name + ": no conditions configured");
  r.model_id = first->model_id;
  r.n_layers = first->n_layers;
  r.hidden_dim = first->hidden_dim;
  return r;
}

UnitStatMap empty_map(const ResolvedTensors& r, const LocalizerConfig& cfg, const StatOptions& opts) {
  UnitStatMap s;
  s.model_id = r.model_id;
  s.localizer_name = cfg.name;
  s.method = cfg.method;
  s.paired = cfg.paired;
  s.n_layers = r.n_layers;
  s.hidden_dim = r.hidden_dim;
  s.alpha = opts.alpha;
  s.fdr = opts.fdr;
  const std::size_t n = r.n_layers * r.hidden_dim;
  s.m.assign(n, 0.0);
  s.df.assign(n, 0.0);
  s.p.assign(n, 1.0);
  return s;
}

// Copies the columns [begin, begin + width) of every listed tensor into
// column-major buffers: column j holds all stimuli of all tensors for unit begin + j.
void gather_block(std::span<const ActivationTensor* const> tensors, std::size_t begin, std::size_t width,
                  std::vector<std::vector<double>>& columns) {
  std::size_t total = 0;
  for (const auto* t : tensors) total += t->n_stimuli();
  columns.resize(width);
  for (auto& c : columns) {
    c.clear();
    c.reserve(total);
  }
  for (const auto* t : tensors) {
    for (std::size_t s = 0; s < t->n_stimuli(); ++s) {
      const auto row = t->stimulus_row(s);
      for (std::size_t j = 0; j < width; ++j) columns[j].push_back(row[begin + j]);
    }
  }
}

std::size_t block_count(std::size_t units) { return (units + kUnitBlock - 1) / kUnitBlock; }

}  // namespace

bool is_localizer_name(std::string_view name) {
  return std::find(kLocalizerNames.begin(), kLocalizerNames.end(), name) != kLocalizerNames.end();
}

std::vector<std::string> LocalizerConfig::member_suites() const {
  std::vector<std::string> out;
  for (const auto& p : parts) out.push_back(p.suite);
  return out;
}

LocalizerConfig make_localizer(std::string_view name, std::span<const LocalizerSuite> suites) {
  if (!is_localizer_name(name)) {
    std::string msg = "unknown localizer '" + std::string(name) + "'; expected one of:";
    for (auto n : kLocalizerNames) msg += " " + std::string(n);
    throw UsageError(msg);
  }
  LocalizerConfig cfg;
  cfg.name = std::string(name);
  if (name == "All-simple") {
    cfg.method = Method::Simple;
    for (auto suite : kSuiteNames) cfg.parts.push_back(whole_suite(find_suite(suites, suite, name)));
    return cfg;
  }
  if (name == "LB+CI-conjunctive") {
    cfg.method = Method::Conjunctive;
    cfg.parts.push_back(whole_suite(find_suite(suites, "LatentBeliefs", name)));
    cfg.parts.push_back(whole_suite(find_suite(suites, "CommunicativeIntent", name)));
    return cfg;
  }
  const auto dash = name.rfind('-');
  const auto suite_name = name.substr(0, dash);
  const auto& suite = find_suite(suites, suite_name, name);
  cfg.method = parse_method(name.substr(dash + 1));
  cfg.parts.push_back(whole_suite(suite));
  cfg.paired = suite.paired;
  return cfg;
}

std::vector<LocalizerConfig> enumerate_localizers(std::span<const LocalizerSuite> suites) {
  for (auto suite : kSuiteNames) find_suite(suites, suite, "enumeration");
  std::vector<LocalizerConfig> out;
  for (auto name : kLocalizerNames) out.push_back(make_localizer(name, suites));
  return out;
}

std::vector<std::string> missing_conditions(const LocalizerConfig& cfg, std::span<const ActivationTensor> tensors) {
  std::vector<std::string> missing;
  for (const auto& part : cfg.parts) {
    for (const auto* list : {&part.target_conditions, &part.control_conditions})
      for (const auto& c : *list)
        if (!find_tensor(tensors, part.suite, c)) missing.push_back(part.suite + "/" + c);
  }
  return missing;
}

void apply_significance(UnitStatMap& stats, double alpha, FdrMethod method, FdrScope scope) {
  stats.alpha = alpha;
  stats.fdr = method;
  if (scope == FdrScope::Model) {
    stats.significant = control_multiple_comparisons(stats.p, alpha, method);
    return;
  }
  stats.significant.assign(stats.size(), false);
  for (std::size_t l = 0; l < stats.n_layers; ++l) {
    const auto slice = std::span<const double>(stats.p).subspan(l * stats.hidden_dim, stats.hidden_dim);
    const auto rej = control_multiple_comparisons(slice, alpha, method);
    for (std::size_t i = 0; i < stats.hidden_dim; ++i) stats.significant[l * stats.hidden_dim + i] = rej[i];
  }
}

UnitStatMap simple_statistic(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                             const StatOptions& opts) {
  if (cfg.method != Method::Simple) throw ValidationError("simple_statistic: localizer " + cfg.name + " is not simple");
  const auto r = resolve(tensors, cfg);
  const auto targets = r.all_targets();
  const auto controls = r.all_controls();
  if (cfg.paired) {
    if (targets.size() != 1 || controls.size() != 1)
      throw ValidationError("localizer " + cfg.name + ": paired test needs exactly one target and one control condition");
    if (targets[0]->stimulus_ids != controls[0]->stimulus_ids)
      throw ValidationError("localizer " + cfg.name + ": paired alignment failure, stimulus ids of " +
                            targets[0]->condition_name + " and " + controls[0]->condition_name + " differ");
  }
  auto stats = empty_map(r, cfg, opts);
  const std::size_t units = stats.size();
  parallel_for(block_count(units), opts.threads, [&](std::size_t b) {
    const std::size_t begin = b * kUnitBlock;
    const std::size_t width = std::min(kUnitBlock, units - begin);
    std::vector<std::vector<double>> tcols, ccols;
    gather_block(targets, begin, width, tcols);
    gather_block(controls, begin, width, ccols);
    for (std::size_t j = 0; j < width; ++j) {
      const auto res = cfg.paired ? paired_t(tcols[j], ccols[j]) : welch_t(tcols[j], ccols[j]);
      stats.m[begin + j] = res.t;
      stats.df[begin + j] = res.df;
      stats.p[begin + j] = res.p_two_sided;
    }
  });
  apply_significance(stats, opts.alpha, opts.fdr, opts.scope);
  return stats;
}

UnitStatMap conjunctive_statistic(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                                  const StatOptions& opts) {
  if (cfg.method != Method::Conjunctive)
    throw ValidationError("conjunctive_statistic: localizer " + cfg.name + " is not conjunctive");
  const auto r = resolve(tensors, cfg);

  // Every condition tensor once, then pairs as indices into that list.
  std::vector<const ActivationTensor*> all;
  auto index_of = [&](const ActivationTensor* t) {
    auto it = std::find(all.begin(), all.end(), t);
    if (it != all.end()) return static_cast<std::size_t>(it - all.begin());
    all.push_back(t);
    return all.size() - 1;
  };
  struct Pair {
    std::size_t target, control;
    bool paired;
  };
  std::vector<Pair> pairs;
  for (std::size_t p = 0; p < r.targets.size(); ++p)
    for (std::size_t q = 0; q < r.controls.size(); ++q) {
      if (p != q && !opts.cross_suite_pairs) continue;
      const bool paired = p == q && cfg.parts[p].paired;
      for (const auto* t : r.targets[p])
        for (const auto* c : r.controls[q]) {
          if (paired && t->stimulus_ids != c->stimulus_ids)
            throw ValidationError("localizer " + cfg.name + ": paired alignment failure, stimulus ids of " +
                                  t->condition_name + " and " + c->condition_name + " differ");
          pairs.push_back({index_of(t), index_of(c), paired});
        }
    }
  if (pairs.empty()) throw ValidationError("localizer " + cfg.name + ": no target/control pairs");

  auto stats = empty_map(r, cfg, opts);
  const std::size_t units = stats.size();
  parallel_for(block_count(units), opts.threads, [&](std::size_t b) {
    const std::size_t begin = b * kUnitBlock;
    const std::size_t width = std::min(kUnitBlock, units - begin);
    // moments[k][j]: condition k, unit begin + j
    std::vector<std::vector<SampleMoments>> moments(all.size(), std::vector<SampleMoments>(width));
    std::vector<std::vector<double>> cols;
    for (std::size_t k = 0; k < all.size(); ++k) {
      const ActivationTensor* single[] = {all[k]};
      gather_block(single, begin, width, cols);
      for (std::size_t j = 0; j < width; ++j) moments[k][j] = sample_moments(cols[j]);
    }
    // Raw columns only for conditions in a paired pair.
    std::vector<std::vector<std::vector<double>>> raw(all.size());
    for (const auto& pr : pairs) {
      if (!pr.paired) continue;
      for (auto k : {pr.target, pr.control}) {
        if (!raw[k].empty()) continue;
        const ActivationTensor* single[] = {all[k]};
        gather_block(single, begin, width, raw[k]);
      }
    }
    for (std::size_t j = 0; j < width; ++j) {
      TestResult best;
      double max_p = 0.0;
      bool first = true;
      for (const auto& pr : pairs) {
        const auto res = pr.paired ? paired_t(raw[pr.target][j], raw[pr.control][j])
                                   : welch_t(moments[pr.target][j], moments[pr.control][j]);
        max_p = std::max(max_p, res.p_two_sided);
        if (first || res.t < best.t) best = res;
        first = false;
      }
      stats.m[begin + j] = best.t;
      stats.df[begin + j] = best.df;
      stats.p[begin + j] = opts.conjunction_p == ConjunctionP::MaxP ? max_p : best.p_two_sided;
    }
  });
  apply_significance(stats, opts.alpha, opts.fdr, opts.scope);
  return stats;
}

UnitStatMap localize(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg, const StatOptions& opts) {
  return cfg.method == Method::Simple ? simple_statistic(tensors, cfg, opts) : conjunctive_statistic(tensors, cfg, opts);
}

namespace {

SubnetworkMask mask_shell(const UnitStatMap& stats, SelectionKind kind, double cap_fraction) {
  SubnetworkMask mask;
  mask.model_id = stats.model_id;
  mask.localizer_name = stats.localizer_name;
  mask.selection_kind = kind;
  mask.n_layers = stats.n_layers;
  mask.hidden_dim = stats.hidden_dim;
  mask.meta.alpha = stats.alpha;
  mask.meta.cap_fraction = cap_fraction;
  mask.meta.method = stats.method;
  mask.meta.paired = stats.paired;
  mask.meta.fdr_method = stats.fdr;
  return mask;
}

void fill_units(SubnetworkMask& mask, std::vector<std::size_t> flat, std::size_t hidden_dim) {
  std::sort(flat.begin(), flat.end());
  mask.units.reserve(flat.size());
  for (auto f : flat) mask.units.push_back(UnitStatMap::unit_at(f, hidden_dim));
}

}  // namespace

SubnetworkMask select_target_subnetwork(const UnitStatMap& stats, double cap_fraction, Diagnostics* diag) {
  if (!(cap_fraction > 0.0 && cap_fraction <= 1.0)) throw ValidationError("cap_fraction must lie in (0, 1]");
  if (stats.significant.size() != stats.size()) throw ValidationError("unit statistics lack significance flags");
  auto mask = mask_shell(stats, SelectionKind::Target, cap_fraction);
  std::vector<std::size_t> candidates;
  for (std::size_t u = 0; u < stats.size(); ++u)
    if (stats.significant[u]) candidates.push_back(u);
  if (candidates.empty()) {
    if (diag) diag->warnings.push_back("localizer " + stats.localizer_name + ": no significant units, empty mask");
    return mask;
  }
  const std::size_t cap = mask_capacity(cap_fraction, stats.size());
  if (candidates.size() > cap) {
    std::stable_sort(candidates.begin(), candidates.end(), [&](std::size_t a, std::size_t b) {
      return std::abs(stats.m[a]) > std::abs(stats.m[b]);
    });
    candidates.resize(cap);
  }
  fill_units(mask, std::move(candidates), stats.hidden_dim);
  return mask;
}

SubnetworkMask select_least_active(const UnitStatMap& stats, std::size_t size, double cap_fraction) {
  if (stats.significant.size() != stats.size()) throw ValidationError("unit statistics lack significance flags");
  auto mask = mask_shell(stats, SelectionKind::LeastActive, cap_fraction);
  const std::size_t cap = mask_capacity(cap_fraction, stats.size());
  if (size > cap)
    throw ValidationError("least-active size " + std::to_string(size) + " exceeds cap of " + std::to_string(cap));
  std::vector<std::size_t> pool;
  for (std::size_t u = 0; u < stats.size(); ++u)
    if (!stats.significant[u]) pool.push_back(u);
  if (pool.size() < size)
    throw StatisticalError("localizer " + stats.localizer_name + ": need " + std::to_string(size) +
                           " non-significant units for the least-active mask, only " + std::to_string(pool.size()) +
                           " available (shortfall " + std::to_string(size - pool.size()) + ")");
  std::stable_sort(pool.begin(), pool.end(),
                   [&](std::size_t a, std::size_t b) { return std::abs(stats.m[a]) < std::abs(stats.m[b]); });
  pool.resize(size);
  fill_units(mask, std::move(pool), stats.hidden_dim);
  return mask;
}

std::vector<LayerCount> layer_distribution(const SubnetworkMask& mask) {
  std::vector<LayerCount> out(mask.n_layers);
  for (std::size_t l = 0; l < mask.n_layers; ++l) out[l].layer = l;
  for (const auto& u : mask.units) ++out[u.layer].selected;
  for (auto& c : out) c.percent = 100.0 * static_cast<double>(c.selected) / static_cast<double>(mask.hidden_dim);
  return out;
}

void write_layer_distribution_csv(std::ostream& out, std::span<const SubnetworkMask> masks) {
  out << "model_id,localizer,selection,layer,selected,percent\n";
  char buf[32];
  for (const auto& mask : masks) {
    for (const auto& c : layer_distribution(mask)) {
      std::snprintf(buf, sizeof buf, "%.4f", c.percent);
      out << mask.model_id << ',' << mask.localizer_name << ',' << to_string(mask.selection_kind) << ',' << c.layer
          << ',' << c.selected << ',' << buf << '\n';
    }
  }
}

}  // namespace netloc
