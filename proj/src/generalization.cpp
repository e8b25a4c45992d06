#include "netloc/generalization.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "netloc/error.hpp"
#include "netloc/parallel.hpp"
#include "netloc/unit_stats.hpp"

namespace netloc {
namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 1469598103934665603ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ull;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
  return x ^ (x >> 31);
}

struct CondEntry {
  std::string key;
  const ActivationTensor* tensor = nullptr;
  bool target = false;
  std::size_t part = 0;
};

std::vector<CondEntry> conditions_of(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg) {
  const auto missing = missing_conditions(cfg, tensors);
  if (!missing.empty()) {
    std::string msg = "localizer " + cfg.name + ": missing activations for";
    for (const auto& m : missing) msg += " " + m;
    throw ValidationError(msg);
  }
  auto find = [&](const std::string& suite, const std::string& cond) {
    for (const auto& t : tensors)
      if (t.suite_name == suite && t.condition_name == cond) return &t;
    return static_cast<const ActivationTensor*>(nullptr);
  };
  std::vector<CondEntry> out;
  for (std::size_t p = 0; p < cfg.parts.size(); ++p) {
    const auto& part = cfg.parts[p];
    for (const auto& c : part.target_conditions) out.push_back({part.suite + "/" + c, find(part.suite, c), true, p});
    for (const auto& c : part.control_conditions) out.push_back({part.suite + "/" + c, find(part.suite, c), false, p});
  }
  return out;
}

std::vector<std::size_t> shuffled_positions(std::size_t n, std::uint64_t seed, std::string_view key) {
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::mt19937_64 rng(splitmix64(seed ^ fnv1a(key)));
  std::shuffle(order.begin(), order.end(), rng);
  return order;
}

double sign_of(double m) { return m < 0.0 ? -1.0 : 1.0; }

}  // namespace

FoldAssignment assign_folds(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg, std::size_t k,
                            std::uint64_t seed) {
  if (k < 2) throw ValidationError("cross-validation needs k >= 2");
  const auto conds = conditions_of(tensors, cfg);
  FoldAssignment fa;
  std::vector<std::size_t> paired_order;  // target permutation of the current paired part
  for (const auto& c : conds) {
    const bool paired = cfg.parts[c.part].paired;
    const std::size_t n = c.tensor->n_stimuli();
    if (n < k)
      throw ValidationError("k = " + std::to_string(k) + " exceeds the " + std::to_string(n) + " stimuli of " + c.key);
    std::vector<std::size_t> order;
    if (paired && !c.target) {
      if (paired_order.size() != n) throw ValidationError("paired suite " + c.key + ": condition sizes differ");
      order = paired_order;
    } else {
      order = shuffled_positions(n, seed, c.key);
      if (paired) paired_order = order;
    }
    std::vector<std::size_t> fold_of(n);
    for (std::size_t pos = 0; pos < n; ++pos) fold_of[order[pos]] = pos % k;
    fa.keys.push_back(c.key);
    fa.fold_of.push_back(std::move(fold_of));
  }
  return fa;
}

std::vector<FoldReport> kfold_generalization(std::span<const ActivationTensor> tensors, const LocalizerConfig& cfg,
                                             const CrossValOptions& opts) {
  const auto conds = conditions_of(tensors, cfg);
  const auto folds = assign_folds(tensors, cfg, opts.k, opts.seed);
  std::vector<FoldReport> reports(opts.k);

  parallel_for(opts.k, opts.stat.threads, [&](std::size_t f) {
    FoldReport& rep = reports[f];
    rep.fold_index = f;
    rep.unit_fraction = opts.per_unit ? 0.0 : std::numeric_limits<double>::quiet_NaN();

    std::vector<ActivationTensor> train;
    std::vector<std::vector<std::size_t>> test_rows(conds.size());
    train.reserve(conds.size());
    for (std::size_t c = 0; c < conds.size(); ++c) {
      std::vector<std::size_t> tr;
      for (std::size_t s = 0; s < folds.fold_of[c].size(); ++s)
        (folds.fold_of[c][s] == f ? test_rows[c] : tr).push_back(s);
      train.push_back(subset_rows(*conds[c].tensor, tr));
    }

    auto stat_opts = opts.stat;
    stat_opts.threads = 1;
    const auto stats = localize(train, cfg, stat_opts);
    const auto mask = select_target_subnetwork(stats, opts.cap_fraction);
    rep.mask_size = mask.units.size();
    if (mask.units.empty()) {
      rep.diagnostic = "empty mask on training split";
      return;
    }

    std::vector<double> target_means, control_means;
    for (std::size_t c = 0; c < conds.size(); ++c) {
      const auto& t = *conds[c].tensor;
      for (auto s : test_rows[c]) {
        const auto row = t.stimulus_row(s);
        double sum = 0.0;
        for (const auto& u : mask.units) {
          const auto flat = stats.flat(u);
          sum += sign_of(stats.m[flat]) * row[flat];
        }
        (conds[c].target ? target_means : control_means).push_back(sum / static_cast<double>(mask.units.size()));
      }
    }
    if (target_means.size() < 2 || control_means.size() < 2) {
      rep.diagnostic = "held-out split too small for a t-test";
      return;
    }
    const auto res = welch_t(target_means, control_means);
    rep.test_t = res.t;
    rep.test_p = res.p_two_sided;
    rep.significant = res.p_two_sided < opts.alpha;

    if (opts.per_unit) {
      std::size_t hits = 0;
      for (const auto& u : mask.units) {
        const auto flat = stats.flat(u);
        std::vector<double> tv, cv;
        for (std::size_t c = 0; c < conds.size(); ++c)
          for (auto s : test_rows[c]) (conds[c].target ? tv : cv).push_back(conds[c].tensor->stimulus_row(s)[flat]);
        if (welch_t(tv, cv).p_two_sided < opts.alpha) ++hits;
      }
      rep.unit_fraction = static_cast<double>(hits) / static_cast<double>(mask.units.size());
    }
  });
  return reports;
}

std::size_t count_significant(std::span<const FoldReport> folds) {
  return static_cast<std::size_t>(std::count_if(folds.begin(), folds.end(), [](const FoldReport& f) { return f.significant; }));
}

}  // namespace netloc
