#include "netloc/oracle_suite.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "netloc/beta_regression.hpp"
#include "netloc/effects.hpp"
#include "netloc/format.hpp"
#include "netloc/generalization.hpp"
#include "netloc/localizer_engine.hpp"
#include "netloc/parallel.hpp"
#include "netloc/synthetic_bench.hpp"

namespace netloc {
namespace {

OracleCheck finish(std::string name, double value, double threshold, bool at_most, std::string detail = {}) {
  OracleCheck c;
  c.name = std::move(name);
  c.value = value;
  c.threshold = threshold;
  c.at_most = at_most;
  c.passed = at_most ? value <= threshold : value >= threshold;
  c.detail = std::move(detail);
  return c;
}

PlantSpec planted_spec(std::uint64_t seed, double effect) {
  PlantSpec spec;
  spec.seed = seed;
  spec.effect_size = effect;
  spec.planted_units = random_units(spec.n_layers, spec.hidden_dim, 10, seed);
  return spec;
}

LocalizerConfig localizer_for(const PlantedSuite& ps, const char* name) {
  return make_localizer(name, std::span<const LocalizerSuite>(&ps.suite, 1));
}

std::size_t count_true(const std::vector<char>& v) { return static_cast<std::size_t>(std::count(v.begin(), v.end(), 1)); }

// Draw from Beta(mu * phi, (1 - mu) * phi).
double draw_beta(std::mt19937_64& rng, double mu, double phi) {
  std::gamma_distribution<double> ga(mu * phi, 1.0), gb((1.0 - mu) * phi, 1.0);
  const double a = ga(rng);
  const double b = gb(rng);
  return a / (a + b);
}

}  // namespace

OracleCheck check_planted_recovery(std::size_t seeds, unsigned threads) {
  std::vector<double> worst(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    const auto ps = generate_planted_suite(planted_spec(s, 2.0));
    const auto stats = localize(ps.tensors, localizer_for(ps, "LatentBeliefs-simple"));
    const auto r = recovery_score(select_target_subnetwork(stats), ps.truth);
    worst[s] = std::min(r.precision, r.recall);
  });
  const double v = seeds ? *std::min_element(worst.begin(), worst.end()) : 0.0;
  return finish("planted recovery min(precision, recall)", v, 0.9, false, std::to_string(seeds) + " seeds");
}

OracleCheck check_null_calibration(std::size_t seeds, unsigned threads) {
  std::vector<char> any(seeds), disjoint(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    const auto ps = generate_planted_suite(planted_spec(1000 + s, 0.0));
    const auto stats = localize(ps.tensors, localizer_for(ps, "LatentBeliefs-simple"));
    any[s] = std::any_of(stats.significant.begin(), stats.significant.end(), [](bool b) { return b; });
    const auto target = select_target_subnetwork(stats);
    const auto least = select_least_active(stats, target.units.size());
    std::vector<UnitId> both;
    std::set_intersection(target.units.begin(), target.units.end(), least.units.begin(), least.units.end(),
                          std::back_inserter(both));
    disjoint[s] = both.empty();
  });
  const double frac = seeds ? static_cast<double>(count_true(any)) / static_cast<double>(seeds) : 0.0;
  auto c = finish("null seeds with any significant unit (fraction)", frac, 0.10, true,
                  std::to_string(count_true(disjoint)) + "/" + std::to_string(seeds) + " least-active masks disjoint");
  c.passed = c.passed && count_true(disjoint) == seeds;
  return c;
}

OracleCheck check_conjunction_reduction(std::size_t seeds, unsigned threads) {
  std::vector<char> equal(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    auto spec = planted_spec(2000 + s, s % 2 ? 2.0 : 0.5);
    spec.paired = s % 3 == 0;
    const auto ps = generate_planted_suite(spec);
    const auto simple = localize(ps.tensors, localizer_for(ps, "LatentBeliefs-simple"));
    const auto conj = localize(ps.tensors, localizer_for(ps, "LatentBeliefs-conjunctive"));
    equal[s] = simple.m == conj.m && simple.df == conj.df && simple.p == conj.p && simple.significant == conj.significant;
  });
  return finish("conjunctive == simple on simple suites (seeds)", static_cast<double>(count_true(equal)),
                static_cast<double>(seeds), false);
}

OracleCheck check_conjunction_selectivity(std::size_t seeds, unsigned threads) {
  std::vector<char> ok(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    PlantSpec spec;
    spec.seed = 3000 + s;
    auto units = random_units(spec.n_layers, spec.hidden_dim, 11, spec.seed);
    const auto distractor = units[s % units.size()];
    units.erase(units.begin() + static_cast<std::ptrdiff_t>(s % units.size()));
    spec.planted_units = units;
    spec.distractor_units = {distractor};
    const auto ps = generate_planted_suite(spec, 2, 1);
    const auto simple = select_target_subnetwork(localize(ps.tensors, localizer_for(ps, "LatentBeliefs-simple")));
    const auto conj = select_target_subnetwork(localize(ps.tensors, localizer_for(ps, "LatentBeliefs-conjunctive")));
    auto has = [&](const SubnetworkMask& m) { return std::binary_search(m.units.begin(), m.units.end(), distractor); };
    ok[s] = has(simple) && !has(conj);
  });
  const double threshold = std::ceil(0.9 * static_cast<double>(seeds));
  return finish("distractor in simple but not conjunctive mask (seeds)", static_cast<double>(count_true(ok)),
                threshold, false, "of " + std::to_string(seeds));
}

OracleCheck check_crossval_planted(std::size_t seeds, unsigned threads) {
  std::vector<double> sig(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    const auto ps = generate_planted_suite(planted_spec(4000 + s, 2.0));
    CrossValOptions opts;
    opts.seed = s;
    const auto folds = kfold_generalization(ps.tensors, localizer_for(ps, "LatentBeliefs-simple"), opts);
    sig[s] = static_cast<double>(count_significant(folds));
  });
  const double v = seeds ? *std::min_element(sig.begin(), sig.end()) : 0.0;
  return finish("planted cross-validation min significant folds (k=10)", v, 9.0, false,
                std::to_string(seeds) + " seeds");
}

OracleCheck check_crossval_null(std::size_t seeds, unsigned threads) {
  std::vector<double> sig(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    const auto ps = generate_planted_suite(planted_spec(5000 + s, 0.0));
    CrossValOptions opts;
    opts.seed = s;
    const auto folds = kfold_generalization(ps.tensors, localizer_for(ps, "LatentBeliefs-simple"), opts);
    sig[s] = static_cast<double>(count_significant(folds));
  });
  double mean = 0.0;
  for (double v : sig) mean += v;
  mean = seeds ? mean / static_cast<double>(seeds) : 0.0;
  return finish("null cross-validation mean significant folds", mean, 1.5, true, std::to_string(seeds) + " seeds");
}

OracleCheck check_beta_recovery(std::size_t sims, unsigned threads) {
  const double beta0 = 0.5, beta1 = -0.3, phi = 30.0;
  std::vector<std::array<char, 3>> within(sims);
  parallel_for(sims, threads, [&](std::size_t s) {
    std::mt19937_64 rng(6000 + s);
    std::normal_distribution<double> z(0.0, 1.0);
    const int n = 1000;
    Eigen::MatrixXd x(n, 2);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = z(rng);
      y(i) = draw_beta(rng, inverse_logit(beta0 + beta1 * x(i, 1)), phi);
    }
    const auto fit = beta_regression_fit(x, y, {"(Intercept)", "x"});
    within[s] = {std::abs(fit.beta(0) - beta0) <= 2.0 * fit.se(0), std::abs(fit.beta(1) - beta1) <= 2.0 * fit.se(1),
                 std::abs(std::log(fit.phi) - std::log(phi)) <= 2.0 * fit.log_phi_se()};
  });
  double worst = 1.0;
  std::string detail;
  const char* names[] = {"beta0", "beta1", "log phi"};
  for (std::size_t j = 0; j < 3; ++j) {
    std::size_t k = 0;
    for (const auto& w : within) k += static_cast<std::size_t>(w[j]);
    const double frac = sims ? static_cast<double>(k) / static_cast<double>(sims) : 0.0;
    worst = std::min(worst, frac);
    detail += (j ? ", " : "") + std::string(names[j]) + " " + std::to_string(k) + "/" + std::to_string(sims);
  }
  return finish("beta regression recovery within 2 SE (min fraction over parameters)", worst, 0.9, false, detail);
}

OracleCheck check_beta_gradient(std::size_t points) {
  std::mt19937_64 rng(7000);
  std::normal_distribution<double> z(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  double worst = 0.0;
  for (std::size_t k = 0; k < points; ++k) {
    const int n = 50;
    Eigen::MatrixXd x(n, 3);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) {
      x(i, 0) = 1.0;
      x(i, 1) = z(rng);
      x(i, 2) = z(rng);
      y(i) = 0.02 + 0.96 * u(rng);
    }
    Eigen::VectorXd params(4);
    params << 2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0, 2.0 * u(rng) - 1.0, 4.0 * u(rng);
    const auto g = beta_log_likelihood_gradient(x, y, params);
    for (Eigen::Index j = 0; j < params.size(); ++j) {
      const double h = 1e-5 * std::max(1.0, std::abs(params(j)));
      Eigen::VectorXd up = params, down = params;
      up(j) += h;
      down(j) -= h;
      const double fd = (beta_log_likelihood(x, y, up) - beta_log_likelihood(x, y, down)) / (2.0 * h);
      worst = std::max(worst, std::abs(g(j) - fd) / std::max(1.0, std::abs(fd)));
    }
  }
  return finish("beta log-likelihood gradient vs central differences (max relative error)", worst, 1e-6, true,
                std::to_string(points) + " random points");
}

OracleCheck check_prediction_planted(std::size_t seeds, unsigned threads) {
  std::vector<char> all(seeds);
  parallel_for(seeds, threads, [&](std::size_t s) {
    EffectLogSpec spec;
    spec.tom_effect = spec.prag_effect = 0.15;
    spec.control_effect = 0.03;
    spec.seed = 8000 + s;
    const auto report = evaluate_ablation_predictions(generate_effect_log(spec).records);
    all[s] = std::all_of(report.contrasts.begin(), report.contrasts.end(), [](const ContrastResult& c) { return c.supported; });
  });
  const double frac = seeds ? static_cast<double>(count_true(all)) / static_cast<double>(seeds) : 0.0;
  return finish("planted-effect logs with P1.1-P3.2 all supported (fraction)", frac, 0.9, false,
                std::to_string(count_true(all)) + "/" + std::to_string(seeds));
}

OracleCheck check_prediction_null() {
  std::vector<AccuracyRecord> log;
  const std::pair<Domain, const char*> domains[] = {
      {Domain::Tom, "tom"}, {Domain::Pragmatics, "prag"}, {Domain::Syntax, "syntax"}};
  for (int m = 0; m < 3; ++m)
    for (const auto& [domain, prefix] : domains)
      for (int d = 0; d < 2; ++d)
        for (Condition c : {Condition::Intact, Condition::TargetAblation, Condition::ControlAblation})
          for (int i = 0; i < 10; ++i) {
            AccuracyRecord r;
            r.model_id = "model_" + std::to_string(m + 1);
            r.dataset_id = std::string(prefix) + "_" + std::to_string(d + 1);
            r.domain = domain;
            r.condition = c;
            r.localizer_name = c == Condition::Intact ? "" : "LatentBeliefs-simple";
            r.item_id = "item_" + std::to_string(i + 1);
            r.correct = i < 7;
            log.push_back(std::move(r));
          }
  const auto report = evaluate_ablation_predictions(log);
  const auto summary = verdict_summary(report.contrasts);
  const bool ok = summary == "P3.1 supported; others unsupported";
  return finish("identical-accuracy log supports only P3.1", ok ? 1.0 : 0.0, 1.0, false, summary);
}

OracleCheck check_loo_true_predictor(std::size_t sims, std::size_t n_obs, unsigned threads) {
  std::vector<char> positive(sims);
  parallel_for(sims, threads, [&](std::size_t s) {
    std::mt19937_64 rng(9000 + s);
    std::normal_distribution<double> z(0.0, 1.0);
    std::vector<double> x(n_obs), y(n_obs);
    for (std::size_t i = 0; i < n_obs; ++i) {
      x[i] = z(rng);
      y[i] = draw_beta(rng, inverse_logit(0.2 + 0.4 * x[i]), 20.0);
    }
    DesignBuilder b0(n_obs), b1(n_obs);
    b0.intercept();
    b1.intercept().numeric("x", x);
    positive[s] = loo_compare(b0.build(y), b1.build(y)).elpd_diff > 0.0;
  });
  const double frac = sims ? static_cast<double>(count_true(positive)) / static_cast<double>(sims) : 0.0;
  return finish("LOO elpd_diff > 0 with the true predictor (fraction)", frac, 0.95, false,
                std::to_string(count_true(positive)) + "/" + std::to_string(sims) + ", n=" + std::to_string(n_obs));
}

OracleCheck check_loo_identical() {
  std::mt19937_64 rng(9999);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t n = 60;
  std::vector<double> x(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = z(rng);
    y[i] = draw_beta(rng, inverse_logit(0.3 * x[i]), 15.0);
  }
  DesignBuilder b(n);
  b.intercept().numeric("x", x);
  const auto d = b.build(y);
  const auto cmp = loo_compare(d, d);
  return finish("LOO |elpd_diff| for identical designs", std::abs(cmp.elpd_diff), 0.0, true,
                "elpd " + format_double(cmp.elpd0));
}

OracleCheck check_atoms_percepts(std::size_t seeds, unsigned threads) {
  std::vector<char> ok(seeds);
  for (std::size_t s = 0; s < seeds; ++s) {
    AtomsSpec spec;
    spec.seed = 10000 + s;
    const auto data = generate_atoms_data(spec);
    const auto ranked = atoms_subset_search(data.base, data.flags, threads);
    double base_elpd = 0.0;
    for (const auto& m : ranked)
      if (m.subset == 0) base_elpd = m.elpd;
    ok[s] = std::all_of(ranked.begin(), ranked.end(),
                        [&](const AtomsModelScore& m) { return !(m.subset & (1u << 5)) || m.elpd > base_elpd; });
  }
  const double frac = seeds ? static_cast<double>(count_true(ok)) / static_cast<double>(seeds) : 0.0;
  return finish("ATOMS: every percepts model above base-only (fraction of seeds)", frac, 0.9, false,
                std::to_string(count_true(ok)) + "/" + std::to_string(seeds));
}

std::vector<OracleCheck> run_oracle_suite(const OracleSuiteOptions& o) {
  const auto s = std::max<std::size_t>(o.seeds, 1);
  std::vector<OracleCheck> out;
  out.push_back(check_planted_recovery(s, o.threads));
  out.push_back(check_null_calibration(5 * s, o.threads));
  out.push_back(check_conjunction_reduction(s, o.threads));
  out.push_back(check_conjunction_selectivity(s, o.threads));
  out.push_back(check_crossval_planted(std::max<std::size_t>(2, s / 4), o.threads));
  out.push_back(check_crossval_null(s, o.threads));
  out.push_back(check_beta_recovery(s, o.threads));
  out.push_back(check_beta_gradient(100));
  out.push_back(check_prediction_planted(s, o.threads));
  out.push_back(check_prediction_null());
  out.push_back(check_loo_true_predictor(s, 100, o.threads));
  out.push_back(check_loo_identical());
  if (o.include_atoms) out.push_back(check_atoms_percepts(std::max<std::size_t>(2, s / 10), o.threads));
  return out;
}

}  // namespace netloc
