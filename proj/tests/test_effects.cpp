#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>

#include <boost/math/distributions/students_t.hpp>
#include <boost/math/statistics/bivariate_statistics.hpp>

#include "doctest.h"
#include "netloc/effects.hpp"
#include "netloc/error.hpp"
#include "netloc/synthetic_bench.hpp"

using namespace netloc;

namespace {

// 3 models x 2 datasets per domain, 10 items per cell, 7 correct everywhere.
std::vector<AccuracyRecord> flat_log() {
  std::vector<AccuracyRecord> log;
  const std::pair<Domain, const char*> domains[] = {
      {Domain::Tom, "tom"}, {Domain::Pragmatics, "prag"}, {Domain::Syntax, "syntax"}};
  for (int m = 0; m < 3; ++m)
    for (const auto& [domain, prefix] : domains)
      for (int d = 0; d < 2; ++d)
        for (Condition c : {Condition::Intact, Condition::TargetAblation, Condition::ControlAblation})
          for (int i = 0; i < 10; ++i)
            log.push_back({"model_" + std::to_string(m), std::string(prefix) + "_" + std::to_string(d), domain, c,
                           c == Condition::Intact ? "" : "LatentBeliefs-simple", "item_" + std::to_string(i), i < 7});
  return log;
}

double draw_beta(std::mt19937_64& rng, double mu, double phi) {
  std::gamma_distribution<double> ga(mu * phi, 1.0), gb((1.0 - mu) * phi, 1.0);
  const double a = ga(rng);
  return a / (a + gb(rng));
}

}  // namespace

TEST_CASE("pearson_r") {
  const std::vector<double> x{1, 2, 3, 4};
  CHECK(pearson_r(x, x).r == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(pearson_r(x, x).p == 0.0);
  const std::vector<double> anti{1, -1, -3, -5};
  CHECK(pearson_r(x, anti).r == doctest::Approx(-1.0).epsilon(1e-15));
  const std::vector<double> y{1, 3, 2, 4};
  const auto c = pearson_r(x, y);
  CHECK(c.r == doctest::Approx(0.8).epsilon(1e-14));
  const double t = 0.8 * std::sqrt(2.0 / 0.36);
  const boost::math::students_t_distribution<double> dist(2.0);
  CHECK(c.p == doctest::Approx(2.0 * boost::math::cdf(boost::math::complement(dist, t))).epsilon(1e-12));
  CHECK(c.n == 4);

  const std::vector<double> flat{2, 2, 2, 2};
  CHECK_THROWS_AS(pearson_r(x, flat), StatisticalError);
  const std::vector<double> two{1, 2};
  CHECK_THROWS_AS(pearson_r(two, two), ValidationError);
  CHECK_THROWS_AS(pearson_r(x, two), ValidationError);

  std::mt19937_64 rng(4);
  std::normal_distribution<double> z(0.0, 1.0);
  for (int rep = 0; rep < 100; ++rep) {
    std::vector<double> a(5 + rep), b(5 + rep);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a[i] = z(rng);
      b[i] = 0.5 * a[i] + z(rng);
    }
    CHECK(std::abs(pearson_r(a, b).r - boost::math::statistics::correlation_coefficient(a, b)) <= 1e-12);
  }
}

TEST_CASE("smooth_response") {
  CHECK(smooth_response(0.0, 50.0) == 0.5 / 50.0);
  CHECK(smooth_response(1.0, 50.0) == doctest::Approx(49.5 / 50.0).epsilon(1e-15));
  CHECK(smooth_response(0.5, 37.0) == 0.5);
  CHECK_THROWS_AS(smooth_response(1.2, 10.0), ValidationError);
  CHECK_THROWS_AS(smooth_response(0.5, 1.0), ValidationError);
}

TEST_CASE("contrasts and directions") {
  RegressionFit fit;
  fit.beta = Eigen::Vector2d(0.4, -0.1);
  fit.covariance = Eigen::Matrix3d::Identity() * 0.01;
  fit.covariance(0, 1) = fit.covariance(1, 0) = 0.002;

  const auto zero = contrast(fit, Eigen::Vector2d::Zero(), Direction::Greater, "zero");
  CHECK(zero.estimate == 0.0);
  CHECK(zero.ci_low == 0.0);
  CHECK(zero.ci_high == 0.0);
  CHECK(zero.degenerate);
  CHECK_FALSE(zero.supported);

  const auto pick = contrast(fit, Eigen::Vector2d(1, 0), Direction::Greater);
  CHECK(pick.estimate == 0.4);
  CHECK(pick.se == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(pick.ci_low == doctest::Approx(0.4 - kWaldZ95 * 0.1).epsilon(1e-15));
  CHECK(pick.ci_high == doctest::Approx(0.4 + kWaldZ95 * 0.1).epsilon(1e-15));
  CHECK(pick.supported);

  const auto diff = contrast(fit, Eigen::Vector2d(1, -1), Direction::TwoSided);
  CHECK(diff.se == doctest::Approx(std::sqrt(0.01 + 0.01 - 2 * 0.002)).epsilon(1e-15));
  CHECK_THROWS_AS(contrast(fit, Eigen::Vector3d(1, 0, 0), Direction::Less), ValidationError);

  CHECK(is_supported(Direction::Greater, 0.1, 0.5));
  CHECK_FALSE(is_supported(Direction::Greater, -0.1, 0.5));
  CHECK(is_supported(Direction::Less, -0.5, -0.1));
  CHECK(is_supported(Direction::TwoSided, -0.5, -0.1));
  CHECK_FALSE(is_supported(Direction::TwoSided, -0.5, 0.1));
  CHECK(is_supported(Direction::NotGreater, -0.5, 0.1));
  CHECK_FALSE(is_supported(Direction::NotGreater, 0.05, 0.1));
  CHECK(is_supported(Direction::NotLess, -0.5, 0.1));
  CHECK_FALSE(is_supported(Direction::NotLess, -0.5, -0.1));
  CHECK(is_supported(Direction::NoDifference, -0.5, 0.1));
  CHECK_FALSE(is_supported(Direction::NoDifference, 0.2, 0.3));
}

TEST_CASE("identical accuracies support only P3.1") {
  const auto report = evaluate_ablation_predictions(flat_log());
  REQUIRE(report.contrasts.size() == 6);
  CHECK(verdict_summary(report.contrasts) == "P3.1 supported; others unsupported");
  for (const auto& c : report.contrasts) CHECK(c.estimate == 0.0);
}

TEST_CASE("planted ablation effects support all six predictions") {
  EffectLogSpec spec;
  spec.tom_effect = spec.prag_effect = 0.15;
  spec.control_effect = 0.03;
  spec.seed = 12;
  const auto report = evaluate_ablation_predictions(generate_effect_log(spec).records);
  CHECK(verdict_summary(report.contrasts) == "all predictions supported");
  std::ostringstream csv;
  write_contrast_csv(csv, report.contrasts);
  CHECK(csv.str().rfind("name,estimate,se,ci_low,ci_high,direction,supported,degenerate\nP1.1,", 0) == 0);
}

TEST_CASE("null effect logs mostly support only P3.1") {
  int only_p31 = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    EffectLogSpec spec;
    spec.seed = 300 + s;
    only_p31 += verdict_summary(evaluate_ablation_predictions(generate_effect_log(spec).records).contrasts) ==
                "P3.1 supported; others unsupported";
  }
  CHECK(only_p31 >= 80);
}

TEST_CASE("descriptive effects are raw accuracy differences") {
  auto log = flat_log();
  for (auto& r : log)
    if (r.model_id == "model_0" && r.dataset_id == "tom_0") {
      const int i = std::stoi(r.item_id.substr(5));
      r.correct = r.condition == Condition::Intact ? i < 8 : r.condition == Condition::TargetAblation ? i < 6 : i < 7;
    }
  const auto eff = descriptive_effects(log);
  const auto it = std::find_if(eff.begin(), eff.end(), [](const DescriptiveEffect& e) {
    return e.model_id == "model_0" && e.dataset_id == "tom_0";
  });
  REQUIRE(it != eff.end());
  CHECK(it->intact == doctest::Approx(0.8));
  CHECK(it->target_ablated == doctest::Approx(0.6));
  CHECK(it->target_effect == doctest::Approx(0.2));
  CHECK(it->control_effect == doctest::Approx(0.1));
}

TEST_CASE("missing cells are listed") {
  auto log = flat_log();
  std::erase_if(log, [](const AccuracyRecord& r) {
    return r.model_id == "model_1" && r.dataset_id == "prag_1" && r.condition == Condition::ControlAblation;
  });
  try {
    evaluate_ablation_predictions(log);
    FAIL("gap accepted");
  } catch (const ValidationError& e) {
    CHECK(std::string(e.what()).find("model_1/prag_1/control:LatentBeliefs-simple") != std::string::npos);
  }
  CHECK_THROWS_AS(evaluate_ablation_predictions(std::vector<AccuracyRecord>{}), ValidationError);
}

TEST_CASE("ablation contrasts do not depend on labels or record order") {
  EffectLogSpec spec;
  spec.tom_effect = 0.1;
  spec.prag_effect = 0.05;
  spec.control_effect = 0.02;
  spec.seed = 21;
  auto log = generate_effect_log(spec).records;
  const auto a = evaluate_ablation_predictions(log);
  for (auto& r : log) {
    r.model_id = "zz_" + std::string(r.model_id.rbegin(), r.model_id.rend());
    r.dataset_id = "x" + std::string(r.dataset_id.rbegin(), r.dataset_id.rend());
  }
  std::reverse(log.begin(), log.end());
  const auto b = evaluate_ablation_predictions(log);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(b.contrasts[i].estimate == doctest::Approx(a.contrasts[i].estimate).epsilon(1e-8));
    CHECK(b.contrasts[i].se == doctest::Approx(a.contrasts[i].se).epsilon(1e-7));
    CHECK(b.contrasts[i].supported == a.contrasts[i].supported);
  }
}

TEST_CASE("behavioral predictions") {
  BehavioralSpec shared;
  shared.seed = 3;
  const auto s = evaluate_behavioral_predictions(generate_behavioral_table(shared));
  CHECK(s.p1_supported);
  CHECK(s.p1.r > 0.5);
  CHECK(s.p3_evaluated);

  BehavioralSpec disjoint = shared;
  disjoint.shared_skill = false;
  const auto d = evaluate_behavioral_predictions(generate_behavioral_table(disjoint));
  CHECK_FALSE(d.p1_supported);
  CHECK_FALSE(d.p3_supported);

  BehavioralSpec single = shared;
  single.n_datasets = 1;
  CHECK_FALSE(evaluate_behavioral_predictions(generate_behavioral_table(single)).warnings.empty());

  auto rows = generate_behavioral_table(shared);
  std::erase_if(rows, [](const BehavioralRow& r) { return r.model_id != "model_1" && r.model_id != "model_2"; });
  CHECK_THROWS_AS(evaluate_behavioral_predictions(rows), ValidationError);

  std::stringstream io;
  const auto table = generate_behavioral_table(shared);
  write_behavioral_csv(io, table);
  const auto back = read_behavioral_csv(io);
  REQUIRE(back.size() == table.size());
  CHECK(back[5].dataset_id == table[5].dataset_id);
  CHECK(back[5].accuracy == table[5].accuracy);
}

TEST_CASE("domain contrast covers zero without a domain effect") {
  // dataset_sd = 0: the fixed dataset effects then carry no between-dataset variance
  int cover = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    BehavioralSpec spec;
    spec.seed = 500 + s;
    spec.dataset_sd = 0.0;
    const auto r = evaluate_behavioral_predictions(generate_behavioral_table(spec));
    cover += r.p2.ci_low <= 0.0 && r.p2.ci_high >= 0.0;
  }
  CHECK(cover >= 93);
}

TEST_CASE("LOO comparison") {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> z(0.0, 1.0);
  const std::size_t n = 80;
  std::vector<double> x(n), w(n), y(n);
  for (std::size_t i = 0; i < n; ++i) {
    x[i] = z(rng);
    w[i] = z(rng);
    y[i] = draw_beta(rng, inverse_logit(0.1 + 0.5 * x[i]), 15.0);
  }
  DesignBuilder b0(n), b1(n);
  b0.intercept().numeric("w", w);
  b1.intercept().numeric("x", x);
  const auto m0 = b0.build(y), m1 = b1.build(y);

  const auto same = loo_compare(m0, m0);
  CHECK(same.elpd_diff == 0.0);
  CHECK(same.se_diff == 0.0);

  const auto ab = loo_compare(m0, m1);
  const auto ba = loo_compare(m1, m0);
  CHECK(ab.elpd_diff == -ba.elpd_diff);
  CHECK(ab.se_diff == ba.se_diff);
  CHECK(ab.elpd_diff > 0.0);
  CHECK(ab.pointwise_diff.size() == n);
  CHECK(loo_compare(m0, m1, 4).elpd_diff == ab.elpd_diff);

  DesignBuilder other(n);
  other.intercept();
  auto shifted = y;
  shifted[0] = 0.5;
  CHECK_THROWS_AS(loo_compare(m0, other.build(shifted)), ValidationError);
}

TEST_CASE("LOO penalizes a pure-noise column") {
  // Asymptotically elpd_diff <= 0 with probability P(chi2_1 <= 2) = 0.843.
  int not_better = 0, true_better = 0;
  for (std::uint64_t s = 0; s < 100; ++s) {
    std::mt19937_64 rng(900 + s);
    std::normal_distribution<double> z(0.0, 1.0);
    const std::size_t n = 200;
    std::vector<double> x(n), w(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      x[i] = z(rng);
      w[i] = z(rng);
      y[i] = draw_beta(rng, inverse_logit(0.2 + 0.4 * x[i]), 20.0);
    }
    DesignBuilder base(n), noise(n), truth(n);
    base.intercept().numeric("x", x);
    noise.intercept().numeric("x", x).numeric("w", w);
    truth.intercept();
    not_better += loo_compare(base.build(y), noise.build(y)).elpd_diff <= 0.0;
    true_better += loo_compare(truth.build(y), base.build(y)).elpd_diff > 0.0;
  }
  CHECK(not_better >= 80);
  CHECK(true_better >= 95);
}

TEST_CASE("ATOMS subset search") {
  AtomsSpec spec;
  spec.seed = 2;
  const auto data = generate_atoms_data(spec);
  const auto scores = atoms_subset_search(data.base, data.flags);
  REQUIRE(scores.size() == 128);
  CHECK(scores.front().elpd_diff_to_best == 0.0);
  for (std::size_t i = 0; i < 64; ++i) CHECK((scores[i].subset & (1u << 5)) != 0);
  for (std::size_t i = 1; i < scores.size(); ++i) CHECK(scores[i].elpd <= scores[i - 1].elpd);

  AtomsSpec null = spec;
  null.percepts_effect = 0.0;
  const auto nd = generate_atoms_data(null);
  const auto ns = atoms_subset_search(nd.base, nd.flags);
  const auto base = std::find_if(ns.begin(), ns.end(), [](const AtomsModelScore& m) { return m.subset == 0; });
  REQUIRE(base != ns.end());
  CHECK(-base->elpd_diff_to_best <= 2.0 * base->se_diff_to_best);

  std::stringstream io;
  const auto rows = generate_atoms_rows(spec);
  write_atoms_rows_csv(io, rows);
  const auto back = read_atoms_rows_csv(io);
  REQUIRE(back.size() == rows.size());
  CHECK(back.back().flags == rows.back().flags);

  Eigen::MatrixXi bad = data.flags;
  bad(0, 0) = 2;
  CHECK_THROWS_AS(atoms_subset_search(data.base, bad), ValidationError);
}
