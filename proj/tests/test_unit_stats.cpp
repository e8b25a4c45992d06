#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include <boost/math/distributions/students_t.hpp>

#include "doctest.h"
#include "netloc/error.hpp"
#include "netloc/unit_stats.hpp"

using namespace netloc;

namespace {

double boost_sf(double t, double df) {
  return boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<double>(df), t));
}

// Straight from the definition, no shared code with the library.
std::vector<bool> bh_reference(const std::vector<double>& p, double q) {
  const std::size_t m = p.size();
  double cutoff = -1.0;
  for (std::size_t i = 0; i < m; ++i) {
    std::size_t rank = 0;
    for (std::size_t j = 0; j < m; ++j) rank += p[j] <= p[i];
    if (p[i] <= static_cast<double>(rank) * q / static_cast<double>(m)) cutoff = std::max(cutoff, p[i]);
  }
  std::vector<bool> out(m);
  for (std::size_t i = 0; i < m; ++i) out[i] = p[i] <= cutoff;
  return out;
}

}  // namespace

TEST_CASE("welch_t hand-evaluated example") {
  const std::vector<double> x{2, 4, 6}, y{1, 2, 3};
  const auto r = welch_t(x, y);
  CHECK(r.t == doctest::Approx(2.0 / std::sqrt(5.0 / 3.0)).epsilon(1e-14));
  CHECK(r.t == doctest::Approx(1.5492).epsilon(1e-4));
  CHECK(r.df == doctest::Approx(50.0 / 17.0).epsilon(1e-14));
  CHECK(r.p_two_sided == doctest::Approx(2.0 * boost_sf(r.t, r.df)).epsilon(1e-12));
}

TEST_CASE("welch_t degenerate conventions") {
  const std::vector<double> a{1, 2, 3};
  auto r = welch_t(a, a);
  CHECK(r.t == 0.0);
  CHECK(r.p_two_sided == 1.0);

  const std::vector<double> ones{1, 1, 1}, twos{2, 2, 2};
  r = welch_t(ones, twos);
  CHECK(r.t == -std::numeric_limits<double>::infinity());
  CHECK(r.p_two_sided == 0.0);
  CHECK(r.df == 4.0);

  r = welch_t(ones, ones);
  CHECK(r.t == 0.0);
  CHECK(r.p_two_sided == 1.0);
  CHECK(r.df == 4.0);

  const std::vector<double> one{1.0};
  CHECK_THROWS_AS(welch_t(one, a), ValidationError);
  const std::vector<double> bad{1.0, std::nan("")};
  CHECK_THROWS_AS(welch_t(bad, a), ValidationError);
}

TEST_CASE("welch_t does not depend on sample order") {
  std::mt19937_64 rng(11);
  std::normal_distribution<double> z(0.3, 2.0);
  std::vector<double> x(57), y(41);
  for (auto& v : x) v = z(rng);
  for (auto& v : y) v = z(rng) * 1e3;
  const auto ref = welch_t(x, y);
  for (int rep = 0; rep < 5; ++rep) {
    std::shuffle(x.begin(), x.end(), rng);
    std::shuffle(y.begin(), y.end(), rng);
    const auto r = welch_t(x, y);
    CHECK(r.t == ref.t);
    CHECK(r.df == ref.df);
    CHECK(r.p_two_sided == ref.p_two_sided);
  }
}

TEST_CASE("paired_t") {
  const std::vector<double> x{3, 5, 7}, y{1, 2, 3};
  const auto r = paired_t(x, y);
  CHECK(r.t == doctest::Approx(3.0 * std::sqrt(3.0)).epsilon(1e-14));
  CHECK(r.df == 2.0);
  CHECK(r.p_two_sided == doctest::Approx(2.0 * boost_sf(r.t, 2.0)).epsilon(1e-12));

  const auto same = paired_t(x, x);
  CHECK(same.t == 0.0);
  CHECK(same.p_two_sided == 1.0);

  const std::vector<double> shorter{1, 2};
  CHECK_THROWS_AS(paired_t(x, shorter), ValidationError);
}

TEST_CASE("student_t_sf closed forms and limits") {
  CHECK(student_t_sf(1.0, 1.0) == doctest::Approx(0.25).epsilon(1e-15));
  for (double df : {0.5, 1.0, 2.9, 30.0, 1e6}) CHECK(student_t_sf(0.0, df) == 0.5);
  CHECK(student_t_sf(std::numeric_limits<double>::infinity(), 3.0) == 0.0);
  CHECK(student_t_sf(-std::numeric_limits<double>::infinity(), 3.0) == 1.0);
  // df = 2 has sf(t) = 1/2 - t / (2 sqrt(t^2 + 2))
  for (double t : {-3.0, 0.7, 4.2})
    CHECK(student_t_sf(t, 2.0) == doctest::Approx(0.5 - t / (2.0 * std::sqrt(t * t + 2.0))).epsilon(1e-14));
  CHECK_THROWS_AS(student_t_sf(1.0, 0.0), ValidationError);
}

TEST_CASE("student_t_sf agrees with Boost on random arguments") {
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> lt(-12.0, 12.0), ldf(-1.0, 9.0);
  double worst = 0.0;
  for (int i = 0; i < 2000; ++i) {
    const double t = lt(rng), df = std::pow(10.0, ldf(rng));
    worst = std::max(worst, std::abs(student_t_sf(t, df) - boost_sf(t, df)));
  }
  CHECK(worst <= 1e-12);
}

TEST_CASE("bh_fdr") {
  const std::vector<double> p{0.01, 0.02, 0.03, 0.5};
  CHECK(bh_fdr(p, 0.05) == std::vector<bool>{true, true, true, false});
  const std::vector<double> ones(6, 1.0);
  CHECK(bh_fdr(ones, 0.05) == std::vector<bool>(6, false));
  const std::vector<double> single{0.04};
  CHECK(bh_fdr(single, 0.05) == std::vector<bool>{true});
  CHECK(bh_fdr(std::vector<double>{}, 0.05).empty());
  // step-up: p_(2) = 0.03 fails 0.025 but p_(3) = 0.035 passes 0.0375
  const std::vector<double> step{0.035, 0.001, 0.03, 0.9};
  CHECK(bh_fdr(step, 0.05) == std::vector<bool>{true, true, true, false});

  std::mt19937_64 rng(17);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 300; ++rep) {
    std::vector<double> ps(1 + rep % 40);
    for (auto& v : ps) v = std::pow(u(rng), 3.0);
    if (rep % 7 == 0 && ps.size() > 2) ps[1] = ps[0];  // ties
    CHECK(bh_fdr(ps, 0.1) == bh_reference(ps, 0.1));
  }
  CHECK_THROWS_AS(bh_fdr(p, 0.0), ValidationError);
  const std::vector<double> out_of_range{1.5};
  CHECK_THROWS_AS(bh_fdr(out_of_range, 0.05), ValidationError);
}

TEST_CASE("bonferroni and none") {
  const std::vector<double> p{0.01, 0.02, 0.2};
  CHECK(control_multiple_comparisons(p, 0.05, FdrMethod::Bonferroni) == std::vector<bool>{true, false, false});
  CHECK(control_multiple_comparisons(p, 0.05, FdrMethod::None) == std::vector<bool>{true, true, false});
}
