#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "netloc/suite_store.hpp"

namespace netloc {

struct TestResult {
  double t = 0.0;
  double df = 0.0;
  double p_two_sided = 1.0;
};

/// Count, mean and sum of squared deviations of a sample.
struct SampleMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double sum_sq_dev = 0.0;

  double variance() const { return n > 1 ? sum_sq_dev / static_cast<double>(n - 1) : 0.0; }
};

/// Two-pass moments accumulated over the values in ascending order, so the
/// result does not depend on the order the sample arrives in.
SampleMoments sample_moments(std::span<const double> values);

/// Welch's unequal-variance t-test with Welch-Satterthwaite degrees of freedom.
///
/// Zero-variance conventions: if both samples are constant and the means
/// agree, t = 0 and p = 1; if the means differ, t = +/-infinity and p = 0.
/// In both cases df = n_x + n_y - 2.
TestResult welch_t(std::span<const double> x, std::span<const double> y);
TestResult welch_t(const SampleMoments& x, const SampleMoments& y);

/// One-sample t-test on the differences x_i - y_i, df = n - 1.
TestResult paired_t(std::span<const double> x, std::span<const double> y);
TestResult one_sample_t(const SampleMoments& d);

/// Upper tail P(T > t) of Student's t with `df` degrees of freedom.
double student_t_sf(double t, double df);

/// 2 * P(T > |t|), clamped to [0, 1].
double student_t_two_sided_p(double t, double df);

/// Regularized incomplete beta I_x(a, b).
double incomplete_beta(double a, double b, double x);

/// log B(a, b) with Stirling corrections for large arguments.
double log_beta(double a, double b);

/// Benjamini-Hochberg step-up rejections at level q. Rejects every p at or
/// below the largest p_(k) satisfying p_(k) <= k q / m.
std::vector<bool> bh_fdr(std::span<const double> p_values, double q);

/// Rejections under the chosen multiple-comparison rule at level q.
std::vector<bool> control_multiple_comparisons(std::span<const double> p_values, double q, FdrMethod method);

}  // namespace netloc
