#include "netloc/unit_stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

#include "netloc/error.hpp"

namespace netloc {
namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();
constexpr double kLnSqrt2Pi = 0.918938533204672741780329736406;

// Stirling-series remainder lgamma(x) - [(x - 0.5) log x - x + log sqrt(2 pi)], x >= 10.
double lgamma_correction(double x) {
  const double r = 1.0 / x;
  const double r2 = r * r;
  return r * (1.0 / 12 +
              r2 * (-1.0 / 360 +
                    r2 * (1.0 / 1260 +
                          r2 * (-1.0 / 1680 + r2 * (1.0 / 1188 + r2 * (-691.0 / 360360 + r2 * (1.0 / 156)))))));
}

// Modified Lentz evaluation of the incomplete beta continued fraction.
double beta_continued_fraction(double a, double b, double x) {
  constexpr double tiny = 1e-300;
  constexpr double eps = 1e-16;
  const double qab = a + b;
  const double qap = a + 1.0;
  const double qam = a - 1.0;
  double c = 1.0;
  double d = 1.0 - qab * x / qap;
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 100000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  return h;
}

// I_x(a, b) given both x and y = 1 - x, so callers can pass a y that was
// computed without cancellation. log_x, when given, replaces log(x): with a
// large, a * log(x) magnifies the rounding of x.
double incomplete_beta_xy(double a, double b, double x, double y, double log_x = kNaN) {
  if (x <= 0.0) return 0.0;
  if (y <= 0.0) return 1.0;
  if (std::isnan(log_x)) log_x = std::log(x);
  const double log_front = a * log_x + b * std::log(y);
  if (x < (a + 1.0) / (a + b + 2.0)) return std::exp(log_front - log_beta(a, b)) / a * beta_continued_fraction(a, b, x);
  return 1.0 - std::exp(log_front - log_beta(b, a)) / b * beta_continued_fraction(b, a, y);
}

// I_x(a, 1/2) for large a from the DiDonato-Morris asymptotic expansion in
// incomplete gamma functions (their BGRAT with b = 1/2, where Q(1/2, z) =
// erfc(sqrt z)). The continued fraction loses digits here when x is near 1.
// NaN when the expansion does not apply.
double incomplete_beta_large_a_half(double a, double log_x) {
  constexpr double b = 0.5;
  constexpr double bm1 = b - 1.0;
  const double nu = a + 0.5 * bm1;
  const double z = -nu * log_x;
  if (!(z > 0.0)) return kNaN;
  const double log_r = b * std::log(z) + nu * log_x - std::lgamma(b);
  const double log_u = b * std::log(z) + nu * log_x - log_beta(a, b) - b * std::log(nu);
  const double r = std::exp(log_r);
  const double u = std::exp(log_u);
  if (r == 0.0 || u == 0.0) return kNaN;

  const double v = 0.25 / (nu * nu);
  const double t2 = 0.25 * log_x * log_x;
  double j = std::erfc(std::sqrt(z)) / r;
  double sum = j;
  double t = 1.0;
  double cn = 1.0;
  double n2 = 0.0;
  double c[30], d[30];
  for (int n = 1; n <= 30; ++n) {
    const double bp2n = b + n2;
    j = (bp2n * (bp2n + 1.0) * j + (z + bp2n + 1.0) * t) * v;
    n2 += 2.0;
    t *= t2;
    cn /= n2 * (n2 + 1.0);
    c[n - 1] = cn;
    double s = 0.0;
    double coef = b - n;
    for (int i = 1; i < n; ++i) {
      s += coef * c[i - 1] * d[n - i - 1];
      coef += b;
    }
    d[n - 1] = bm1 * cn + s / n;
    const double dj = d[n - 1] * j;
    sum += dj;
    if (!(sum > 0.0)) return kNaN;
    if (std::abs(dj) <= 1e-17 * sum) return u * sum;
  }
  return kNaN;
}

void require_finite(std::span<const double> v, const char* what) {
  for (double x : v)
    if (!std::isfinite(x)) throw ValidationError(std::string(what) + ": sample contains a non-finite value");
}

}  // namespace

double log_beta(double a, double b) {
  const double p = std::min(a, b);
  const double q = std::max(a, b);
  if (p >= 10.0) {
    const double corr = lgamma_correction(p) + lgamma_correction(q) - lgamma_correction(p + q);
    return -0.5 * std::log(q) + kLnSqrt2Pi + corr + (p - 0.5) * std::log(p / (p + q)) +
           q * std::log1p(-p / (p + q));
  }
  if (q >= 10.0) {
    const double corr = lgamma_correction(q) - lgamma_correction(p + q);
    return std::lgamma(p) + corr + p - p * std::log(p + q) + (q - 0.5) * std::log1p(-p / (p + q));
  }
  return std::lgamma(p) + std::lgamma(q) - std::lgamma(p + q);
}

double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0) || !(b > 0.0)) throw ValidationError("incomplete_beta: shape parameters must be positive");
  if (std::isnan(x)) return x;
  return incomplete_beta_xy(a, b, std::clamp(x, 0.0, 1.0), std::clamp(1.0 - x, 0.0, 1.0));
}

double student_t_sf(double t, double df) {
  if (!(df > 0.0)) throw ValidationError("student_t_sf: df must be positive");
  if (std::isnan(t)) return t;
  if (t == kInf) return 0.0;
  if (t == -kInf) return 1.0;
  if (t == 0.0) return 0.5;
  const double t2 = t * t;
  // P(|T| > |t|) = I_{df/(df+t^2)}(df/2, 1/2)
  const double x = df / (df + t2);
  const double y = t2 / (df + t2);
  const double log_x = -std::log1p(t2 / df);
  double tail = df >= 30.0 ? incomplete_beta_large_a_half(0.5 * df, log_x) : kNaN;
  if (std::isnan(tail)) tail = incomplete_beta_xy(0.5 * df, 0.5, x, y, log_x);
  tail *= 0.5;
  return t >= 0.0 ? tail : 1.0 - tail;
}

double student_t_two_sided_p(double t, double df) {
  if (std::isnan(t)) return t;
  return std::min(1.0, 2.0 * student_t_sf(std::abs(t), df));
}

SampleMoments sample_moments(std::span<const double> values) {
  std::vector<double> sorted(values.begin(), values.end());
  std::sort(sorted.begin(), sorted.end());
  SampleMoments m;
  m.n = sorted.size();
  if (m.n == 0) return m;
  double sum = 0.0;
  for (double v : sorted) sum += v;
  m.mean = sum / static_cast<double>(m.n);
  double ss = 0.0;
  for (double v : sorted) {
    const double dev = v - m.mean;
    ss += dev * dev;
  }
  m.sum_sq_dev = ss;
  return m;
}

TestResult welch_t(const SampleMoments& x, const SampleMoments& y) {
  if (x.n < 2 || y.n < 2) throw ValidationError("welch_t: each sample needs at least two observations");
  const double nx = static_cast<double>(x.n);
  const double ny = static_cast<double>(y.n);
  const double rx = x.variance() / nx;
  const double ry = y.variance() / ny;
  const double diff = x.mean - y.mean;
  TestResult r;
  if (rx == 0.0 && ry == 0.0) {
    r.df = nx + ny - 2.0;
    if (diff == 0.0) {
      r.t = 0.0;
      r.p_two_sided = 1.0;
    } else {
      r.t = diff > 0.0 ? kInf : -kInf;
      r.p_two_sided = 0.0;
    }
    return r;
  }
  const double se2 = rx + ry;
  r.t = diff / std::sqrt(se2);
  r.df = se2 * se2 / (rx * rx / (nx - 1.0) + ry * ry / (ny - 1.0));
  r.p_two_sided = student_t_two_sided_p(r.t, r.df);
  return r;
}

TestResult welch_t(std::span<const double> x, std::span<const double> y) {
  require_finite(x, "welch_t");
  require_finite(y, "welch_t");
  return welch_t(sample_moments(x), sample_moments(y));
}

TestResult one_sample_t(const SampleMoments& d) {
  if (d.n < 2) throw ValidationError("paired_t: needs at least two pairs");
  TestResult r;
  r.df = static_cast<double>(d.n - 1);
  const double var = d.variance();
  if (var == 0.0) {
    if (d.mean == 0.0) {
      r.t = 0.0;
      r.p_two_sided = 1.0;
    } else {
      r.t = d.mean > 0.0 ? kInf : -kInf;
      r.p_two_sided = 0.0;
    }
    return r;
  }
  r.t = d.mean / std::sqrt(var / static_cast<double>(d.n));
  r.p_two_sided = student_t_two_sided_p(r.t, r.df);
  return r;
}

TestResult paired_t(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size())
    throw ValidationError("paired_t: samples differ in length (" + std::to_string(x.size()) + " vs " +
                          std::to_string(y.size()) + ")");
  require_finite(x, "paired_t");
  require_finite(y, "paired_t");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return one_sample_t(sample_moments(d));
}

std::vector<bool> bh_fdr(std::span<const double> p, double q) {
  if (!(q > 0.0 && q < 1.0)) throw ValidationError("bh_fdr: q must lie in (0, 1)");
  for (double v : p)
    if (!(v >= 0.0 && v <= 1.0)) throw ValidationError("bh_fdr: p-values must lie in [0, 1]");
  const std::size_t m = p.size();
  std::vector<bool> reject(m, false);
  if (m == 0) return reject;
  std::vector<double> sorted(p.begin(), p.end());
  std::sort(sorted.begin(), sorted.end());
  double threshold = -1.0;
  for (std::size_t k = m; k-- > 0;) {
    if (sorted[k] <= static_cast<double>(k + 1) * q / static_cast<double>(m)) {
      threshold = sorted[k];
      break;
    }
  }
  for (std::size_t i = 0; i < m; ++i) reject[i] = p[i] <= threshold;
  return reject;
}

std::vector<bool> control_multiple_comparisons(std::span<const double> p, double q, FdrMethod method) {
  switch (method) {
    case FdrMethod::BenjaminiHochberg: return bh_fdr(p, q);
    case FdrMethod::Bonferroni: {
      std::vector<bool> reject(p.size());
      const double cut = q / static_cast<double>(std::max<std::size_t>(p.size(), 1));
      for (std::size_t i = 0; i < p.size(); ++i) reject[i] = p[i] <= cut;
      return reject;
    }
    case FdrMethod::None: {
      std::vector<bool> reject(p.size());
      for (std::size_t i = 0; i < p.size(); ++i) reject[i] = p[i] < q;
      return reject;
    }
  }
  return bh_fdr(p, q);
}

}  // namespace netloc
