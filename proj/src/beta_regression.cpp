#include "netloc/beta_regression.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include <boost/math/special_functions/digamma.hpp>
#include <boost/math/special_functions/trigamma.hpp>

#include "netloc/error.hpp"

namespace netloc {
namespace {

// Double-precision evaluation; the default policy promotes to long double.
using Policy = boost::math::policies::policy<boost::math::policies::promote_double<false>>;
double digamma(double x) { return boost::math::digamma(x, Policy()); }
double trigamma(double x) { return boost::math::trigamma(x, Policy()); }

// Beyond this precision the response is fitted (almost) perfectly and the
// likelihood keeps increasing without bound.
constexpr double kMaxLogPhi = 18.420680743952367;  // log(1e8)

// Response logs computed once per fit.
struct Response {
  const Eigen::VectorXd& y;
  Eigen::VectorXd log_y;
  Eigen::VectorXd log_1my;

  explicit Response(const Eigen::VectorXd& values) : y(values), log_y(values.size()), log_1my(values.size()) {
    for (Eigen::Index i = 0; i < values.size(); ++i) {
      log_y(i) = std::log(values(i));
      log_1my(i) = std::log1p(-values(i));
    }
  }
};

void check_inputs(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& params) {
  if (x.rows() != y.size()) throw ValidationError("beta regression: design and response lengths differ");
  if (params.size() != x.cols() + 1) throw ValidationError("beta regression: parameter vector has wrong length");
}

double log_likelihood_unchecked(const Eigen::MatrixXd& x, const Response& r, const Eigen::VectorXd& params) {
  const auto p = x.cols();
  const double phi = std::exp(params(p));
  const double lg_phi = std::lgamma(phi);
  const Eigen::VectorXd eta = x * params.head(p);
  double ll = 0.0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double a = inverse_logit(eta(i)) * phi;
    const double b = inverse_logit(-eta(i)) * phi;
    ll += lg_phi - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * r.log_y(i) + (b - 1.0) * r.log_1my(i);
  }
  return ll;
}

// Gradient and Hessian over (beta, theta = log phi), from the per-observation
// derivatives with respect to mu and phi chained through the logit link.
void accumulate(const Eigen::MatrixXd& x, const Response& r, const Eigen::VectorXd& params, Eigen::VectorXd* grad,
                Eigen::MatrixXd* hess) {
  const auto p = x.cols();
  const auto n = x.rows();
  const double phi = std::exp(params(p));
  const double psi_phi = digamma(phi);
  const double psi1_phi = hess ? trigamma(phi) : 0.0;
  const Eigen::VectorXd eta = x * params.head(p);
  Eigen::VectorXd w_eta(n), w_eta_eta(n), w_eta_theta(n);
  double g_theta = 0.0, h_theta = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = inverse_logit(eta(i));
    const double one_minus_mu = inverse_logit(-eta(i));
    const double a = mu * phi;
    const double b = one_minus_mu * phi;
    const double psi_a = digamma(a);
    const double psi_b = digamma(b);
    const double ystar = r.log_y(i) - r.log_1my(i);
    const double mustar = psi_a - psi_b;
    const double l_mu = phi * (ystar - mustar);
    const double l_phi = psi_phi - mu * psi_a - one_minus_mu * psi_b + mu * r.log_y(i) + one_minus_mu * r.log_1my(i);
    const double g1 = mu * one_minus_mu;
    w_eta(i) = l_mu * g1;
    g_theta += l_phi * phi;
    if (!hess) continue;
    const double psi1_a = trigamma(a);
    const double psi1_b = trigamma(b);
    const double g2 = g1 * (one_minus_mu - mu);
    const double l_mu_mu = -phi * phi * (psi1_a + psi1_b);
    const double l_phi_phi = psi1_phi - mu * mu * psi1_a - one_minus_mu * one_minus_mu * psi1_b;
    const double l_mu_phi = (ystar - mustar) + phi * (-mu * psi1_a + one_minus_mu * psi1_b);
    w_eta_eta(i) = l_mu_mu * g1 * g1 + l_mu * g2;
    w_eta_theta(i) = l_mu_phi * g1 * phi;
    h_theta += l_phi_phi * phi * phi + l_phi * phi;
  }
  if (grad) {
    grad->resize(p + 1);
    grad->head(p) = x.transpose() * w_eta;
    (*grad)(p) = g_theta;
  }
  if (hess) {
    hess->resize(p + 1, p + 1);
    hess->topLeftCorner(p, p) = x.transpose() * w_eta_eta.asDiagonal() * x;
    const Eigen::VectorXd cross = x.transpose() * w_eta_theta;
    hess->topRightCorner(p, 1) = cross;
    hess->bottomLeftCorner(1, p) = cross.transpose();
    (*hess)(p, p) = h_theta;
  }
}

Eigen::VectorXd least_squares_start(const Eigen::MatrixXd& x, const Eigen::VectorXd& y) {
  const auto p = x.cols();
  const Eigen::VectorXd z = (y.array() / (1.0 - y.array())).log().matrix();
  const Eigen::VectorXd beta = (x.transpose() * x).ldlt().solve(x.transpose() * z);
  const Eigen::VectorXd eta = x * beta;
  double mean_var = 0.0, ss = 0.0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mu = inverse_logit(eta(i));
    mean_var += mu * (1.0 - mu);
    ss += (y(i) - mu) * (y(i) - mu);
  }
  const double n = static_cast<double>(y.size());
  mean_var /= n;
  const double resid_var = ss / std::max(1.0, n - static_cast<double>(p));
  double phi = resid_var > 0.0 ? mean_var / resid_var - 1.0 : 1e4;
  phi = std::clamp(phi, 1.0, 1e4);
  Eigen::VectorXd start(p + 1);
  start << beta, std::log(phi);
  return start;
}

void check_rank(const Eigen::MatrixXd& x, const std::vector<std::string>& columns) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(x);
  qr.setThreshold(1e-10);
  if (qr.rank() == x.cols()) return;
  std::string msg = "beta regression: design matrix is rank deficient; dependent columns:";
  const auto& perm = qr.colsPermutation().indices();
  for (Eigen::Index k = qr.rank(); k < x.cols(); ++k) {
    const auto c = static_cast<std::size_t>(perm(k));
    msg += " " + (c < columns.size() ? columns[c] : std::to_string(c));
  }
  throw StatisticalError(msg);
}

}  // namespace

Eigen::VectorXd RegressionFit::params() const {
  Eigen::VectorXd out(beta.size() + 1);
  out << beta, std::log(phi);
  return out;
}

double beta_log_density(double y, double mu, double phi) {
  const double a = mu * phi;
  const double b = (1.0 - mu) * phi;
  return std::lgamma(phi) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(y) + (b - 1.0) * std::log1p(-y);
}

double beta_log_likelihood(const Eigen::MatrixXd& x, const Eigen::VectorXd& y, const Eigen::VectorXd& params) {
  check_inputs(x, y, params);
  return log_likelihood_unchecked(x, Response(y), params);
}

Eigen::VectorXd beta_log_likelihood_gradient(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                             const Eigen::VectorXd& params) {
  check_inputs(x, y, params);
  Eigen::VectorXd g;
  accumulate(x, Response(y), params, &g, nullptr);
  return g;
}

Eigen::MatrixXd beta_log_likelihood_hessian(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                            const Eigen::VectorXd& params) {
  check_inputs(x, y, params);
  Eigen::MatrixXd h;
  accumulate(x, Response(y), params, nullptr, &h);
  return h;
}

RegressionFit beta_regression_fit(const DesignMatrix& d, const FitOptions& opts) {
  return beta_regression_fit(d.x, d.y, d.columns, opts);
}

RegressionFit beta_regression_fit(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                  const std::vector<std::string>& columns, const FitOptions& opts) {
  const auto n = x.rows();
  const auto p = x.cols();
  if (n != y.size()) throw ValidationError("beta regression: design and response lengths differ");
  for (Eigen::Index i = 0; i < n; ++i)
    if (!(y(i) > 0.0 && y(i) < 1.0))
      throw ValidationError("beta regression: response must lie strictly inside (0, 1); smooth boundary values first");
  if (n <= p)
    throw StatisticalError("beta regression: need more observations (" + std::to_string(n) + ") than columns (" +
                           std::to_string(p) + ")");
  check_rank(x, columns);

  Eigen::VectorXd params = opts.start ? *opts.start : least_squares_start(x, y);
  if (params.size() != p + 1) throw ValidationError("beta regression: start vector has wrong length");
  const Response resp(y);
  double ll = log_likelihood_unchecked(x, resp, params);
  if (!std::isfinite(ll)) {
    params = least_squares_start(x, y);
    ll = log_likelihood_unchecked(x, resp, params);
  }

  Eigen::VectorXd grad;
  Eigen::MatrixXd hess;
  std::size_t iter = 0;
  bool converged = false;
  for (; iter <= opts.max_iterations; ++iter) {
    accumulate(x, resp, params, &grad, &hess);
    if (grad.cwiseAbs().maxCoeff() < opts.gradient_tolerance) {
      converged = true;
      break;
    }
    if (iter == opts.max_iterations) break;
    Eigen::MatrixXd info = -hess;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
    double ridge = 0.0;
    while (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any()) {
      ridge = ridge == 0.0 ? 1e-6 : ridge * 10.0;
      if (ridge > 1e12) break;
      Eigen::MatrixXd damped = info;
      damped.diagonal().array() += ridge * (1.0 + info.diagonal().array().abs());
      ldlt.compute(damped);
    }
    const Eigen::VectorXd step = ldlt.solve(grad);
    double scale = 1.0;
    bool accepted = false;
    const double slack = 1e-12 * (1.0 + std::abs(ll));
    for (int h = 0; h < 50; ++h, scale *= 0.5) {
      const Eigen::VectorXd cand = params + scale * step;
      const double ll_c = log_likelihood_unchecked(x, resp, cand);
      if (std::isfinite(ll_c) && ll_c >= ll - slack) {
        params = cand;
        ll = ll_c;
        accepted = true;
        break;
      }
    }
    if (params(p) > kMaxLogPhi)
      throw StatisticalError("beta regression: precision diverges (phi > 1e8); the response is fitted perfectly");
    if (!accepted) break;
  }

  if (!converged) {
    std::ostringstream msg;
    msg << "beta regression did not converge after " << iter << " iterations (gradient max-norm "
        << grad.cwiseAbs().maxCoeff() << ", log-likelihood " << ll << ", phi " << std::exp(params(p)) << ")";
    throw StatisticalError(msg.str());
  }

  RegressionFit fit;
  fit.columns = columns;
  fit.beta = params.head(p);
  fit.phi = std::exp(params(p));
  fit.log_likelihood = ll;
  fit.n_obs = static_cast<std::size_t>(n);
  fit.iterations = iter;
  fit.gradient_max_norm = grad.cwiseAbs().maxCoeff();
  const Eigen::MatrixXd info = -hess;
  Eigen::LDLT<Eigen::MatrixXd> ldlt(info);
  if (ldlt.info() != Eigen::Success || !ldlt.isPositive() || (ldlt.vectorD().array() <= 0.0).any())
    throw StatisticalError("beta regression: observed information is not positive definite at the optimum");
  Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
  fit.covariance = 0.5 * (cov + cov.transpose());
  return fit;
}

}  // namespace netloc
