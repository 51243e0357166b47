#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>
#include <boost/math/tools/minima.hpp>

#include "floatpop/error.hpp"
#include "floatpop/special.hpp"

namespace floatpop {

/// Log-link count regression input: response y, regressors X and a fixed
/// offset (log exposure) entering with coefficient one.
struct DesignMatrix {
  std::vector<std::string> names;
  Eigen::MatrixXd x;
  Eigen::VectorXd offset;
  Eigen::VectorXd y;

  Eigen::Index rows() const { return x.rows(); }
  Eigen::Index cols() const { return x.cols(); }

  void validate() const {
    if (static_cast<Eigen::Index>(names.size()) != x.cols())
      throw InputError("design: column names do not match column count");
    if (offset.size() != x.rows() || y.size() != x.rows())
      throw InputError("design: offset/response length does not match rows");
    if (x.rows() <= x.cols()) throw InputError("design: need more observations than columns");
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      if (!(y[i] >= 0) || y[i] != std::floor(y[i]) || !std::isfinite(y[i]))
        throw InputError("design: response must be non-negative integers");
      if (!std::isfinite(offset[i])) throw InputError("design: offset must be finite");
    }
    if (!x.allFinite()) throw InputError("design: regressors must be finite");
    for (Eigen::Index j = 0; j < x.cols(); ++j)
      if (x.col(j).cwiseAbs().maxCoeff() == 0.0)
        throw NumericalError("collinear design: column '" + names[static_cast<std::size_t>(j)] + "' is all zero");
  }
};

struct FitOptions {
  int max_irls_iterations = 100;
  double irls_tolerance = 1e-8;  // max |Δβ|
  double min_alpha = 1e-8;
  double max_alpha = 1e4;
  int brent_bits = 40;
  int max_outer_iterations = 200;
};

/// One fitted regression. Per-term vectors are aligned with `names`.
struct SnapshotFit {
  int minute = 0;
  std::vector<std::string> names;
  std::vector<double> beta, se, irr, ci_low, ci_high, z, p;
  double alpha = 0.0;
  bool converged = false;
  bool poisson_limit = false;
  std::size_t n_obs = 0;
  double log_likelihood = 0.0;
  int iterations = 0;

  std::optional<std::size_t> index_of(std::string_view name) const {
    auto it = std::find(names.begin(), names.end(), name);
    if (it == names.end()) return std::nullopt;
    return static_cast<std::size_t>(it - names.begin());
  }
  std::size_t require(std::string_view name) const {
    auto i = index_of(name);
    if (!i) throw InputError("fit has no regressor '" + std::string(name) + "'");
    return *i;
  }
};

inline constexpr double kZ95 = 1.959963984540054;

namespace detail {

/// α-dependent pieces of the NB2 log-likelihood that only depend on the
/// integer response: Σ_{k<y} ln(1 + kα), tabulated as a prefix sum.
class NbCountTerms {
 public:
  explicit NbCountTerms(const Eigen::VectorXd& y) : y_(y) {
    double mx = 0;
    log_factorial_sum_ = 0;
    for (Eigen::Index i = 0; i < y.size(); ++i) {
      mx = std::max(mx, y[i]);
      log_factorial_sum_ += log_gamma(y[i] + 1.0);
    }
    y_max_ = static_cast<std::size_t>(mx);
  }

  double log_factorial_sum() const { return log_factorial_sum_; }

  /// Σ_i Σ_{k<y_i} ln(1 + kα)
  double log_rising_sum(double alpha) const {
    if (alpha == 0.0) return 0.0;
    if (y_max_ > kTableLimit) {
      double s = 0;
      const double r = 1.0 / alpha;
      for (Eigen::Index i = 0; i < y_.size(); ++i)
        if (y_[i] > 0) s += y_[i] * std::log(alpha) + log_gamma(y_[i] + r) - log_gamma(r);
      return s;
    }
    std::vector<double> prefix(y_max_ + 1, 0.0);
    for (std::size_t k = 1; k <= y_max_; ++k) prefix[k] = prefix[k - 1] + std::log1p(static_cast<double>(k - 1) * alpha);
    double s = 0;
    for (Eigen::Index i = 0; i < y_.size(); ++i) s += prefix[static_cast<std::size_t>(y_[i])];
    return s;
  }

  /// Σ_i Σ_{k<y_i} k / (1 + kα) and Σ_i Σ_{k<y_i} k² / (1 + kα)².
  std::pair<double, double> rising_derivatives(double alpha) const {
    std::vector<double> d1(y_max_ + 1, 0.0), d2(y_max_ + 1, 0.0);
    for (std::size_t k = 1; k <= y_max_; ++k) {
      const double kk = static_cast<double>(k - 1);
      const double q = kk / (1.0 + kk * alpha);
      d1[k] = d1[k - 1] + q;
      d2[k] = d2[k - 1] + q * q;
    }
    double s1 = 0, s2 = 0;
    for (Eigen::Index i = 0; i < y_.size(); ++i) {
      s1 += d1[static_cast<std::size_t>(y_[i])];
      s2 += d2[static_cast<std::size_t>(y_[i])];
    }
    return {s1, s2};
  }

 private:
  static constexpr std::size_t kTableLimit = 5'000'000;
  const Eigen::VectorXd& y_;
  std::size_t y_max_ = 0;
  double log_factorial_sum_ = 0;
};

inline Eigen::VectorXd linear_predictor(const DesignMatrix& d, const Eigen::VectorXd& beta) {
  Eigen::VectorXd eta = d.x * beta + d.offset;
  return eta.cwiseMin(700.0);
}

/// μ-dependent part of the NB2 (α > 0) or Poisson (α = 0) log-likelihood.
inline double mean_loglik(const Eigen::VectorXd& y, const Eigen::VectorXd& eta, double alpha) {
  double s = 0;
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double mu = std::exp(eta[i]);
    if (alpha == 0.0) s += y[i] * eta[i] - mu;
    else s += y[i] * eta[i] - (y[i] + 1.0 / alpha) * std::log1p(alpha * mu);
  }
  return s;
}

struct IrlsResult {
  Eigen::VectorXd beta;
  double loglik_mean = -INFINITY;  // mean_loglik at beta
  int iterations = 0;
  bool converged = false;
};

/// Fisher scoring for β at fixed α with working weights μ / (1 + αμ).
inline IrlsResult irls(const DesignMatrix& d, double alpha, const Eigen::VectorXd* start, const FitOptions& opt) {
  const Eigen::Index n = d.rows();
  IrlsResult r;
  Eigen::VectorXd eta(n), mu(n), w(n), z(n);
  auto solve = [&](const Eigen::VectorXd& weights, const Eigen::VectorXd& work) {
    const Eigen::MatrixXd xtwx = d.x.transpose() * weights.asDiagonal() * d.x;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(xtwx);
    if (ldlt.info() != Eigen::Success || !ldlt.isPositive() ||
        ldlt.vectorD().minCoeff() <= 1e-12 * ldlt.vectorD().maxCoeff())
      throw NumericalError("collinear design");
    return Eigen::VectorXd(ldlt.solve(d.x.transpose() * weights.cwiseProduct(work)));
  };

  if (start) {
    r.beta = *start;
  } else {
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = d.y[i] + 0.1;
      eta[i] = std::log(mu[i]);
      w[i] = mu[i] / (1.0 + alpha * mu[i]);
      z[i] = eta[i] - d.offset[i] + (d.y[i] - mu[i]) / mu[i];
    }
    r.beta = solve(w, z);
  }
  eta = linear_predictor(d, r.beta);
  r.loglik_mean = mean_loglik(d.y, eta, alpha);

  for (int it = 1; it <= opt.max_irls_iterations; ++it) {
    r.iterations = it;
    for (Eigen::Index i = 0; i < n; ++i) {
      mu[i] = std::exp(eta[i]);
      w[i] = mu[i] / (1.0 + alpha * mu[i]);
      z[i] = eta[i] - d.offset[i] + (d.y[i] - mu[i]) / mu[i];
    }
    Eigen::VectorXd next = solve(w, z);
    Eigen::VectorXd next_eta = linear_predictor(d, next);
    double ll = mean_loglik(d.y, next_eta, alpha);
    // Step halving when the full step lowers the likelihood.
    for (int half = 0; half < 30 && !(ll >= r.loglik_mean - 1e-10 * (1.0 + std::abs(r.loglik_mean))); ++half) {
      next = 0.5 * (next + r.beta);
      next_eta = linear_predictor(d, next);
      ll = mean_loglik(d.y, next_eta, alpha);
    }
    const double delta = (next - r.beta).cwiseAbs().maxCoeff();
    r.beta = next;
    eta = next_eta;
    r.loglik_mean = ll;
    if (!std::isfinite(delta) || !r.beta.allFinite()) return r;
    if (delta < opt.irls_tolerance) {
      r.converged = true;
      return r;
    }
  }
  return r;
}

/// Small-t safe evaluation of [2(t/(1+t) - ln(1+t)) + t²/(1+t)²] / t³.
inline double alpha_curvature_kernel(double t) {
  if (t < 0.05) {
    double s = 0, tp = 1;
    for (int n = 3; n < 30; ++n) {
      const double sign = (n % 2 == 1) ? 1.0 : -1.0;
      s += sign * (n - 1) * (2 - n) / static_cast<double>(n) * tp;
      tp *= t;
    }
    return s;
  }
  const double l = std::log1p(t);
  return (2.0 * (t / (1.0 + t) - l) + t * t / ((1.0 + t) * (1.0 + t))) / (t * t * t);
}

inline void check_rank(const DesignMatrix& d) {
  Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(d.x);
  qr.setThreshold(1e-10);
  if (qr.rank() < d.cols()) throw NumericalError("collinear design");
}

inline void fill_inference(SnapshotFit& f) {
  const std::size_t p = f.beta.size();
  f.irr.resize(p);
  f.ci_low.resize(p);
  f.ci_high.resize(p);
  f.z.resize(p);
  f.p.resize(p);
  for (std::size_t k = 0; k < p; ++k) {
    f.irr[k] = std::exp(f.beta[k]);
    f.ci_low[k] = std::exp(f.beta[k] - kZ95 * f.se[k]);
    f.ci_high[k] = std::exp(f.beta[k] + kZ95 * f.se[k]);
    if (f.converged && f.se[k] > 0 && std::isfinite(f.se[k])) {
      f.z[k] = f.beta[k] / f.se[k];
      f.p[k] = two_sided_normal_p(f.z[k]);
    } else {
      f.z[k] = std::numeric_limits<double>::quiet_NaN();
      f.p[k] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

inline SnapshotFit make_fit(const DesignMatrix& d, const Eigen::VectorXd& beta, const Eigen::VectorXd& se,
                            double alpha) {
  SnapshotFit f;
  f.names = d.names;
  f.beta.assign(beta.data(), beta.data() + beta.size());
  f.se.assign(se.data(), se.data() + se.size());
  f.alpha = alpha;
  f.n_obs = static_cast<std::size_t>(d.rows());
  return f;
}

inline SnapshotFit poisson_from_irls(const DesignMatrix& d, const IrlsResult& r, const NbCountTerms& terms) {
  const Eigen::VectorXd mu = linear_predictor(d, r.beta).array().exp();
  const Eigen::MatrixXd info = d.x.transpose() * mu.asDiagonal() * d.x;
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
  SnapshotFit f = make_fit(d, r.beta, se, 0.0);
  f.converged = r.converged;
  f.iterations = r.iterations;
  f.log_likelihood = r.loglik_mean - terms.log_factorial_sum();
  fill_inference(f);
  return f;
}

}  // namespace detail

/// NB2 log-likelihood Σ [Σ_{k<y} ln(1+kα) − ln y! − (y + 1/α) ln(1+αμ) + y ln μ];
/// α = 0 gives the Poisson log-likelihood.
inline double nb2_log_likelihood(const DesignMatrix& d, const Eigen::VectorXd& beta, double alpha) {
  const detail::NbCountTerms terms(d.y);
  return detail::mean_loglik(d.y, detail::linear_predictor(d, beta), alpha) + terms.log_rising_sum(alpha) -
         terms.log_factorial_sum();
}

/// Score vector ∂ℓ/∂β at (β, α).
inline Eigen::VectorXd nb2_score(const DesignMatrix& d, const Eigen::VectorXd& beta, double alpha) {
  const Eigen::VectorXd eta = detail::linear_predictor(d, beta);
  Eigen::VectorXd r(d.rows());
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const double mu = std::exp(eta[i]);
    r[i] = (d.y[i] - mu) / (1.0 + alpha * mu);
  }
  return d.x.transpose() * r;
}

/// Poisson regression by IRLS; standard errors from the inverse Fisher
/// information.
inline SnapshotFit fit_poisson(const DesignMatrix& d, const FitOptions& opt = {}) {
  d.validate();
  detail::check_rank(d);
  const detail::NbCountTerms terms(d.y);
  return detail::poisson_from_irls(d, detail::irls(d, 0.0, nullptr, opt), terms);
}

/// Observed information of the NB2 log-likelihood in (β, α), α > 0.
inline Eigen::MatrixXd nb2_observed_information(const DesignMatrix& d, const Eigen::VectorXd& beta, double alpha) {
  const Eigen::Index n = d.rows(), p = d.cols();
  const Eigen::VectorXd eta = detail::linear_predictor(d, beta);
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(p + 1, p + 1);
  Eigen::VectorXd wbb(n), wba(n);
  double haa = 0;
  for (Eigen::Index i = 0; i < n; ++i) {
    const double mu = std::exp(eta[i]), y = d.y[i];
    const double t = alpha * mu, q = 1.0 + t;
    wbb[i] = mu * (1.0 + alpha * y) / (q * q);
    wba[i] = (y - mu) * mu / (q * q);
    haa += mu * mu * mu * detail::alpha_curvature_kernel(t) + y * mu * mu / (q * q);
  }
  const detail::NbCountTerms terms(d.y);
  haa -= terms.rising_derivatives(alpha).second;
  h.topLeftCorner(p, p) = -(d.x.transpose() * wbb.asDiagonal() * d.x);
  h.topRightCorner(p, 1) = -(d.x.transpose() * wba);
  h.bottomLeftCorner(1, p) = h.topRightCorner(p, 1).transpose();
  h(p, p) = haa;
  return -h;
}

/// ∂ℓ/∂α at (β, α), α > 0.
inline double nb2_alpha_score(const DesignMatrix& d, const Eigen::VectorXd& beta, double alpha) {
  const Eigen::VectorXd eta = detail::linear_predictor(d, beta);
  const detail::NbCountTerms terms(d.y);
  double s = terms.rising_derivatives(alpha).first;
  for (Eigen::Index i = 0; i < d.rows(); ++i) {
    const double mu = std::exp(eta[i]), t = alpha * mu;
    s += std::log1p(t) / (alpha * alpha) - (d.y[i] + 1.0 / alpha) * mu / (1.0 + t);
  }
  return s;
}

/// Negative binomial (NB2) regression. β is profiled by IRLS for each
/// candidate α and ln α is chosen by Brent's method on
/// [ln min_alpha, ln max_alpha]. When the Poisson fit shows no
/// over-dispersion (score for α at zero is non-positive) or α lands on the
/// lower bound, the Poisson fit is returned with `poisson_limit` set.
inline SnapshotFit fit_negbin(const DesignMatrix& d, const FitOptions& opt = {}) {
  d.validate();
  detail::check_rank(d);
  const detail::NbCountTerms terms(d.y);
  const detail::IrlsResult pois = detail::irls(d, 0.0, nullptr, opt);

  auto poisson_limit = [&]() {
    SnapshotFit f = detail::poisson_from_irls(d, pois, terms);
    f.poisson_limit = true;
    return f;
  };

  // Score test for α at 0: ½ Σ [(y − μ)² − y].
  const Eigen::VectorXd mu0 = detail::linear_predictor(d, pois.beta).array().exp();
  double score0 = 0;
  for (Eigen::Index i = 0; i < d.rows(); ++i) score0 += (d.y[i] - mu0[i]) * (d.y[i] - mu0[i]) - d.y[i];
  if (score0 <= 0) return poisson_limit();

  Eigen::VectorXd warm = pois.beta;
  bool inner_ok = true;
  int evaluations = 0;
  auto negative_profile = [&](double log_alpha) {
    const double a = std::exp(log_alpha);
    const detail::IrlsResult r = detail::irls(d, a, &warm, opt);
    ++evaluations;
    if (!r.converged) inner_ok = false;
    if (r.beta.allFinite()) warm = r.beta;
    return -(r.loglik_mean + terms.log_rising_sum(a));
  };
  std::uintmax_t max_iter = static_cast<std::uintmax_t>(opt.max_outer_iterations);
  const auto [log_alpha, neg_ll] = boost::math::tools::brent_find_minima(
      negative_profile, std::log(opt.min_alpha), std::log(opt.max_alpha), opt.brent_bits, max_iter);
  const bool outer_ok = max_iter < static_cast<std::uintmax_t>(opt.max_outer_iterations);
  (void)neg_ll;

  const double alpha = std::exp(log_alpha);
  if (log_alpha <= std::log(opt.min_alpha) + 1e-3) return poisson_limit();

  FitOptions tight = opt;
  tight.irls_tolerance = std::min(opt.irls_tolerance, 1e-10);
  const detail::IrlsResult final_fit = detail::irls(d, alpha, &warm, tight);
  const Eigen::Index p = d.cols();
  const Eigen::MatrixXd info = nb2_observed_information(d, final_fit.beta, alpha);
  Eigen::LLT<Eigen::MatrixXd> llt(info);
  Eigen::VectorXd se(p);
  bool info_ok = llt.info() == Eigen::Success;
  if (info_ok) {
    const Eigen::MatrixXd cov = llt.solve(Eigen::MatrixXd::Identity(p + 1, p + 1));
    se = cov.diagonal().head(p).cwiseSqrt();
    info_ok = se.allFinite();
  }
  if (!info_ok) se = info.topLeftCorner(p, p).inverse().diagonal().cwiseSqrt();

  SnapshotFit f = detail::make_fit(d, final_fit.beta, se, alpha);
  f.converged = inner_ok && outer_ok && final_fit.converged && info_ok;
  f.iterations = evaluations;
  f.log_likelihood = final_fit.loglik_mean + terms.log_rising_sum(alpha) - terms.log_factorial_sum();
  detail::fill_inference(f);
  return f;
}

/// NB2 fit with α held fixed; standard errors from the β block of the
/// observed information.
inline SnapshotFit fit_negbin_fixed_alpha(const DesignMatrix& d, double alpha, const FitOptions& opt = {}) {
  d.validate();
  detail::check_rank(d);
  if (!(alpha > 0)) throw InputError("fixed alpha must be positive");
  const detail::NbCountTerms terms(d.y);
  FitOptions tight = opt;
  tight.irls_tolerance = std::min(opt.irls_tolerance, 1e-10);
  const detail::IrlsResult r = detail::irls(d, alpha, nullptr, tight);
  const Eigen::Index p = d.cols();
  const Eigen::MatrixXd info = nb2_observed_information(d, r.beta, alpha).topLeftCorner(p, p);
  const Eigen::VectorXd se = info.inverse().diagonal().cwiseSqrt();
  SnapshotFit f = detail::make_fit(d, r.beta, se, alpha);
  f.converged = r.converged && se.allFinite();
  f.iterations = r.iterations;
  f.log_likelihood = r.loglik_mean + terms.log_rising_sum(alpha) - terms.log_factorial_sum();
  detail::fill_inference(f);
  return f;
}

struct WaldResult {
  double z = 0;
  double p = 1;
};

inline WaldResult wald_test(double beta, double se) {
  if (!(se > 0) || !std::isfinite(se)) throw NumericalError("degenerate variance");
  const double z = beta / se;
  return {z, two_sided_normal_p(z)};
}

inline WaldResult wald_test(const SnapshotFit& fit, std::string_view name) {
  if (!fit.converged) throw NumericalError("Wald test on a fit that did not converge");
  const auto k = fit.require(name);
  return wald_test(fit.beta[k], fit.se[k]);
}

struct IrrEstimate {
  double point = 1;
  double ci_low = 1;
  double ci_high = 1;
  bool excludes_one() const { return ci_low > 1.0 || ci_high < 1.0; }
};

inline IrrEstimate irr(double beta, double se) {
  return {std::exp(beta), std::exp(beta - kZ95 * se), std::exp(beta + kZ95 * se)};
}

inline IrrEstimate irr(const SnapshotFit& fit, std::string_view name) {
  if (!fit.converged) throw NumericalError("IRR of a fit that did not converge");
  const auto k = fit.require(name);
  return irr(fit.beta[k], fit.se[k]);
}

}  // namespace floatpop
