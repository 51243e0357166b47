#include <cmath>
#include <random>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <gtest/gtest.h>

#include "floatpop/glm.hpp"
#include "support/oracles.hpp"

using namespace floatpop;
using big = boost::multiprecision::cpp_bin_float_50;

namespace {

DesignMatrix intercept_only(const std::vector<double>& y, double offset = 0.0) {
  DesignMatrix d;
  d.names = {"intercept"};
  const auto n = static_cast<Eigen::Index>(y.size());
  d.x = Eigen::MatrixXd::Ones(n, 1);
  d.offset = Eigen::VectorXd::Constant(n, offset);
  d.y = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  return d;
}

DesignMatrix two_groups(const std::vector<double>& a, const std::vector<double>& b) {
  std::vector<double> y(a);
  y.insert(y.end(), b.begin(), b.end());
  DesignMatrix d = intercept_only(y);
  d.names.push_back("g");
  d.x.conservativeResize(Eigen::NoChange, 2);
  for (Eigen::Index i = 0; i < d.rows(); ++i) d.x(i, 1) = i >= static_cast<Eigen::Index>(a.size()) ? 1.0 : 0.0;
  return d;
}

}  // namespace

TEST(SpecialFunctions, LogGammaAgainstHighPrecision) {
  for (double x : {1e-6, 0.01, 0.3, 0.5, 0.999, 1.0, 1.5, 2.0, 2.5, 7.0, 33.3, 171.5, 1e4, 1e7}) {
    const double ref = static_cast<double>(boost::multiprecision::lgamma(big(x)));
    EXPECT_NEAR(log_gamma(x), ref, 1e-13 + 1e-12 * std::abs(ref)) << x;
  }
}

TEST(SpecialFunctions, NormalTailAgainstHighPrecision) {
  for (double z : {0.0, 0.5, 1.0, 1.959963984540054, 3.0, 4.31, 6.0, 9.0}) {
    const big ref = boost::multiprecision::erfc(big(z) / boost::multiprecision::sqrt(big(2)));
    const double p = two_sided_normal_p(z);
    EXPECT_NEAR(p, static_cast<double>(ref), 1e-12) << z;
    EXPECT_NEAR(p / static_cast<double>(ref), 1.0, 1e-13) << z;
    EXPECT_DOUBLE_EQ(two_sided_normal_p(-z), p);
  }
}

TEST(Wald, Examples) {
  auto w = wald_test(0.0, 1.0);
  EXPECT_EQ(w.z, 0.0);
  EXPECT_EQ(w.p, 1.0);
  EXPECT_NEAR(wald_test(1.959964, 1.0).p, 0.05, 1e-6);
  w = wald_test(0.1293, 0.03);
  EXPECT_NEAR(w.z, 4.31, 1e-12);
  const big ref = boost::multiprecision::erfc(big(0.1293) / big(0.03) / boost::multiprecision::sqrt(big(2)));
  EXPECT_NEAR(w.p, static_cast<double>(ref), 1e-15);
  EXPECT_LT(w.p, 1e-4);
  EXPECT_THROW(wald_test(1.0, 0.0), NumericalError);
}

TEST(Wald, NeedsConvergedFit) {
  SnapshotFit f;
  f.names = {"pogo"};
  f.beta = {1};
  f.se = {1};
  EXPECT_THROW(wald_test(f, "pogo"), NumericalError);
  f.converged = true;
  EXPECT_NEAR(wald_test(f, "pogo").z, 1.0, 0);
  EXPECT_THROW(wald_test(f, "missing"), InputError);
}

TEST(Irr, Examples) {
  auto r = irr(0.0, 0.1);
  EXPECT_EQ(r.point, 1.0);
  EXPECT_FALSE(r.excludes_one());
  EXPECT_NEAR(irr(std::log(1.138), 0.01).point, 1.138, 1e-15);
  r = irr(-0.046, 0.01);
  EXPECT_NEAR(r.point, 0.955, 5e-4);
  EXPECT_NEAR(r.ci_low, std::exp(-0.046 - 1.959963984540054 * 0.01), 1e-15);
  EXPECT_NEAR(r.ci_high, std::exp(-0.046 + 1.959963984540054 * 0.01), 1e-15);
  EXPECT_LT(r.ci_high, 1.0);
  EXPECT_TRUE(r.excludes_one());
}

TEST(Poisson, InterceptOnlyIsLogMean) {
  const auto f = fit_poisson(intercept_only(std::vector<double>(10, 7.0)));
  ASSERT_TRUE(f.converged);
  EXPECT_NEAR(f.beta[0], std::log(7.0), 1e-8);
  const auto g = fit_poisson(intercept_only(std::vector<double>(10, 7.0), std::log(2.0)));
  EXPECT_NEAR(g.beta[0], std::log(3.5), 1e-8);
  EXPECT_NEAR(g.se[0], 1 / std::sqrt(70.0), 1e-8);
}

TEST(Poisson, TwoGroupsMatchLikelihoodGrid) {
  const auto d = two_groups({9, 11, 10, 8, 12}, {19, 21, 20, 22, 18});
  const auto f = fit_poisson(d);
  EXPECT_NEAR(f.beta[1], std::log(2.0), 1e-6);
  EXPECT_NEAR(f.beta[0], std::log(10.0), 1e-6);
  // Brute force over a fine lattice around the closed-form optimum.
  double best = -INFINITY, b0 = 0, b1 = 0;
  for (int i = -200; i <= 200; ++i)
    for (int j = -200; j <= 200; ++j) {
      const std::vector<double> b{std::log(10.0) + i * 1e-4, std::log(2.0) + j * 1e-4};
      const double ll = oracle::nb2_loglik(d, b, 0.0);
      if (ll > best) best = ll, b0 = b[0], b1 = b[1];
    }
  EXPECT_NEAR(f.beta[0], b0, 1e-4);
  EXPECT_NEAR(f.beta[1], b1, 1e-4);
  EXPECT_NEAR(f.log_likelihood, best, 1e-6);
}

TEST(Poisson, ScoreVanishesAtConvergence) {
  std::mt19937_64 rng(1);
  for (int rep = 0; rep < 20; ++rep) {
    const auto d = oracle::random_nb_design(rng, 40 + rep, 3, 0.0, {1.5, 0.4, -0.3});
    const auto f = fit_poisson(d);
    ASSERT_TRUE(f.converged);
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.beta.data(), 3);
    EXPECT_LT(nb2_score(d, b, 0.0).cwiseAbs().maxCoeff(), 1e-6) << rep;
  }
}

TEST(Poisson, CollinearDesign) {
  auto d = two_groups({1, 2, 3}, {4, 5, 6});
  d.names.push_back("dup");
  d.x.conservativeResize(Eigen::NoChange, 3);
  d.x.col(2) = d.x.col(1) * 2.0;
  EXPECT_THROW(fit_poisson(d), NumericalError);
  EXPECT_THROW(fit_negbin(d), NumericalError);
  d = two_groups({1, 2, 3}, {4, 5, 6});
  d.x.col(1).setZero();
  EXPECT_THROW(fit_poisson(d), NumericalError);
}

TEST(Poisson, InvalidInputs) {
  auto d = intercept_only({1, 2.5, 3});
  EXPECT_THROW(fit_poisson(d), InputError);
  d = intercept_only({1, -2, 3});
  EXPECT_THROW(fit_poisson(d), InputError);
  d = intercept_only({1});
  EXPECT_THROW(fit_poisson(d), InputError);
}

TEST(NegBin, EquidispersedDataHitsPoissonLimit) {
  std::mt19937_64 rng(2);
  int limits = 0;
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = oracle::random_nb_design(rng, 60, 2, 0.0, {2.0, 0.3});
    const auto nb = fit_negbin(d);
    const auto po = fit_poisson(d);
    ASSERT_TRUE(nb.converged);
    if (nb.poisson_limit) {
      ++limits;
      EXPECT_EQ(nb.alpha, 0.0);
    }
    EXPECT_LT(nb.alpha, 0.05);
    for (std::size_t k = 0; k < 2; ++k) EXPECT_NEAR(nb.beta[k], po.beta[k], nb.poisson_limit ? 1e-12 : 1e-2);
  }
  EXPECT_GE(limits, 4);
}

TEST(NegBin, InterceptOnlyMeanIsSampleMean) {
  const std::vector<double> y{0, 3, 1, 14, 2, 0, 7, 25, 4, 1, 0, 9, 3, 3, 40, 2};
  const auto f = fit_negbin(intercept_only(y));
  ASSERT_TRUE(f.converged);
  ASSERT_FALSE(f.poisson_limit);
  double mean = 0;
  for (double v : y) mean += v;
  mean /= y.size();
  EXPECT_NEAR(f.beta[0], std::log(mean), 1e-6);
  EXPECT_GT(f.alpha, 0.5);
}

TEST(NegBin, MatchesGridSearchOnKnownDesign) {
  std::mt19937_64 rng(50);
  const auto d = oracle::random_nb_design(rng, 50, 2, 0.5, {1.0, 0.3});
  const auto f = fit_negbin(d);
  ASSERT_TRUE(f.converged);
  const auto g = oracle::grid_search_mle(d);
  EXPECT_NEAR(f.beta[0], g.beta[0], 1e-3);
  EXPECT_NEAR(f.beta[1], g.beta[1], 1e-3);
  EXPECT_NEAR(f.alpha, g.alpha, 1e-3);
  EXPECT_GE(f.log_likelihood, g.loglik - 1e-9);
}

TEST(NegBin, MatchesGridSearchOnRandomDesigns) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int rep = 0; rep < 12; ++rep) {
    const int cols = 1 + rep % 3;
    const int rows = 20 + static_cast<int>(40 * u(rng));
    const auto d = oracle::random_nb_design(rng, rows, cols, 0.1 + 1.4 * u(rng),
                                            {0.5 + 2 * u(rng), u(rng) - 0.5, u(rng) - 0.5});
    const auto f = fit_negbin(d);
    ASSERT_TRUE(f.converged) << rep;
    const auto g = oracle::grid_search_mle(d);
    for (int k = 0; k < cols; ++k) EXPECT_NEAR(f.beta[static_cast<std::size_t>(k)], g.beta[static_cast<std::size_t>(k)], 1e-3) << rep;
    EXPECT_NEAR(f.alpha, g.alpha, 1e-3) << rep;
  }
}

TEST(NegBin, LikelihoodAgreesWithGammaFormOracle) {
  std::mt19937_64 rng(4);
  const auto d = oracle::random_nb_design(rng, 30, 3, 0.8, {1.2, 0.2, 0.1});
  const Eigen::Vector3d b(1.1, 0.25, 0.05);
  for (double a : {0.0, 1e-3, 0.3, 2.0, 50.0})
    EXPECT_NEAR(nb2_log_likelihood(d, b, a), oracle::nb2_loglik(d, {1.1, 0.25, 0.05}, a), 1e-8) << a;
}

TEST(NegBin, ScoreVanishesAtConvergence) {
  std::mt19937_64 rng(5);
  for (int rep = 0; rep < 10; ++rep) {
    const auto d = oracle::random_nb_design(rng, 60, 3, 0.6, {2.0, 0.4, -0.2});
    const auto f = fit_negbin(d);
    ASSERT_TRUE(f.converged);
    if (f.poisson_limit) continue;
    const Eigen::VectorXd b = Eigen::Map<const Eigen::VectorXd>(f.beta.data(), 3);
    EXPECT_LT(nb2_score(d, b, f.alpha).cwiseAbs().maxCoeff(), 1e-6) << rep;
    EXPECT_LT(std::abs(nb2_alpha_score(d, b, f.alpha)), 1e-3) << rep;
  }
}

TEST(NegBin, ObservedInformationMatchesNumericalHessian) {
  std::mt19937_64 rng(6);
  const auto d = oracle::random_nb_design(rng, 40, 2, 0.7, {1.5, 0.5});
  const Eigen::Vector2d b(1.4, 0.45);
  const double a = 0.6;
  auto ll = [&](const Eigen::Vector3d& t) { return oracle::nb2_loglik(d, {t[0], t[1]}, t[2]); };
  const Eigen::Vector3d t0(b[0], b[1], a);
  const double h = 1e-4;
  Eigen::Matrix3d num;
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) {
      Eigen::Vector3d pp = t0, pm = t0, mp = t0, mm = t0;
      pp[i] += h, pp[j] += h;
      pm[i] += h, pm[j] -= h;
      mp[i] -= h, mp[j] += h;
      mm[i] -= h, mm[j] -= h;
      num(i, j) = -(ll(pp) - ll(pm) - ll(mp) + ll(mm)) / (4 * h * h);
    }
  const Eigen::MatrixXd info = nb2_observed_information(d, b, a);
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) EXPECT_NEAR(info(i, j), num(i, j), 1e-3 * (1 + std::abs(num(i, j)))) << i << j;
}

TEST(NegBin, ExposureInvariance) {
  std::mt19937_64 rng(7);
  const auto d = oracle::random_nb_design(rng, 60, 3, 0.4, {1.0, 0.3, 0.2});
  auto scaled = d;
  scaled.offset.array() += std::log(4.0);
  const auto f = fit_negbin(d), g = fit_negbin(scaled);
  ASSERT_FALSE(f.poisson_limit);
  EXPECT_NEAR(g.beta[0], f.beta[0] - std::log(4.0), 1e-6);
  for (std::size_t k = 1; k < 3; ++k) {
    EXPECT_NEAR(g.beta[k], f.beta[k], 1e-6);
    EXPECT_NEAR(g.se[k], f.se[k], 1e-6);
  }
  EXPECT_NEAR(g.se[0], f.se[0], 1e-6);
  EXPECT_NEAR(g.alpha, f.alpha, 1e-6);
}

TEST(NegBin, FixedTinyAlphaAgreesWithPoisson) {
  std::mt19937_64 rng(8);
  for (int rep = 0; rep < 5; ++rep) {
    const auto d = oracle::random_nb_design(rng, 50, 3, 0.5, {1.8, -0.3, 0.2});
    const auto nb = fit_negbin_fixed_alpha(d, 1e-8);
    const auto po = fit_poisson(d);
    ASSERT_TRUE(nb.converged);
    for (std::size_t k = 0; k < 3; ++k) EXPECT_NEAR(nb.beta[k], po.beta[k], 1e-5);
    EXPECT_NEAR(nb.log_likelihood, po.log_likelihood, 1e-4);
  }
  EXPECT_THROW(fit_negbin_fixed_alpha(oracle::random_nb_design(rng, 10, 1, 0, {1}), 0.0), InputError);
}

TEST(NegBin, InferenceFieldsAreConsistent) {
  std::mt19937_64 rng(9);
  const auto d = oracle::random_nb_design(rng, 60, 3, 0.5, {1.0, 0.3, 0.1});
  const auto f = fit_negbin(d);
  ASSERT_EQ(f.names, d.names);
  EXPECT_EQ(f.n_obs, 60u);
  EXPECT_GE(f.alpha, 0.0);
  for (std::size_t k = 0; k < f.beta.size(); ++k) {
    EXPECT_EQ(f.irr[k], std::exp(f.beta[k]));
    EXPECT_NEAR(std::log(f.irr[k]), f.beta[k], 4.5e-16 * std::max(1.0, std::abs(f.beta[k])));
    EXPECT_EQ(f.ci_low[k], std::exp(f.beta[k] - kZ95 * f.se[k]));
    EXPECT_EQ(f.ci_high[k], std::exp(f.beta[k] + kZ95 * f.se[k]));
    EXPECT_GT(f.se[k], 0.0);
    EXPECT_GE(f.p[k], 0.0);
    EXPECT_LE(f.p[k], 1.0);
    EXPECT_EQ(f.z[k], f.beta[k] / f.se[k]);
  }
}

TEST(NegBin, IterationCapReportsNonConvergence) {
  std::mt19937_64 rng(10);
  const auto d = oracle::random_nb_design(rng, 60, 3, 0.5, {1.0, 0.3, 0.1});
  FitOptions opt;
  opt.max_irls_iterations = 1;
  const auto f = fit_negbin(d, opt);
  EXPECT_FALSE(f.converged);
  EXPECT_TRUE(std::isnan(f.p[1]));
}
