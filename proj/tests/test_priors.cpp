#include <cmath>
#include <numbers>

#include <boost/math/distributions/students_t.hpp>
#include <gtest/gtest.h>

#include "dbsc/mcmc.hpp"
#include "dbsc/priors.hpp"
#include "support.hpp"

using namespace dbsc;

namespace {

WeightedDistances distances_of(std::initializer_list<double> d_c) {
  Eigen::VectorXd v(static_cast<Eigen::Index>(d_c.size()));
  Eigen::Index i = 0;
  for (double x : d_c) v(i++) = x;
  return weighted_distance(v, v, 0.5);
}

// Panel whose standardized form we bypass: log_likelihood reads raw arrays.
PanelData zero_panel(int T, int T0, int J) {
  PanelData p = dbsc::testing::random_panel(T, T0, J, 1);
  p.treated_outcomes.setZero();
  return p;
}

ModelState state_for(int J) {
  ModelState s;
  s.beta = Eigen::VectorXd::Zero(J);
  s.lambda2 = Eigen::VectorXd::Ones(J);
  s.aux_lambda = Eigen::VectorXd::Ones(J);
  s.omega.assign(J, 1);
  return s;
}

}  // namespace

TEST(LogLikelihood, StandardNormalAtZero) {
  const int T0 = 6;
  const PanelData p = zero_panel(8, T0, 3);
  ModelState s = state_for(3);
  const double base = -(T0 - 1) / 2.0 * std::log(2 * std::numbers::pi);
  EXPECT_NEAR(log_likelihood(s, p), base, 1e-12);

  // Perfect fit with a nonzero beta gives the same value.
  PanelData q = p;
  s.beta << 0.5, -1.0, 2.0;
  for (int t = 0; t < q.n_periods(); ++t) q.treated_outcomes(t) = q.donor_outcomes.row(t).dot(s.beta);
  s.ar_coef = 0.0;
  EXPECT_NEAR(log_likelihood(s, q), base, 1e-12);

  // One unit residual lowers the value by exactly 1/2.
  q.treated_outcomes(3) += 1.0;
  EXPECT_NEAR(log_likelihood(s, q), base - 0.5, 1e-12);
}

TEST(LogLikelihood, FirstPeriodHasNoTerm) {
  PanelData p = zero_panel(8, 5, 2);
  ModelState s = state_for(2);
  const double a = log_likelihood(s, p);
  p.treated_outcomes(0) = 0.0;
  p.donor_outcomes.row(0).setConstant(1e6);
  EXPECT_EQ(log_likelihood(s, p), a);
  // Post-period values are not part of the likelihood either.
  p.treated_outcomes(6) = 123.0;
  EXPECT_EQ(log_likelihood(s, p), a);
}

TEST(LogLikelihood, NonFiniteIsNumericalError) {
  PanelData p = zero_panel(8, 5, 2);
  ModelState s = state_for(2);
  s.sigma2_out = 0.0;
  EXPECT_THROW(log_likelihood(s, p), NumericalError);
}

TEST(Densities, HalfCauchyAtOne) {
  EXPECT_NEAR(log_half_cauchy(1.0, 1.0), std::log(1.0 / std::numbers::pi), 1e-15);
  EXPECT_EQ(log_half_cauchy(-1.0, 1.0), -std::numeric_limits<double>::infinity());
}

TEST(Densities, HalfTMatchesReference) {
  for (double nu : {1.0, 4.0, 10.0})
    for (double scale : {0.5, 1.0, 3.0})
      for (double x : {0.01, 0.5, 1.0, 4.0}) {
        boost::math::students_t t(nu);
        const double ref = std::log(2.0 * boost::math::pdf(t, x / scale) / scale);
        EXPECT_NEAR(log_half_t(x, nu, scale), ref, 1e-12);
      }
  // nu = 1 is the half-Cauchy.
  EXPECT_NEAR(log_half_t(0.7, 1.0, 2.0), log_half_cauchy(0.7, 2.0), 1e-13);
}

TEST(Densities, VariancePriorSdReadingIsChangeOfVariables) {
  PriorSpec spec;
  spec.variance_prior_on = VariancePriorOn::StdDev;
  // Integrate exp(log prior) over sigma2 numerically: should be 1.
  double total = 0.0;
  const double h = 1e-3;
  for (double u = -12.0; u < 12.0; u += h) {
    const double s2 = std::exp(u);
    total += std::exp(log_variance_prior(s2, spec)) * s2 * h;
  }
  EXPECT_NEAR(total, 1.0, 2e-3);
}

TEST(LogPrior, DhsBetaTermAtZero) {
  const WeightedDistances w = distances_of({0.4, 0.8});
  PriorSpec spec;
  spec.family = PriorFamily::DHS;
  ModelState s = state_for(2);
  s.sigma2_out = 1.7;
  s.lambda2 << 0.3, 2.0;
  s.zeta2 = 0.6;
  ModelState s_no_beta_change = s;
  const double lp = log_prior(s, spec, w);
  double expected = log_normal_pdf(0, spec.mu_ar, 9.0) + log_half_t(1.7, 4.0, 1.0);
  for (int i = 0; i < 2; ++i) {
    expected += -0.5 * std::log(2 * std::numbers::pi * 1.7 * s.lambda2(i) * 0.6);
    expected += log_half_cauchy(std::sqrt(s.lambda2(i)), w.d_c(i));
  }
  expected += log_half_cauchy(std::sqrt(0.6), 1.0);
  EXPECT_NEAR(lp, expected, 1e-12);
}

TEST(LogPrior, DhsWithUnitDistancesIsHorseshoe) {
  const WeightedDistances w = distances_of({1.0, 1.0, 1.0});
  PriorSpec spec;
  spec.family = PriorFamily::DHS;
  for (double lam = 0.05; lam < 10.0; lam *= 1.3) {
    ModelState s = state_for(3);
    s.lambda2.setConstant(lam * lam);
    ModelState base = s;
    base.lambda2.setConstant(1.0);
    // Difference in the lambda terms equals the C+(0,1) density ratio.
    const double diff = log_prior(s, spec, w) - log_prior(base, spec, w);
    double expected = 0.0;
    for (int i = 0; i < 3; ++i) {
      expected += std::log(2.0 / (std::numbers::pi * (1 + lam * lam))) - std::log(2.0 / (std::numbers::pi * 2.0));
      expected += -0.5 * std::log(lam * lam);  // beta term at 0
    }
    EXPECT_NEAR(diff, expected, 1e-12);
  }
}

TEST(LogPrior, Ds2AllSpikedHasNoBetaTerms) {
  const WeightedDistances w = distances_of({0.1, 0.2, 0.3});
  PriorSpec spec;
  spec.rho = 1.0;
  ModelState s = state_for(3);
  s.omega = assign_components(w, 1.0);
  s.nu2_slab = 2.5;
  s.sigma2_out = 0.8;
  const double expected =
      log_normal_pdf(0.0, 0.0, 9.0) + log_half_t(0.8, 4.0, 1.0) + log_half_cauchy(std::sqrt(2.5), 1.0);
  EXPECT_NEAR(log_prior(s, spec, w), expected, 1e-13);
}

TEST(LogPrior, Ds2NonzeroSpikeRejected) {
  const WeightedDistances w = distances_of({0.1, 0.9});
  PriorSpec spec;
  spec.rho = 0.5;
  ModelState s = state_for(2);
  s.omega = assign_components(w, 0.5);
  s.beta(0) = 1e-300;
  EXPECT_THROW(log_prior(s, spec, w), ValidationError);
  s.beta(0) = 0.0;
  s.beta(1) = 3.0;
  EXPECT_NO_THROW(log_prior(s, spec, w));
}

TEST(AssignComponents, StrictBoundaryAndExtremes) {
  EXPECT_EQ(assign_components(distances_of({0.1, 0.3, 0.5}), 0.3), (std::vector<std::uint8_t>{0, 0, 1}));
  EXPECT_EQ(assign_components(distances_of({0.1, 0.3, 0.5}), 0.0), (std::vector<std::uint8_t>{1, 1, 1}));
  EXPECT_EQ(assign_components(distances_of({0.1, 1.0, 0.5}), 1.0), (std::vector<std::uint8_t>{0, 0, 0}));
}

TEST(AssignComponents, MonotoneInRho) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    Eigen::VectorXd d(20);
    for (int i = 0; i < 20; ++i) d(i) = rng.uniform(0, 1);
    const auto w = weighted_distance(d, d, 0.0);
    const double r1 = rng.uniform(0, 1), r2 = r1 + rng.uniform(0, 1 - r1);
    const auto a = assign_components(w, r1), b = assign_components(w, r2);
    for (int i = 0; i < 20; ++i) EXPECT_LE(b[i], a[i]);
  }
}

TEST(PriorSpec, Violations) {
  PriorSpec s;
  s.kappa_d = 1.5;
  auto v = s.violations();
  EXPECT_NE(std::find(v.begin(), v.end(), "kappa_d must be in [0,1]"), v.end());
  EXPECT_NE(std::find(v.begin(), v.end(), "DS2 requires either 'rho' or 'exclusion_fraction'"), v.end());
  PriorSpec t;
  t.rho = 1.2;
  EXPECT_FALSE(t.violations().empty());
  t.rho = 0.4;
  EXPECT_TRUE(t.violations().empty());
  PriorSpec u;
  u.family = PriorFamily::DHS;
  u.sigma_ar = 0.0;
  EXPECT_EQ(u.violations().size(), 1u);
}

TEST(LogPosterior, FiniteOnInterior) {
  for (std::uint64_t seed = 1; seed <= 30; ++seed) {
    const PanelData raw = dbsc::testing::random_panel(14, 10, 6, seed);
    const auto [p, rec] = standardize(raw);
    for (PriorFamily fam : {PriorFamily::DHS, PriorFamily::DS2}) {
      PriorSpec spec;
      spec.family = fam;
      spec.exclusion_fraction = 0.25;
      const auto w = compute_distances(p.covariates, p.coordinates, 0.5);
      resolve_cutoff(spec, w);
      ModelState s = initialize(p, spec, w);
      Rng rng(seed);
      for (int i = 0; i < 6; ++i)
        if (s.omega[i]) s.beta(i) = rng.normal();
      s.ar_coef = rng.normal();
      s.sigma2_out = std::exp(rng.normal());
      EXPECT_TRUE(std::isfinite(log_posterior(s, p, spec, w)));
    }
  }
}
