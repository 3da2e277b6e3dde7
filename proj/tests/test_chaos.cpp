#include <gtest/gtest.h>

#include <cmath>

#include "meanfield/chaos.hpp"

using namespace meanfield;

TEST(Sampling, ReproducibleBytes) {
  const auto a = sample_iid(DensitySpec::standard_gaussian(2), 1, 42);
  const auto b = sample_iid(DensitySpec::standard_gaussian(2), 1, 42);
  EXPECT_EQ(a.coords, b.coords);
  EXPECT_NE(a.coords, sample_iid(DensitySpec::standard_gaussian(2), 1, 43).coords);
}

TEST(Sampling, UniformBoxMean) {
  const auto c = sample_iid(DensitySpec::uniform_box({0, 0}, {1, 1}), 10000, 1);
  double mx = 0, my = 0;
  for (std::size_t i = 0; i < c.size(); ++i) {
    mx += c.point(i)[0];
    my += c.point(i)[1];
  }
  EXPECT_NEAR(mx / 1e4, 0.5, 0.02);
  EXPECT_NEAR(my / 1e4, 0.5, 0.02);
}

TEST(Sampling, GaussianCovarianceDiagonal) {
  const auto c = sample_iid(DensitySpec::standard_gaussian(3), 10000, 2);
  for (std::size_t k = 0; k < 3; ++k) {
    double m = 0, s = 0;
    for (std::size_t i = 0; i < c.size(); ++i) m += c.point(i)[k];
    m /= 1e4;
    for (std::size_t i = 0; i < c.size(); ++i) s += (c.point(i)[k] - m) * (c.point(i)[k] - m);
    EXPECT_NEAR(s / (1e4 - 1), 1.0, 0.05);
  }
}

TEST(Sampling, InvalidDensities) {
  EXPECT_THROW(DensitySpec::gaussian({0, 0}, {1}), std::invalid_argument);
  EXPECT_THROW(DensitySpec::gaussian({0}, {-1}), std::invalid_argument);
  EXPECT_THROW(DensitySpec::uniform_box({1}, {0}), std::invalid_argument);
  EXPECT_THROW(sample_iid(DensitySpec::standard_gaussian(1), 0, 1), std::invalid_argument);
}

TEST(Moments, AnalyticAgainstLargeSample) {
  const std::vector<DensitySpec> ps = {
      DensitySpec::gaussian({0.3}, {2.0}), DensitySpec::uniform_box({-1}, {2}),
      DensitySpec::mixture({{{-1.0}, {0.5}}, {{2.0}, {1.0}}}, {0.3, 0.7})};
  const std::vector<TestFunction> fs = {TestFunction::coordinate(0), TestFunction::coordinate_square(0),
                                        TestFunction::cosine(0, 1.3), TestFunction::constant(2.0)};
  for (const auto& p : ps)
    for (const auto& f : fs) {
      const auto m = analytic_moments(p, f);
      const double mc = control_sample_mean(p, f, 200000, 5);
      EXPECT_NEAR(mc, m.mean, 5.0 * std::sqrt(m.variance / 200000) + 1e-12);
    }
}

TEST(Concentration, ConstantPhiNeverDeviates) {
  const auto ens = make_ensemble(DensitySpec::standard_gaussian(1), 50, 100, 3);
  EXPECT_EQ(chaos_concentration(ens, 4.0, TestFunction::constant(4.0), 0.1).fraction, 0.0);
}

TEST(Concentration, ChebyshevGaussianMean) {
  const auto ens = make_ensemble(DensitySpec::standard_gaussian(1), 100, 1000, 9);
  const auto r = chaos_concentration(ens, 0.0, TestFunction::coordinate(0), 0.5);
  EXPECT_LE(r.fraction, chebyshev_ceiling(1.0, 100, 0.5, 1000));
  EXPECT_NEAR(chebyshev_ceiling(1.0, 100, 0.5, 1000, 0.0), 0.04, 1e-15);
}

TEST(Concentration, SingleParticleMatchesDirectMonteCarlo) {
  const auto p = DensitySpec::standard_gaussian(1);
  const auto ens = make_ensemble(p, 1, 4000, 12);
  const double frac = chaos_concentration(ens, 0.0, TestFunction::coordinate(0), 1.0).fraction;
  // P(|Z| >= 1) for a standard normal
  const double exact = std::erfc(1.0 / std::sqrt(2.0));
  EXPECT_NEAR(frac, exact, 3.0 * std::sqrt(exact * (1 - exact) / 4000));
}

TEST(Concentration, ThreadsDoNotChangeEnsemble) {
  const auto a = make_ensemble(DensitySpec::standard_gaussian(2), 10, 30, 77, 1);
  const auto b = make_ensemble(DensitySpec::standard_gaussian(2), 10, 30, 77, 4);
  for (std::size_t r = 0; r < 30; ++r) EXPECT_EQ(a.runs[r].coords, b.runs[r].coords);
  EXPECT_EQ(a.seeds[3], rng::derive_seed(77, 3));
}

TEST(SecondMoment, ConstantAndTwoParticleIdentity) {
  const auto ens = make_ensemble(DensitySpec::standard_gaussian(1), 7, 20, 4);
  const auto one = second_moment_identity(ens, TestFunction::constant(1.0));
  EXPECT_DOUBLE_EQ(one.lhs, 1.0);
  EXPECT_DOUBLE_EQ(one.rhs, 1.0);

  Ensemble two;
  two.runs.push_back(Configuration::uniform(1, {0.3, -1.7}));
  const auto r = second_moment_identity(two, TestFunction::cosine(0, 2.0));
  const double a = std::cos(0.6), b = std::cos(-3.4);
  EXPECT_NEAR(r.lhs, 0.25 * (a + b) * (a + b), 1e-15);
  EXPECT_NEAR(r.rhs, 0.5 * 0.5 * (a * a + b * b) + 0.5 * a * b, 1e-15);
}

TEST(SecondMoment, GaussianSampleMeanVariance) {
  for (std::size_t n : {5u, 20u}) {
    const auto ens = make_ensemble(DensitySpec::standard_gaussian(1), n, 4000, 100 + n);
    const auto r = second_moment_identity(ens, TestFunction::coordinate(0));
    EXPECT_LE(r.max_run_defect, 1e-12);
    EXPECT_NEAR(r.lhs, 1.0 / double(n), 4.0 * std::sqrt(2.0 / 4000) / double(n));
  }
}

TEST(TensorMarginal, Coefficients) {
  EXPECT_DOUBLE_EQ(injective_fraction(5, 1), 1.0);
  EXPECT_NEAR(injective_fraction(3, 2), 2.0 / 3.0, 1e-15);
  EXPECT_TRUE(remainder_mass_bound_holds(3, 2));
  for (std::size_t n = 1; n <= 10000; ++n)
    for (std::size_t j = 1; j <= std::min<std::size_t>(4, n); ++j) ASSERT_TRUE(remainder_mass_bound_holds(n, j));
}

TEST(TensorMarginal, FirstOrderIsExact) {
  const auto ens = make_ensemble(DensitySpec::standard_gaussian(1), 6, 10, 8);
  const auto r = empirical_tensor_vs_marginal(ens, TestFunction::coordinate(0), 1);
  EXPECT_EQ(r.coefficient, 1.0);
  EXPECT_EQ(r.remainder_bound, 0.0);
  EXPECT_NEAR(r.tensor, r.marginal, 1e-15);
}

TEST(TensorMarginal, NonInjectivePartCountedExactly) {
  const auto phi = TestFunction::cosine(0, 3.0);
  for (std::size_t j : {2u, 3u, 4u}) {
    const auto ens = make_ensemble(DensitySpec::standard_gaussian(1), 8, 25, 90 + j);
    const auto r = empirical_tensor_vs_marginal(ens, phi, j);
    EXPECT_LE(r.max_noninjective, 1.0 - r.coefficient + 1e-14);
    EXPECT_LE(r.max_decomposition_gap, r.remainder_bound + 1e-12);
  }
  const auto big = make_ensemble(DensitySpec::standard_gaussian(1), 13, 1, 1);
  EXPECT_THROW(empirical_tensor_vs_marginal(big, phi, 2), std::invalid_argument);
}

TEST(RateFit, ExactPowerLaw) {
  const auto f = fit_rate({10, 20, 40, 80}, {1.0, 0.5, 0.25, 0.125});
  EXPECT_NEAR(f.slope, -1.0, 1e-14);
  EXPECT_NEAR(f.half_width, 0.0, 1e-7);
  EXPECT_THROW(fit_rate({10}, {1}), std::invalid_argument);
  EXPECT_THROW(fit_rate({10, 10, 20}, {1, 2, 3}), std::invalid_argument);
  EXPECT_THROW(fit_rate({10, 20, 30}, {1, 0, 3}), std::invalid_argument);
}

TEST(Dobrushin, IdenticalCloudsAndZeroTime) {
  const auto p = DensitySpec::standard_gaussian(2);
  const auto k = KernelSpec::gaussian_odd(2);
  // same density and a master seed whose even/odd streams differ: W1_in > 0
  const auto rows0 = dobrushin_experiment(k, p, p, 16, 0.0, 3, 5);
  for (const auto& r : rows0) {
    EXPECT_EQ(r.w1_t, r.w1_in);
    EXPECT_EQ(r.bound, r.w1_in);
    EXPECT_TRUE(r.pass);
  }
  const auto rows = dobrushin_experiment(k, p, DensitySpec::gaussian({0.5, 0}, {1, 1}), 32, 1.0, 5, 6);
  for (const auto& r : rows) EXPECT_TRUE(r.pass) << r.w1_t << " " << r.bound;
}

TEST(Dobrushin, IdenticalInitialCloudsStayTogether) {
  const auto k = KernelSpec::gaussian_odd(2);
  const auto c = sample_iid(DensitySpec::standard_gaussian(2), 20, 1);
  const auto a = simulate_nbody(k, c, 1.0), b = simulate_nbody(k, c, 1.0);
  EXPECT_EQ(mk_distance(pushforward(a, a.states.size() - 1), pushforward(b, b.states.size() - 1), 1).distance, 0.0);
}

TEST(Rate, ZeroTimeIsSamplingErrorAndRepsShrinkError) {
  const auto k = KernelSpec::gaussian_odd(1);
  const auto p = DensitySpec::standard_gaussian(1);
  const auto a = meanfield_rate_experiment(k, p, {16, 32, 64}, 0.0, 50, 1024, 3);
  const auto b = meanfield_rate_experiment(k, p, {16, 32, 64}, 0.0, 200, 1024, 3);
  EXPECT_LT(a.fit.slope, 0.0);
  for (std::size_t i = 0; i < 3; ++i) {
    const double ratio = a.summaries[i].std_error / b.summaries[i].std_error;
    EXPECT_GT(ratio, 2.0 * 0.7);
    EXPECT_LT(ratio, 2.0 * 1.3);
  }
  EXPECT_THROW(meanfield_rate_experiment(k, p, {16, 32, 64}, 0.0, 5, 64, 3), std::invalid_argument);
}

TEST(Hk, SingleSizeIsRejectedAndUniformSquareDecays) {
  EXPECT_THROW(hk_rate_experiment(DensitySpec::standard_gaussian(1), {64}, 10, 1), std::invalid_argument);
  const auto r = hk_rate_experiment(DensitySpec::uniform_box({0, 0}, {1, 1}), {16, 32, 64}, 20, 4);
  EXPECT_LE(r.fit.slope, -2.0 / 6.0 + 0.1);
}
