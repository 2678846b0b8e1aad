#include <specgd/theory_bounds.hpp>

#include <gtest/gtest.h>

#include <cmath>

using namespace specgd;

namespace {
SpectrumSpec kernel_spec() {
  SpectrumSpec s = SpectrumSpec::make(2.0, 0, 0, 1.0, 512);
  s.mu = 0.5;
  return s;
}
}  // namespace

TEST(Regime, ThresholdsAndClassification) {
  SpectrumSpec s = kernel_spec();
  const auto th = regime_thresholds(s);
  EXPECT_DOUBLE_EQ(th.lower, 0.5);
  EXPECT_DOUBLE_EQ(th.upper, 1.0);
  EXPECT_EQ(regime_classify(s), Regime::ConstLR);
  s.beta = 0.3;
  EXPECT_EQ(regime_classify(s), Regime::SubOptimal);
  s.beta = 1.5;
  EXPECT_EQ(regime_classify(s), Regime::SmallLR_nIter);
  s.beta = 0.5;  // boundary ties go to the constant-step regime
  EXPECT_EQ(regime_classify(s), Regime::ConstLR);
}

TEST(Regime, MonotoneInBetaOnAGrid) {
  for (double alpha = 1.2; alpha < 8.0; alpha += 0.2) {
    int prev = -1;
    for (double beta = 0.02; beta < 4.0; beta += 0.02) {
      SpectrumSpec s = SpectrumSpec::make(alpha, -0.3, -0.1, beta);
      const Regime r = regime_classify(s);
      const int rank = r == Regime::SubOptimal ? 0 : r == Regime::ConstLR ? 1 : 2;
      EXPECT_GE(rank, prev) << alpha << ' ' << beta;
      prev = rank;
    }
  }
}

TEST(Rates, ExponentsForReferenceSpecs) {
  const SpectrumSpec s = kernel_spec();
  EXPECT_NEAR(rate_exponent(s, 0.0, BoundKind::Upper), 2.0 / 3.0, 1e-15);
  EXPECT_NEAR(rate_exponent(s, 0.5, BoundKind::Upper), 1.0 / 3.0, 1e-15);
  EXPECT_DOUBLE_EQ(rate_exponent(s, 0.0, BoundKind::Lower), rate_exponent(s, 0.0, BoundKind::Upper));
  SpectrumSpec inv = SpectrumSpec::make(2.0, -1.0, -0.5, 1.0);
  inv.mu = 0.5;
  EXPECT_NEAR(rate_exponent(inv, 0.0, BoundKind::Upper), 1.0, 1e-15);
  EXPECT_THROW(rate_exponent(s, 1.0, BoundKind::Upper), ConfigError);

  SpectrumSpec rough = kernel_spec();
  rough.beta = 0.3;  // below mu: the lower bound uses mu, the upper bound the suboptimal rate
  EXPECT_NEAR(rate_exponent(rough, 0.0, BoundKind::Lower), 0.5 * 2.0 / 2.0, 1e-15);
  EXPECT_NEAR(rate_exponent(rough, 0.0, BoundKind::Upper), 0.3 * 2.0 / 1.0, 1e-15);
}

TEST(Schedule, ConstantStepUsesExactPowers) {
  const SpectrumSpec s = kernel_spec();
  const StoppingPlan p = stopping_schedule(s, 4096, {0.0, 0.5});
  EXPECT_EQ(p.regime, Regime::ConstLR);
  EXPECT_EQ(p.iterations, 256u);
  EXPECT_DOUBLE_EQ(p.gamma_factor, 1.0);
  ASSERT_EQ(p.exponents.size(), 2u);
  EXPECT_NEAR(p.exponents[1], 1.0 / 3.0, 1e-15);
  EXPECT_EQ(stopping_schedule(s, 1000).iterations, 100u);
  EXPECT_EQ(stopping_schedule(s, 200).iterations, static_cast<std::size_t>(std::ceil(std::pow(200.0, 2.0 / 3.0))));
  EXPECT_THROW(stopping_schedule(s, 1), ConfigError);
}

TEST(Schedule, SmallStepRegimeRunsNIterations) {
  SpectrumSpec s = kernel_spec();
  s.beta = 2.0;
  const StoppingPlan p = stopping_schedule(s, 1000);
  EXPECT_EQ(p.regime, Regime::SmallLR_nIter);
  EXPECT_EQ(p.iterations, 1000u);
  EXPECT_NEAR(p.gamma_factor, std::pow(1000.0, 2.0 / 5.0 - 1.0), 1e-15);
}

TEST(SpectralSums, TailIntegralMatchesBruteForce) {
  const double k = 2.5;
  double brute = 0.0;
  for (int i = 101; i <= 3000000; ++i) brute += std::pow(static_cast<double>(i), -k);
  const double est = detail::tail_integral([&](double i) { return std::pow(i, -k); }, 100, k);
  EXPECT_NEAR(est, brute, 1e-4 * brute);
  EXPECT_TRUE(std::isinf(detail::tail_integral([](double i) { return 1.0 / i; }, 10, 1.0)));
}

TEST(SpectralSums, EffectiveDimensionAndDofMatchLongSums) {
  SpectrumSpec s = SpectrumSpec::make(3.0, -0.5, -0.25, 1.0, 256);
  SpectrumSpec big = s;
  big.n_trunc = 200000;
  for (double lam : {1e-1, 1e-3, 1e-5}) {
    double nd = 0.0, dof = 0.0;
    for (std::size_t i = 1; i <= big.n_trunc; ++i) {
      const auto m = eigenvalues(big, i);
      nd += m.lambda * m.a2 * m.a2 / (m.lambda * m.a1 + lam);
      dof += m.lambda / (m.lambda * m.a1 + lam);
    }
    EXPECT_NEAR(effective_dimension(s, lam), nd, 1e-4 * nd) << lam;
    EXPECT_NEAR(dof_trace(s, lam), dof, 1e-4 * dof) << lam;
  }
}

TEST(SpectralSums, BiasGrowsWithRegularization) {
  const SpectrumSpec s = kernel_spec();
  const FunctionCoeffs u = make_target(s, 0.05, 1.0);
  double prev = 0.0;
  for (double lam = 1e-6; lam <= 1.0; lam *= 3.0) {
    const double b = bias_exact(s, u, lam, 0.0).value;
    EXPECT_GT(b, prev);
    prev = b;
  }
  EXPECT_NEAR(bias_exact(s, u, 0.0, 0.0).value, 0.0, 0.0);
}

TEST(BoundCheck, AllQuantitiesPassForKernelSpec) {
  const SpectrumSpec s = kernel_spec();
  const auto grid = log_grid(1e-6, 1.0, 40);
  for (Quantity q : all_quantities()) {
    const BoundCheckReport r = bound_check(q, s, grid);
    EXPECT_TRUE(r.pass) << r.quantity << " slope " << r.trend_slope;
  }
}

TEST(BoundCheck, CorruptedEnvelopeFails) {
  const SpectrumSpec s = kernel_spec();
  const auto grid = log_grid(1e-6, 1.0, 40);
  BoundCheckOptions opt;
  opt.exponent_shift = 0.2;
  for (Quantity q : all_quantities()) EXPECT_FALSE(bound_check(q, s, grid, opt).pass) << quantity_name(q);
}

TEST(BoundCheck, RejectsThinGrids) {
  const SpectrumSpec s = kernel_spec();
  EXPECT_THROW(bound_check(Quantity::Dof, s, log_grid(1e-6, 1.0, 10)), ConfigError);
  EXPECT_THROW(bound_check(Quantity::Dof, s, log_grid(1e-3, 1.0, 40)), ConfigError);
  EXPECT_THROW(bound_check(Quantity::Dof, s, {}), ConfigError);
}

TEST(BoundCheck, CsvAndVerdict) {
  const auto r = bound_check(Quantity::NInf1, kernel_spec(), log_grid(1e-6, 1.0, 20));
  std::ostringstream os;
  r.write_csv(os);
  EXPECT_EQ(os.str().rfind("quantity,lambda,value,envelope,ratio\n", 0), 0u);
  EXPECT_EQ(r.verdict()["pass"], r.pass);
}

TEST(FilterSuite, NoViolationsOnFullGrid) {
  for (double step : {1.0, 0.37}) {
    const FilterSuiteResult r = filter_bound_suite(step, 1024, {0.0, 0.25, 0.5, 0.75, 1.0}, 120);
    EXPECT_TRUE(r.pass());
    EXPECT_EQ(r.residual_violations, 0u);
    EXPECT_EQ(r.filter_violations, 0u);
    EXPECT_LE(r.worst_filter_value, 2.0);
  }
}
