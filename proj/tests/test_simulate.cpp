#include <specgd/oracles.hpp>
#include <specgd/simulate.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

using namespace specgd;

namespace {
// Averaged scalar recursion theta_s = theta_{s-1} + step (1 - x theta_{s-1});
// its average after t steps is q_t(x).
long double scalar_filter(std::size_t t, double step, double x) {
  long double theta = 0.0L, sum = 0.0L;
  for (std::size_t s = 0; s < t; ++s) {
    sum += theta;
    theta += static_cast<long double>(step) * (1.0L - static_cast<long double>(x) * theta);
  }
  return sum / static_cast<long double>(t);
}

Dataset small_data(const SpectralModel& m, const TorusBasis& b, std::size_t n, double sigma, std::uint64_t seed) {
  const FunctionCoeffs u = make_target(m.spec(), 0.05, 1.0);
  return sample_dataset(m, b, u, n, NoiseModel::gaussian(sigma), seed);
}
}  // namespace

TEST(Filter, MatchesScalarRecursion) {
  const double step = 0.7;
  for (std::size_t t : {1u, 2u, 3u, 10u, 100u, 1000u}) {
    for (double u : {0.0, 1e-12, 1e-6, 1e-3, 0.05, 0.2, 0.5, 0.9, 1.0}) {
      const double x = u / step;
      const long double ref = scalar_filter(t, step, x);
      const double q = filter_gd(t, step, x);
      EXPECT_NEAR(q, static_cast<double>(ref), 1e-12 * std::abs(static_cast<double>(ref)) + 1e-300)
          << "t=" << t << " u=" << u;
      EXPECT_NEAR(residual_gd(t, step, x), static_cast<double>(1.0L - static_cast<long double>(x) * ref), 1e-12);
    }
  }
}

TEST(Filter, SpecialValues) {
  EXPECT_DOUBLE_EQ(filter_gd(5, 0.5, 0.0), 0.5 * 4.0 / 2.0);
  EXPECT_NEAR(filter_gd(4, 0.5, 2.0), (1.0 - 0.25) / 2.0, 1e-15);
  EXPECT_DOUBLE_EQ(residual_gd(7, 0.3, 0.0), 1.0);
  EXPECT_THROW(filter_gd(0, 1.0, 0.5), ConfigError);
  EXPECT_THROW(filter_gd(3, 1.0, 1.5), StabilityError);
  EXPECT_THROW(residual_gd(3, -1.0, 0.5), ConfigError);
}

TEST(Filter, ShrinkageIsMonotoneInT) {
  for (double u : {1e-4, 0.01, 0.3, 1.0}) {
    double prev = 0.0;
    for (std::size_t t = 1; t <= 300; ++t) {
      const double s = 1.0 - residual_gd(t, 1.0, u);
      EXPECT_GE(s, prev - 1e-15);
      EXPECT_LE(s, 1.0 + 1e-15);
      prev = s;
    }
  }
}

TEST(Dataset, DeterministicAndNoiselessObservations) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, -1.0, -0.5, 1.0, 16);
  const SpectralModel m(s);
  const TorusBasis b(1, 16);
  const Dataset a = small_data(m, b, 50, 0.3, 9), c = small_data(m, b, 50, 0.3, 9), d = small_data(m, b, 50, 0.3, 10);
  EXPECT_EQ(a.xs, c.xs);
  EXPECT_EQ(a.ys, c.ys);
  EXPECT_NE(a.xs, d.xs);

  const Dataset clean = small_data(m, b, 20, 0.0, 3);
  const FunctionCoeffs Au = apply_operator(make_target(s, 0.05, 1.0), Operator::a(), m);
  for (std::size_t j = 0; j < 20; ++j)
    EXPECT_NEAR(clean.ys[static_cast<Eigen::Index>(j)], eval_function(Au, clean.point(j), b), 1e-12);
}

TEST(Dataset, CsvRoundTripIsExact) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, 0, 0, 1.0, 8);
  s.validate();
  const SpectralModel m(s);
  const TorusBasis b(2, 8);
  SpectrumSpec s2 = s;
  s2.dimension = 2;
  const Dataset a = sample_dataset(SpectralModel(s2), b, make_target(s2, 0.05, 1.0), 30, NoiseModel::gaussian(0.2), 4);
  std::stringstream ss;
  write_dataset_csv(ss, a);
  const Dataset r = read_dataset_csv(ss);
  EXPECT_EQ(r.n, a.n);
  EXPECT_EQ(r.dimension, 2);
  EXPECT_EQ(r.seed, a.seed);
  EXPECT_EQ(r.xs, a.xs);
  EXPECT_EQ(r.ys, a.ys);
}

TEST(EmpiricalOperator, GramAndRadiusMatchDirectComputation) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, -1.0, -0.5, 1.0, 12);
  const SpectralModel m(s);
  const TorusBasis b(1, 12);
  const Dataset data = small_data(m, b, 80, 0.3, 1);
  const EmpiricalOperator op(data, m, b);
  Eigen::MatrixXd E(80, 12);
  for (std::size_t j = 0; j < 80; ++j)
    for (std::size_t i = 0; i < 12; ++i) E(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = b.eval(i, data.point(j));
  const Eigen::MatrixXd G = E.transpose() * E / 80.0;
  EXPECT_LT((op.gram() - G).cwiseAbs().maxCoeff(), 1e-13);
  const Eigen::VectorXd d = m.population_diagonal().cwiseSqrt();
  const Eigen::MatrixXd S = d.asDiagonal() * G * d.asDiagonal();
  const double rho = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(S).eigenvalues().maxCoeff();
  EXPECT_NEAR(op.spectral_radius(), rho, 1e-9 * rho);
  const Eigen::VectorXd th = Eigen::VectorXd::LinSpaced(12, -1.0, 1.0);
  EXPECT_LT((op.apply(th) - op.dense() * th).cwiseAbs().maxCoeff(), 1e-13);
}

TEST(GdRun, MatchesEntrywiseOracle) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, -1.0, -0.5, 1.0, 8);
  const SpectralModel m(s);
  const TorusBasis b(1, 8);
  const Dataset data = small_data(m, b, 40, 0.3, 2);
  const EmpiricalOperator op(data, m, b);
  const GDConfig cfg = GDConfig::make(op.default_step(), 150, 1, true, op, true);
  const Trajectory tr = gd_run(op, m, cfg, make_target(s, 0.05, 1.0), {0.0, 0.5});
  const auto ref = oracle::dense_gd(data, m, b, cfg.step, 150);
  ASSERT_EQ(tr.iterates.size(), 151u);
  for (std::size_t t = 0; t <= 150; ++t)
    for (std::size_t i = 0; i < 8; ++i) {
      EXPECT_NEAR(tr.iterates[t][static_cast<Eigen::Index>(i)], ref.theta[t][i], 1e-12);
      EXPECT_NEAR(tr.averaged_iterates[t][static_cast<Eigen::Index>(i)], ref.averaged[t][i], 1e-12);
    }
}

TEST(GdRun, RecordsAndCsv) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, 0, 0, 1.0, 8);
  const SpectralModel m(s);
  const TorusBasis b(1, 8);
  const Dataset data = small_data(m, b, 40, 0.1, 2);
  const EmpiricalOperator op(data, m, b);
  const Trajectory tr = gd_run(op, m, GDConfig::make(op.default_step(), 25, 10, true, op), make_target(s, 0.05, 1.0), {0.0});
  ASSERT_EQ(tr.records.size(), 4u);  // 0, 10, 20, 25
  EXPECT_EQ(tr.records.back().t, 25u);
  std::ostringstream os;
  tr.write_csv(os);
  EXPECT_EQ(os.str().rfind("t,gamma_eval,error_sq,averaged_flag\n", 0), 0u);
}

TEST(GdRun, StabilityAndDivergenceErrors) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, 0, 0, 1.0, 8);
  const SpectralModel m(s);
  const TorusBasis b(1, 8);
  const Dataset data = small_data(m, b, 40, 0.1, 2);
  const EmpiricalOperator op(data, m, b);
  EXPECT_THROW(GDConfig::make(1.01 / op.spectral_radius(), 10, 1, true, op), StabilityError);
  // a target far beyond the guard forces the iterates past it
  const FunctionCoeffs huge = make_target(s, 0.05, 1e14);
  const Dataset big = sample_dataset(m, b, huge, 40, NoiseModel::gaussian(0.0), 2);
  const EmpiricalOperator op2(big, m, b);
  try {
    gd_run(op2, m, GDConfig::make(op2.default_step(), 200, 1, true, op2), huge, {0.0});
    FAIL() << "expected divergence";
  } catch (const DivergenceError& e) {
    EXPECT_GE(e.iteration(), 1u);
  }
}

TEST(Population, ClosedFormMatchesRecursion) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, -1.0, -0.5, 1.0, 64);
  const SpectralModel m(s);
  const FunctionCoeffs u = make_target(s, 0.05, 1.0);
  const double step = 0.9 / m.population_diagonal().maxCoeff();
  const auto rec = oracle::population_recursion(m, u, step, 1000);
  double prev = std::numeric_limits<double>::infinity();
  for (std::size_t t = 1; t <= 1000; ++t) {
    const PopulationResult r = population_gd(m, u, t, step, {0.0});
    EXPECT_LT((r.averaged.coeffs - rec[t]).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LE(r.errors[0], prev * (1.0 + 1e-14));  // noiseless error never increases
    prev = r.errors[0];
  }
  EXPECT_THROW(population_gd(m, u, 3, 2.0 / m.population_diagonal().maxCoeff(), {}), StabilityError);
}

TEST(Ridge, SolvesRegularizedSystem) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, 0, 0, 1.0, 10);
  const SpectralModel m(s);
  const TorusBasis b(1, 10);
  const EmpiricalOperator op(small_data(m, b, 60, 0.2, 5), m, b);
  const FunctionCoeffs th = ridge_oracle(op, 1e-3);
  const Eigen::VectorXd res = op.apply(th.coeffs) + 1e-3 * th.coeffs - op.rhs();
  EXPECT_LT(res.cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_THROW(ridge_oracle(op, 0.0), ConfigError);
}

TEST(Ridge, TracksAveragedGdAtMatchedRegularization) {
  const SpectrumSpec s = SpectrumSpec::make(2.0, 0, 0, 1.0, 32);
  const SpectralModel m(s);
  const TorusBasis b(1, 32);
  const FunctionCoeffs u = make_target(s, 0.05, 1.0);
  const EmpiricalOperator op(sample_dataset(m, b, u, 2000, NoiseModel::gaussian(0.0), 11), m, b);
  const double step = op.default_step();
  const Trajectory tr = gd_run(op, m, GDConfig::make(step, 1024, 1, true, op), u, {0.0});
  const Eigen::VectorXd w = power_weights(m, 0.0);
  for (std::size_t t : {4u, 16u, 64u, 256u, 1024u}) {
    const FunctionCoeffs r = ridge_oracle(op, 1.0 / (step * static_cast<double>(t)));
    const double ratio = power_distance_sq(r.coeffs, u.coeffs, w) / tr.records[t].err_sq_average[0];
    EXPECT_GT(ratio, 0.2) << "t=" << t;
    EXPECT_LT(ratio, 5.0) << "t=" << t;
  }
}
