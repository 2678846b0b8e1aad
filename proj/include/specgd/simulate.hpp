#pragma once

// Observation model, the stop-gradient averaged gradient descent in L2
// coordinates, its closed-form spectral filter, and a ridge comparator.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "spectral_core.hpp"

namespace specgd {

/// Per-coefficient magnitude beyond which an iterate counts as diverged.
inline constexpr double kIterateGuard = 1e12;

/// Gaussian observation noise. L is the Bernstein scale of the moment
/// condition; a Gaussian with std sigma satisfies it with L = sigma.
struct NoiseModel {
  double sigma = 0.0;
  double L = 0.0;

  static NoiseModel gaussian(double sigma) {
    if (!(sigma >= 0.0)) throw ConfigError("NoiseModel: sigma must be nonnegative");
    return {sigma, sigma};
  }
};

struct Dataset {
  int dimension = 1;
  std::size_t n = 0;
  double sigma = 0.0;
  std::uint64_t seed = 0;
  std::vector<double> xs;  // row-major n x dimension
  Eigen::VectorXd ys;

  std::span<const double> point(std::size_t j) const {
    return {xs.data() + j * static_cast<std::size_t>(dimension), static_cast<std::size_t>(dimension)};
  }
};

/// Draw n uniform points on the torus and observe y = (A u*)(x) + eta.
/// Points and noise come from independent counter streams of `seed`.
inline Dataset sample_dataset(const SpectralModel& model, const TorusBasis& basis,
                              const FunctionCoeffs& target, std::size_t n, const NoiseModel& noise,
                              std::uint64_t seed) {
  if (n == 0) throw ConfigError("sample_dataset: n must be positive");
  if (target.size() > model.size() || target.size() > basis.size())
    throw ConfigError("sample_dataset: target exceeds truncation");
  const int d = basis.dimension();
  const FunctionCoeffs f = apply_operator(target, Operator::a(), model);

  Dataset data;
  data.dimension = d;
  data.n = n;
  data.sigma = noise.sigma;
  data.seed = seed;
  data.xs.resize(n * static_cast<std::size_t>(d));
  data.ys.resize(static_cast<Eigen::Index>(n));

  const CounterRng loc(seed, 1);
  const CounterRng eps(seed, 2);
  std::vector<double> row(f.size());
  for (std::size_t j = 0; j < n; ++j) {
    for (int k = 0; k < d; ++k) {
      const std::size_t idx = j * static_cast<std::size_t>(d) + static_cast<std::size_t>(k);
      data.xs[idx] = loc.uniform(idx);  // inverse CDF of U[0,1) is the identity
    }
    basis.eval_all(data.point(j), row);
    double y = 0.0;
    for (std::size_t i = 0; i < row.size(); ++i) y += f[i] * row[i];
    if (noise.sigma > 0.0) y += noise.sigma * eps.normal(j);
    data.ys[static_cast<Eigen::Index>(j)] = y;
  }
  return data;
}

inline Dataset sample_dataset(const SpectrumSpec& spec, const FunctionCoeffs& target, std::size_t n,
                              const NoiseModel& noise, std::uint64_t seed) {
  return sample_dataset(SpectralModel(spec), TorusBasis(spec.dimension, spec.n_trunc), target, n,
                        noise, seed);
}

/// CSV: header line "n,d,sigma,seed", its values, then one row x_1..x_d,y per
/// point. Doubles are written with 17 significant digits, so they read back
/// bit-exactly.
inline void write_dataset_csv(std::ostream& os, const Dataset& data) {
  os << "n,d,sigma,seed\n" << data.n << ',' << data.dimension << ',';
  os << std::setprecision(17) << data.sigma << ',' << data.seed << '\n';
  for (std::size_t j = 0; j < data.n; ++j) {
    for (int k = 0; k < data.dimension; ++k) os << data.point(j)[static_cast<std::size_t>(k)] << ',';
    os << data.ys[static_cast<Eigen::Index>(j)] << '\n';
  }
}

inline Dataset read_dataset_csv(std::istream& is) {
  auto fail = [](const std::string& m) { throw ConfigError("read_dataset_csv: " + m); };
  std::string line;
  if (!std::getline(is, line) || line != "n,d,sigma,seed") fail("missing header");
  if (!std::getline(is, line)) fail("missing header values");
  Dataset data;
  {
    std::istringstream ss(line);
    char c1, c2, c3;
    if (!(ss >> data.n >> c1 >> data.dimension >> c2 >> data.sigma >> c3 >> data.seed)) fail("bad header values");
  }
  if (data.dimension < 1) fail("bad dimension");
  data.xs.resize(data.n * static_cast<std::size_t>(data.dimension));
  data.ys.resize(static_cast<Eigen::Index>(data.n));
  for (std::size_t j = 0; j < data.n; ++j) {
    if (!std::getline(is, line)) fail("truncated body");
    std::istringstream ss(line);
    std::string cell;
    for (int k = 0; k <= data.dimension; ++k) {
      if (!std::getline(ss, cell, ',')) fail("short row");
      const double v = std::stod(cell);
      if (k < data.dimension)
        data.xs[j * static_cast<std::size_t>(data.dimension) + static_cast<std::size_t>(k)] = v;
      else
        data.ys[static_cast<Eigen::Index>(j)] = v;
    }
  }
  return data;
}

/// Empirical operator of the stop-gradient dynamics in L2 coordinates:
///   M = diag(lambda) G diag(a1),  G = E^T E / n,  E_ji = e_i(x_j),
///   b = lambda .* a2 .* (E^T y / n).
/// M is similar to the PSD matrix D^1/2 G D^1/2 with D = diag(lambda a1), so
/// its spectrum is real and nonnegative.
class EmpiricalOperator {
 public:
  EmpiricalOperator(const Dataset& data, const SpectralModel& model, const TorusBasis& basis)
      : lambda_(model.lambda()), a1_(model.a1()) {
    const auto N = static_cast<Eigen::Index>(model.size());
    if (basis.size() < model.size()) throw ConfigError("EmpiricalOperator: basis smaller than model");
    if (basis.dimension() != data.dimension) throw ConfigError("EmpiricalOperator: dimension mismatch");
    const auto n = static_cast<Eigen::Index>(data.n);
    Eigen::MatrixXd E(n, N);
    std::vector<double> row(static_cast<std::size_t>(N));
    for (Eigen::Index j = 0; j < n; ++j) {
      basis.eval_all(data.point(static_cast<std::size_t>(j)), row);
      for (Eigen::Index i = 0; i < N; ++i) E(j, i) = row[static_cast<std::size_t>(i)];
    }
    const double inv_n = 1.0 / static_cast<double>(n);
    gram_ = Eigen::MatrixXd::Zero(N, N);
    gram_.selfadjointView<Eigen::Lower>().rankUpdate(E.transpose(), inv_n);
    gram_.triangularView<Eigen::StrictlyUpper>() = gram_.transpose();
    rhs_ = (E.transpose() * data.ys) * inv_n;
    rhs_.array() *= lambda_.array() * model.a2().array();
    rho_ = estimate_radius();
  }

  Eigen::Index size() const noexcept { return lambda_.size(); }
  const Eigen::MatrixXd& gram() const noexcept { return gram_; }
  const Eigen::VectorXd& rhs() const noexcept { return rhs_; }
  /// Power-iteration estimate of the spectral radius of M.
  double spectral_radius() const noexcept { return rho_; }

  /// M theta.
  Eigen::VectorXd apply(const Eigen::VectorXd& theta) const {
    Eigen::VectorXd v = gram_ * theta.cwiseProduct(a1_);
    return v.cwiseProduct(lambda_);
  }

  Eigen::MatrixXd dense() const { return lambda_.asDiagonal() * gram_ * a1_.asDiagonal(); }

  /// Largest stable step used by default: 0.9 / rho_hat.
  double default_step() const { return 0.9 / rho_; }

 private:
  double estimate_radius() const {
    const Eigen::VectorXd d = lambda_.cwiseProduct(a1_).cwiseSqrt();
    Eigen::VectorXd v = Eigen::VectorXd::Ones(size()).normalized();
    double rayleigh = 0.0;
    for (int it = 0; it < 200; ++it) {
      Eigen::VectorXd w = d.cwiseProduct(gram_ * d.cwiseProduct(v));
      const double next = v.dot(w);
      const double norm = w.norm();
      if (norm == 0.0) return 0.0;
      v = w / norm;
      if (it > 10 && std::abs(next - rayleigh) <= 1e-12 * std::abs(next)) {
        rayleigh = next;
        break;
      }
      rayleigh = next;
    }
    return rayleigh;
  }

  Eigen::VectorXd lambda_;
  Eigen::VectorXd a1_;
  Eigen::MatrixXd gram_;
  Eigen::VectorXd rhs_;
  double rho_ = 0.0;
};

/// Gradient descent settings. `step` is the learning rate.
struct GDConfig {
  double step = 0.0;
  std::size_t t_max = 0;
  std::size_t record_every = 1;
  bool averaging = true;
  bool store_iterates = false;

  /// Validated config; raises StabilityError unless step * rho_hat < 1.
  static GDConfig make(double step, std::size_t t_max, std::size_t record_every, bool averaging,
                       const EmpiricalOperator& op, bool store_iterates = false) {
    GDConfig c{step, t_max, record_every, averaging, store_iterates};
    c.check(op);
    return c;
  }

  void check(const EmpiricalOperator& op) const {
    if (!(step > 0.0)) throw ConfigError("GDConfig: step must be positive");
    if (record_every == 0) throw ConfigError("GDConfig: record_every must be positive");
    if (!(step * op.spectral_radius() < 1.0)) {
      std::ostringstream ss;
      ss << "GDConfig: step " << step << " times spectral radius " << op.spectral_radius() << " is not below 1";
      throw StabilityError(ss.str());
    }
  }
};

struct Trajectory {
  struct Record {
    std::size_t t;
    std::vector<double> err_sq_last;     // ||theta_t - target||_gamma^2 per gamma
    std::vector<double> err_sq_average;  // ||bar theta_t - target||_gamma^2, empty without averaging
  };

  std::vector<double> gammas;
  bool averaging = true;
  std::vector<Record> records;
  std::vector<Eigen::VectorXd> iterates;           // theta_t at record points, if stored
  std::vector<Eigen::VectorXd> averaged_iterates;  // bar theta_t at record points, if stored

  /// Columns t,gamma_eval,error_sq,averaged_flag.
  void write_csv(std::ostream& os) const {
    os << "t,gamma_eval,error_sq,averaged_flag\n" << std::setprecision(17);
    for (const Record& r : records) {
      for (std::size_t g = 0; g < gammas.size(); ++g) {
        os << r.t << ',' << gammas[g] << ',' << r.err_sq_last[g] << ",0\n";
        if (averaging) os << r.t << ',' << gammas[g] << ',' << r.err_sq_average[g] << ",1\n";
      }
    }
  }
};

/// Stop-gradient averaged GD started at theta_0 = 0:
///   theta_t = theta_{t-1} + step (b - M theta_{t-1}),
///   bar theta_t = (1/t) sum_{s=0}^{t-1} theta_s   (bar theta_0 = 0).
/// Errors are exact gamma-norm distances to `target`.
inline Trajectory gd_run(const EmpiricalOperator& op, const SpectralModel& model, const GDConfig& config,
                         const FunctionCoeffs& target, const std::vector<double>& gammas_eval) {
  config.check(op);
  const Eigen::Index N = op.size();
  if (static_cast<std::size_t>(N) != model.size()) throw ConfigError("gd_run: model/operator size mismatch");
  Eigen::VectorXd tgt = Eigen::VectorXd::Zero(N);
  if (target.size() > static_cast<std::size_t>(N)) throw ConfigError("gd_run: target exceeds truncation");
  tgt.head(target.coeffs.size()) = target.coeffs;

  std::vector<Eigen::VectorXd> weights;
  weights.reserve(gammas_eval.size());
  for (double g : gammas_eval) weights.push_back(power_weights(model, g));

  Trajectory traj;
  traj.gammas = gammas_eval;
  traj.averaging = config.averaging;

  Eigen::VectorXd theta = Eigen::VectorXd::Zero(N);
  Eigen::VectorXd running = Eigen::VectorXd::Zero(N);  // sum_{s<t} theta_s
  Eigen::VectorXd avg = Eigen::VectorXd::Zero(N);

  auto record = [&](std::size_t t) {
    Trajectory::Record r{t, {}, {}};
    for (const auto& w : weights) {
      r.err_sq_last.push_back(power_distance_sq(theta, tgt, w));
      if (config.averaging) r.err_sq_average.push_back(power_distance_sq(avg, tgt, w));
    }
    traj.records.push_back(std::move(r));
    if (config.store_iterates) {
      traj.iterates.push_back(theta);
      if (config.averaging) traj.averaged_iterates.push_back(avg);
    }
  };

  record(0);
  for (std::size_t t = 1; t <= config.t_max; ++t) {
    running += theta;
    theta += config.step * (op.rhs() - op.apply(theta));
    if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kIterateGuard)
      throw DivergenceError(t, "gd_run: iterate exceeded overflow guard");
    if (config.averaging) avg = running / static_cast<double>(t);
    if (t % config.record_every == 0 || t == config.t_max) record(t);
  }
  return traj;
}

// ---------------------------------------------------------------------------
// Spectral filter of averaged GD

namespace detail {
inline void check_filter_args(std::size_t t, double step, double x) {
  if (t < 1) throw ConfigError("filter: t must be at least 1");
  if (!(step > 0.0)) throw ConfigError("filter: step must be positive");
  if (!(x >= 0.0)) throw ConfigError("filter: x must be nonnegative");
  if (step * x > 1.0) throw StabilityError("filter: step * x exceeds 1");
}

/// (1 - u)^t - 1 + t u, accurate for small t u.
inline double second_order_remainder(std::size_t t, double u) {
  const double td = static_cast<double>(t);
  if (td * u < 0.1) {
    // binomial series sum_{k>=2} C(t,k) (-u)^k
    double term = td * (td - 1.0) / 2.0 * u * u;
    double sum = 0.0;
    for (std::size_t k = 2; k <= t && term != 0.0; ++k) {
      sum += term;
      term *= -(td - static_cast<double>(k)) / static_cast<double>(k + 1) * u;
      if (std::abs(term) < 1e-18 * std::abs(sum)) break;
    }
    return sum;
  }
  return std::expm1(td * std::log1p(-u)) + td * u;
}
}  // namespace detail

/// r_t(x) = (1 - (1 - step x)^t) / (step t x), with r_t(0) = 1.
inline double residual_gd(std::size_t t, double step, double x) {
  detail::check_filter_args(t, step, x);
  const double u = step * x;
  if (u == 0.0) return 1.0;
  const double td = static_cast<double>(t);
  const double one_minus_pow = u == 1.0 ? 1.0 : -std::expm1(td * std::log1p(-u));
  return one_minus_pow / (td * u);
}

/// q_t(x) = (1/x)(1 - r_t(x)), with q_t(0) = step (t - 1) / 2.
inline double filter_gd(std::size_t t, double step, double x) {
  detail::check_filter_args(t, step, x);
  const double u = step * x;
  const double td = static_cast<double>(t);
  if (u == 0.0) return step * (td - 1.0) / 2.0;
  if (u == 1.0) return (1.0 - 1.0 / td) / x;
  return step * detail::second_order_remainder(t, u) / (td * u * u);
}

struct PopulationResult {
  FunctionCoeffs averaged;
  std::vector<double> errors;  // ||bar theta_t - target||_gamma per gamma
};

/// Noiseless infinite-data averaged iterate, mode-wise:
/// bar theta_i = q_t(x_i) x_i a*_i = (1 - r_t(x_i)) a*_i with x_i = lambda_i a1_i.
inline PopulationResult population_gd(const SpectralModel& model, const FunctionCoeffs& target, std::size_t t,
                                      double step, const std::vector<double>& gammas_eval) {
  const Eigen::VectorXd x = model.population_diagonal();
  if (step * x.maxCoeff() > 1.0) throw StabilityError("population_gd: step * max(lambda a1) exceeds 1");
  if (target.size() > model.size()) throw ConfigError("population_gd: target exceeds truncation");
  Eigen::VectorXd out(target.coeffs.size());
  for (Eigen::Index i = 0; i < out.size(); ++i) {
    // q_t(x) lambda a2 (a1/a2) a* == q_t(x) x a*
    out[i] = filter_gd(t, step, x[i]) * x[i] * target.coeffs[i];
  }
  PopulationResult res{FunctionCoeffs(out), {}};
  for (double g : gammas_eval) {
    const Eigen::VectorXd w = power_weights(model, g).head(out.size());
    res.errors.push_back(norm_from_sum(power_distance_sq(out, target.coeffs, w)).value);
  }
  return res;
}

/// Ridge comparator: solves (M + lam I) theta = b.
inline FunctionCoeffs ridge_oracle(const EmpiricalOperator& op, double lam) {
  if (!(lam > 0.0)) throw ConfigError("ridge_oracle: lam must be positive");
  Eigen::MatrixXd A = op.dense();
  A.diagonal().array() += lam;
  Eigen::FullPivLU<Eigen::MatrixXd> lu(A);
  if (!lu.isInvertible()) throw SingularError("ridge_oracle: singular system");
  return FunctionCoeffs(lu.solve(op.rhs()));
}

}  // namespace specgd
