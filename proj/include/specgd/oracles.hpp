#pragma once

// Reference implementations used to cross-check the fast paths. They avoid
// the Gram matrix, Eigen products and the closed-form filter on purpose.

#include <cstddef>
#include <vector>

#include "error.hpp"
#include "simulate.hpp"
#include "spectral_core.hpp"

namespace specgd::oracle {

struct DenseIterates {
  std::vector<std::vector<double>> theta;     // theta_0 .. theta_T
  std::vector<std::vector<double>> averaged;  // bar theta_0 .. bar theta_T
};

/// Stop-gradient GD written out entry by entry from the data:
///   theta_t,i += step * lambda_i / n * sum_j e_i(x_j) (a2_i y_j - sum_k theta_k a1_k e_k(x_j)).
/// Averages use the running form bar theta_t = ((t-1) bar theta_{t-1} + theta_{t-1}) / t.
inline DenseIterates dense_gd(const Dataset& data, const SpectralModel& model, const TorusBasis& basis, double step,
                              std::size_t t_max) {
  const std::size_t N = model.size();
  const std::size_t n = data.n;
  std::vector<std::vector<double>> e(n, std::vector<double>(N));
  for (std::size_t j = 0; j < n; ++j)
    for (std::size_t i = 0; i < N; ++i) e[j][i] = basis.eval(i, data.point(j));

  DenseIterates out;
  std::vector<double> theta(N, 0.0), avg(N, 0.0);
  out.theta.push_back(theta);
  out.averaged.push_back(avg);
  for (std::size_t t = 1; t <= t_max; ++t) {
    std::vector<double> next(theta);
    for (std::size_t i = 0; i < N; ++i) {
      double g = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        double pred = 0.0;
        for (std::size_t k = 0; k < N; ++k) pred += theta[k] * model.a1()[static_cast<Eigen::Index>(k)] * e[j][k];
        g += e[j][i] * (model.a2()[static_cast<Eigen::Index>(i)] * data.ys[static_cast<Eigen::Index>(j)] - pred);
      }
      next[i] += step * model.lambda()[static_cast<Eigen::Index>(i)] * g / static_cast<double>(n);
    }
    const double td = static_cast<double>(t);
    for (std::size_t i = 0; i < N; ++i) avg[i] = ((td - 1.0) * avg[i] + theta[i]) / td;
    theta = std::move(next);
    out.theta.push_back(theta);
    out.averaged.push_back(avg);
  }
  return out;
}

/// Averaged GD on the diagonal population operator, iterated mode by mode:
/// theta_t,i = theta_{t-1,i} + step x_i (a*_i - theta_{t-1,i}), x_i = lambda_i a1_i.
/// Returns bar theta_t for t = 0..t_max.
inline std::vector<Eigen::VectorXd> population_recursion(const SpectralModel& model, const FunctionCoeffs& target,
                                                         double step, std::size_t t_max) {
  const Eigen::Index N = target.coeffs.size();
  if (static_cast<std::size_t>(N) > model.size()) throw ConfigError("population_recursion: target exceeds truncation");
  std::vector<Eigen::VectorXd> out;
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(N), sum = Eigen::VectorXd::Zero(N);
  out.push_back(sum);
  for (std::size_t t = 1; t <= t_max; ++t) {
    sum += theta;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double x = model.lambda()[i] * model.a1()[i];
      theta[i] += step * x * (target.coeffs[i] - theta[i]);
    }
    out.push_back(sum / static_cast<double>(t));
  }
  return out;
}

}  // namespace specgd::oracle
