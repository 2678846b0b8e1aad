#pragma once

// -Laplace(u) + u = f on the torus: DRM, PINN and Sobolev-PINN objectives as
// operator symbols, the integration-by-parts form of the gradient-residual
// loss, and the iterations-to-optimum experiment.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "error.hpp"
#include "fit.hpp"
#include "parallel.hpp"
#include "random.hpp"
#include "simulate.hpp"
#include "spectral_core.hpp"
#include "theory_bounds.hpp"

namespace specgd {

struct PdeOperatorSet {
  std::string name;
  Eigen::VectorXd a1;
  Eigen::VectorXd a2;
  double equivalent_p = 0.0;
  double equivalent_q = 0.0;
};

/// Log-log slope of a symbol against the 1-based mode index, negated into
/// the i^-p convention. The constant mode is excluded.
inline double fit_symbol_exponent(const Eigen::VectorXd& symbol) {
  if (symbol.size() < 4) throw ConfigError("fit_symbol_exponent: need at least 4 modes");
  std::vector<std::pair<double, double>> pts;
  for (Eigen::Index i = 1; i < symbol.size(); ++i) pts.emplace_back(static_cast<double>(i + 1), symbol[i]);
  bool constant = true;
  for (const auto& pt : pts) constant = constant && pt.second == pts.front().second;
  if (constant) return 0.0;
  return -fit_slope(pts).slope;
}

namespace detail {
inline Eigen::VectorXd elliptic_symbol(const TorusBasis& basis) {
  Eigen::VectorXd s(static_cast<Eigen::Index>(basis.size()));
  for (std::size_t i = 0; i < basis.size(); ++i) s[static_cast<Eigen::Index>(i)] = 1.0 + basis.omega_sq(i);
  return s;
}

inline PdeOperatorSet finish(std::string name, Eigen::VectorXd a1, Eigen::VectorXd a2) {
  PdeOperatorSet set{std::move(name), std::move(a1), std::move(a2), 0.0, 0.0};
  set.equivalent_p = fit_symbol_exponent(set.a1);
  set.equivalent_q = fit_symbol_exponent(set.a2);
  return set;
}
}  // namespace detail

/// Variational form: a1 = 1 + omega^2, a2 = 1.
inline PdeOperatorSet drm_operators(int d, const TorusBasis& basis) {
  if (basis.dimension() != d) throw ConfigError("drm_operators: basis dimension mismatch");
  const Eigen::VectorXd s = detail::elliptic_symbol(basis);
  return detail::finish("DRM", s, Eigen::VectorXd::Ones(s.size()));
}

/// Residual form: a1 = (1 + omega^2)^2, a2 = 1 + omega^2.
inline PdeOperatorSet pinn_operators(int d, const TorusBasis& basis) {
  if (basis.dimension() != d) throw ConfigError("pinn_operators: basis dimension mismatch");
  const Eigen::VectorXd s = detail::elliptic_symbol(basis);
  return detail::finish("PINN", s.cwiseProduct(s), s);
}

/// Residual plus weighted gradient-residual: a1 = (omega^2 + w)(1 + omega^2)^2,
/// a2 = (omega^2 + w)(1 + omega^2).
inline PdeOperatorSet sobolev_pinn_operators(int d, const TorusBasis& basis, double weight) {
  if (basis.dimension() != d) throw ConfigError("sobolev_pinn_operators: basis dimension mismatch");
  if (!(weight > 0.0)) throw ConfigError("sobolev_pinn_operators: weight must be positive");
  const Eigen::VectorXd s = detail::elliptic_symbol(basis);
  const Eigen::VectorXd g = (s.array() - 1.0 + weight).matrix();
  return detail::finish("SOBOLEV_PINN", g.cwiseProduct(s).cwiseProduct(s), g.cwiseProduct(s));
}

struct SobolevObjective {
  double direct = 0.0;    // weight ||R||^2 + ||grad R||^2 with R = -Lap u + u - f
  double expanded = 0.0;  // same value with grad f coupling moved onto f by parts
};

/// Both forms of weight * ||R||^2 + ||grad R||^2, evaluated spectrally.
/// Expanded: ||grad Lu||^2 + 2 <Lap(Lu), f> + ||grad f||^2 for the gradient part.
inline SobolevObjective sobolev_objective(const FunctionCoeffs& u, const FunctionCoeffs& f, double weight,
                                          const TorusBasis& basis) {
  if (u.size() != f.size() || u.size() > basis.size()) throw ConfigError("sobolev_objective: size mismatch");
  SobolevObjective out;
  double t_res = 0.0, t_grad_lu = 0.0, t_cross = 0.0, t_grad_f = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double w2 = basis.omega_sq(i);
    const double lu = (1.0 + w2) * u[i];
    const double r = lu - f[i];
    out.direct += (weight + w2) * r * r;
    t_res += r * r;
    t_grad_lu += w2 * lu * lu;
    t_cross += (-w2 * lu) * f[i];
    t_grad_f += w2 * f[i] * f[i];
  }
  out.expanded = weight * t_res + t_grad_lu + 2.0 * t_cross + t_grad_f;
  return out;
}

/// | sum w^2 (u - f)^2 - (sum w^2 u^2 + 2 sum (-w^2 u) f + sum w^2 f^2) |.
inline double ibp_identity_check(const FunctionCoeffs& u, const FunctionCoeffs& f, const TorusBasis& basis) {
  if (u.size() != f.size() || u.size() > basis.size()) throw ConfigError("ibp_identity_check: size mismatch");
  double lhs = 0.0, grad_u = 0.0, cross = 0.0, grad_f = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double w2 = basis.omega_sq(i);
    lhs += w2 * (u[i] - f[i]) * (u[i] - f[i]);
    grad_u += w2 * u[i] * u[i];
    cross += (-w2 * u[i]) * f[i];
    grad_f += w2 * f[i] * f[i];
  }
  return std::abs(lhs - (grad_u + 2.0 * cross + grad_f));
}

// ---------------------------------------------------------------------------
// Iterations to optimum

struct OptimumSearch {
  std::size_t t_opt = 0;
  double err_sq = 0.0;
  std::size_t iterations_run = 0;
  std::vector<double> curve;  // ||bar theta_t - target||_gamma^2 for t = 0..iterations_run
};

/// Dense scan of ||bar theta_t - target||_gamma^2 over t, stopping once
/// t >= patience_factor * t_best + min_extra (and t >= min_iterations), or
/// at t_cap. Every t is
/// inspected, so unimodality of the curve is not assumed.
inline OptimumSearch find_t_opt(const EmpiricalOperator& op, const SpectralModel& model, double step,
                                const FunctionCoeffs& target, double gamma_eval, std::size_t t_cap,
                                double patience_factor = 3.0, std::size_t min_extra = 64,
                                std::size_t min_iterations = 0) {
  GDConfig{step, t_cap, 1, true, false}.check(op);
  const Eigen::Index N = op.size();
  Eigen::VectorXd tgt = Eigen::VectorXd::Zero(N);
  tgt.head(target.coeffs.size()) = target.coeffs;
  const Eigen::VectorXd w = power_weights(model, gamma_eval);
  Eigen::VectorXd theta = Eigen::VectorXd::Zero(N), sum = Eigen::VectorXd::Zero(N);
  OptimumSearch best{0, power_distance_sq(sum, tgt, w), 0, {}};
  best.curve.push_back(best.err_sq);
  for (std::size_t t = 1; t <= t_cap; ++t) {
    sum += theta;
    theta += step * (op.rhs() - op.apply(theta));
    if (!theta.allFinite() || theta.cwiseAbs().maxCoeff() > kIterateGuard)
      throw DivergenceError(t, "find_t_opt: iterate exceeded overflow guard");
    const double e = power_distance_sq(sum / static_cast<double>(t), tgt, w);
    best.curve.push_back(e);
    best.iterations_run = t;
    if (e < best.err_sq) {
      best.err_sq = e;
      best.t_opt = t;
    }
    if (t >= min_iterations &&
        static_cast<double>(t) >= patience_factor * static_cast<double>(best.t_opt) + static_cast<double>(min_extra))
      break;
  }
  return best;
}

/// Argmin over t of the mean of several error curves, restricted to the
/// common length.
inline std::size_t mean_curve_argmin(const std::vector<const std::vector<double>*>& curves) {
  std::size_t len = std::numeric_limits<std::size_t>::max();
  for (const auto* c : curves) len = std::min(len, c->size());
  std::size_t arg = 0;
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < len; ++t) {
    double m = 0.0;
    for (const auto* c : curves) m += (*c)[t];
    if (m < best) {
      best = m;
      arg = t;
    }
  }
  return arg;
}

struct AccelerationConfig {
  std::vector<std::size_t> n_grid;
  std::size_t replications = 10;
  double gamma_eval = 0.0;
  double sigma = 0.1;
  double target_delta = 0.05;
  double target_scale = 1.0;
  std::size_t t_cap = 1u << 20;
  std::uint64_t seed = 0;
  unsigned threads = 1;
  bool mean_zero = false;  // pose the problem on mean-zero functions
};

struct AccelerationRow {
  std::string op;
  std::size_t n = 0;
  std::size_t replication = 0;
  std::size_t t_opt = 0;
  double err_at_t_opt = 0.0;
};

struct AccelerationSlope {
  std::string op;
  double slope = 0.0;  // from the argmin of the replication-mean error curve
  double stderr_ = 0.0;
  double slope_geometric = 0.0;  // from the geometric mean of per-replication t_opt
  double stderr_geometric = 0.0;
  double theory = 0.0;  // (alpha + p) / (beta alpha + 2(p - q) + 1) with fitted p, q
  double equivalent_p = 0.0;
  double equivalent_q = 0.0;
};

struct AccelerationResult {
  std::vector<AccelerationRow> rows;
  std::vector<AccelerationSlope> slopes;

  void write_csv(std::ostream& os) const {
    os << "operator,n,replication,t_opt,err_at_t_opt\n" << std::setprecision(17);
    for (const auto& r : rows) os << r.op << ',' << r.n << ',' << r.replication << ',' << r.t_opt << ',' << r.err_at_t_opt << '\n';
  }

  nlohmann::json summary() const {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& s : slopes)
      j.push_back({{"operator", s.op}, {"slope", s.slope}, {"stderr", s.stderr_},
                   {"slope_geometric_mean", s.slope_geometric}, {"stderr_geometric_mean", s.stderr_geometric},
                   {"theory", s.theory},
                   {"equivalent_p", s.equivalent_p}, {"equivalent_q", s.equivalent_q}});
    return j;
  }
};

/// Theory exponent of t_opt(n) for an operator set on a base kernel spec.
inline double acceleration_theory_exponent(const SpectrumSpec& base, const PdeOperatorSet& set) {
  return (base.alpha + set.equivalent_p) /
         (base.beta * base.alpha + 2.0 * (set.equivalent_p - set.equivalent_q) + 1.0);
}

/// For every operator set and n, runs averaged GD at step 0.9 / rho_hat on
/// shared data (the target and A = a1 / a2 are common to all sets, and seeds
/// depend only on (seed, n, replication)) and records t_opt per replication.
/// The headline slope uses t_opt of the replication-mean error curve, the
/// estimate of the expected-risk minimizer; to make the mean curve available
/// up to the longest horizon any replication needed, shorter runs are
/// repeated to that horizon.
inline AccelerationResult acceleration_experiment(const SpectrumSpec& base, const std::vector<PdeOperatorSet>& sets,
                                                  const AccelerationConfig& cfg) {
  if (sets.empty()) throw ConfigError("acceleration_experiment: no operator sets");
  if (cfg.n_grid.size() < 3) throw ConfigError("acceleration_experiment: need at least 3 sample sizes");
  if (cfg.replications == 0) throw ConfigError("acceleration_experiment: replications must be positive");
  const TorusBasis basis(base.dimension, base.n_trunc, cfg.mean_zero);
  const FunctionCoeffs target = make_target(base, cfg.target_delta, cfg.target_scale);
  std::vector<SpectralModel> models;
  for (const auto& s : sets) {
    if (static_cast<std::size_t>(s.a1.size()) != base.n_trunc) throw ConfigError("acceleration_experiment: symbol size mismatch");
    models.emplace_back(base, s.a1, s.a2);
  }

  const std::size_t per_set = cfg.n_grid.size() * cfg.replications;
  const std::size_t total = sets.size() * per_set;
  auto run = [&](std::size_t slot, std::size_t min_iterations) {
    const std::size_t k = slot / per_set, task = slot % per_set;
    const std::size_t n = cfg.n_grid[task / cfg.replications];
    const std::size_t rep = task % cfg.replications;
    // data depend on A = a1/a2 only, which the sets share
    const Dataset data = sample_dataset(models.front(), basis, target, n, NoiseModel::gaussian(cfg.sigma),
                                        hash_words({cfg.seed, n, rep}));
    const EmpiricalOperator op(data, models[k], basis);
    return find_t_opt(op, models[k], op.default_step(), target, cfg.gamma_eval, cfg.t_cap, 3.0, 64, min_iterations);
  };

  std::vector<OptimumSearch> found(total);
  parallel_for(total, cfg.threads, [&](std::size_t slot) { found[slot] = run(slot, 0); });

  std::vector<std::size_t> horizon(sets.size() * cfg.n_grid.size(), 0);
  for (std::size_t slot = 0; slot < total; ++slot) {
    auto& h = horizon[slot / cfg.replications];
    h = std::max(h, found[slot].iterations_run);
  }
  std::vector<std::size_t> short_runs;
  for (std::size_t slot = 0; slot < total; ++slot)
    if (found[slot].iterations_run < horizon[slot / cfg.replications]) short_runs.push_back(slot);
  parallel_for(short_runs.size(), cfg.threads, [&](std::size_t k) {
    const std::size_t slot = short_runs[k];
    OptimumSearch longer = run(slot, horizon[slot / cfg.replications]);
    longer.curve.resize(horizon[slot / cfg.replications] + 1);
    found[slot].curve = std::move(longer.curve);  // t_opt of the first pass is unchanged by a longer scan
  });

  AccelerationResult res;
  for (std::size_t k = 0; k < sets.size(); ++k) {
    std::vector<std::pair<double, double>> mean_pts, geo_pts;
    for (std::size_t a = 0; a < cfg.n_grid.size(); ++a) {
      double log_sum = 0.0;
      std::vector<const std::vector<double>*> curves;
      for (std::size_t rep = 0; rep < cfg.replications; ++rep) {
        const OptimumSearch& o = found[k * per_set + a * cfg.replications + rep];
        res.rows.push_back({sets[k].name, cfg.n_grid[a], rep, o.t_opt, o.err_sq});
        log_sum += std::log(static_cast<double>(std::max<std::size_t>(o.t_opt, 1)));
        curves.push_back(&o.curve);
      }
      const double n = static_cast<double>(cfg.n_grid[a]);
      geo_pts.emplace_back(n, std::exp(log_sum / static_cast<double>(cfg.replications)));
      mean_pts.emplace_back(n, static_cast<double>(std::max<std::size_t>(mean_curve_argmin(curves), 1)));
    }
    const SlopeFit fm = fit_slope(mean_pts), fg = fit_slope(geo_pts);
    res.slopes.push_back({sets[k].name, fm.slope, fm.stderr_, fg.slope, fg.stderr_,
                          acceleration_theory_exponent(base, sets[k]), sets[k].equivalent_p, sets[k].equivalent_q});
  }
  return res;
}

}  // namespace specgd
