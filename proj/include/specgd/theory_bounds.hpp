#pragma once

// Stopping schedule, regime classification and rate exponents, plus exact
// spectral sums for the quantities the analysis bounds and ratio checks of
// those sums against their power-law envelopes.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <ostream>
#include <string>
#include <vector>

#include "error.hpp"
#include "simulate.hpp"
#include "spectral_core.hpp"

namespace specgd {

enum class Regime { SmallLR_nIter, ConstLR, SubOptimal };

inline std::string regime_name(Regime r) {
  switch (r) {
    case Regime::SmallLR_nIter: return "SmallLR_nIter";
    case Regime::ConstLR: return "ConstLR";
    case Regime::SubOptimal: return "SubOptimal";
  }
  return "?";
}

struct RegimeThresholds {
  double lower;  // (alpha + 2q - p - 1) / alpha
  double upper;  // (mu alpha + 2q - p + 1) / alpha
};

inline RegimeThresholds regime_thresholds(const SpectrumSpec& s) {
  return {(s.alpha + 2.0 * s.q - s.p - 1.0) / s.alpha, (s.mu * s.alpha + 2.0 * s.q - s.p + 1.0) / s.alpha};
}

/// Below the lower curve the source is too rough for the optimal rate;
/// between the curves (inclusive) a constant step with t* iterations is
/// optimal; above the upper curve t = n with a shrinking step.
inline Regime regime_classify(const SpectrumSpec& s) {
  s.validate();
  const RegimeThresholds th = regime_thresholds(s);
  if (s.beta < th.lower) return Regime::SubOptimal;
  if (s.beta <= th.upper) return Regime::ConstLR;
  return Regime::SmallLR_nIter;
}

enum class BoundKind { Upper, Lower };

/// Positive r with E||bar theta - u*||_gamma^2 ~ n^-r.
inline double rate_exponent(const SpectrumSpec& s, double gamma_eval, BoundKind kind) {
  s.validate();
  if (!(gamma_eval < s.beta)) throw ConfigError("rate_exponent: gamma_eval must be below beta");
  const double pq = 2.0 * (s.p - s.q);
  if (kind == BoundKind::Lower) {
    const double b = std::max(s.beta, s.mu);
    return (b - gamma_eval) * s.alpha / (b * s.alpha + pq + 1.0);
  }
  if (regime_classify(s) == Regime::SubOptimal) return (s.beta - gamma_eval) * s.alpha / (s.mu * s.alpha + s.p);
  return (s.beta - gamma_eval) * s.alpha / (s.alpha * s.beta + pq + 1.0);
}

/// Exponent e of the iteration count t* = n^e in the ConstLR regime.
inline double stopping_exponent(const SpectrumSpec& s) {
  return (s.alpha + s.p) / (s.beta * s.alpha + 2.0 * (s.p - s.q) + 1.0);
}

struct StoppingPlan {
  Regime regime;
  double t_star;             // real-valued schedule
  std::size_t iterations;    // ceil(t_star)
  double gamma_factor;       // learning rate = gamma_factor * (0.9 / rho_hat)
  std::string gamma_rule;
  std::vector<double> gammas_eval;
  std::vector<double> exponents;  // upper rate exponent per gamma_eval (NaN when gamma_eval >= beta)
};

inline StoppingPlan stopping_schedule(const SpectrumSpec& s, std::size_t n, const std::vector<double>& gammas_eval = {}) {
  if (n < 2) throw ConfigError("stopping_schedule: n must be at least 2");
  const Regime r = regime_classify(s);
  const double nd = static_cast<double>(n);
  StoppingPlan plan{r, 0.0, 0, 1.0, "", gammas_eval, {}};
  const double e = stopping_exponent(s);
  switch (r) {
    case Regime::ConstLR:
      plan.t_star = std::pow(nd, e);
      plan.gamma_rule = "constant: 0.9 / rho_hat";
      break;
    case Regime::SmallLR_nIter:
      plan.t_star = nd;
      plan.gamma_factor = std::pow(nd, e - 1.0);
      plan.gamma_rule = "n^(e-1) * 0.9 / rho_hat";
      break;
    case Regime::SubOptimal:
      plan.t_star = std::pow(nd, (s.alpha + s.p) / (s.mu * s.alpha + s.p));
      plan.gamma_rule = "constant: 0.9 / rho_hat";
      break;
  }
  // guard against pow round-off just above an integer, e.g. 4096^(2/3)
  const double nearest = std::round(plan.t_star);
  if (std::abs(plan.t_star - nearest) <= 1e-9 * nearest) plan.t_star = nearest;
  plan.iterations = static_cast<std::size_t>(std::max(1.0, std::ceil(plan.t_star)));
  for (double g : gammas_eval)
    plan.exponents.push_back(g < s.beta ? rate_exponent(s, g, BoundKind::Upper) : std::numeric_limits<double>::quiet_NaN());
  return plan;
}

// ---------------------------------------------------------------------------
// Exact spectral sums

namespace detail {
/// sum_{i > N} f(i) ~ integral of f over [N + 1/2, inf), with f decaying like
/// i^-k. Log-spaced trapezoid in s = log(i). Infinite when k <= 1.
template <class F>
double tail_integral(F&& f, std::size_t N, double k) {
  if (!(k > 1.0)) return std::numeric_limits<double>::infinity();
  const double x0 = static_cast<double>(N) + 0.5;
  const double h = 0.01;
  double sum = 0.5 * f(x0) * x0;
  for (int j = 1; j < 200000; ++j) {
    const double x = x0 * std::exp(h * j);
    const double term = f(x) * x;
    sum += term;
    if (term < 1e-17 * sum && j > 100) break;
  }
  return sum * h;
}

/// Continuous-index symbols for tail sums.
struct ContSymbols {
  const SpectrumSpec& s;
  double lambda(double i) const { return s.c_lambda * std::pow(i, -s.alpha); }
  double p(double i) const { return s.c_p * std::pow(i, -s.p); }
  double q(double i) const { return s.c_q * std::pow(i, -s.q); }
};
}  // namespace detail

/// ( sum_i (lam / (lambda_i p_i + lam))^2 a_i^2 lambda_i^-gamma )^1/2 over the coefficients of `target`.
inline NormResult bias_exact(const SpectrumSpec& s, const FunctionCoeffs& target, double lam, double gamma_eval) {
  if (!(lam >= 0.0)) throw ConfigError("bias_exact: lam must be nonnegative");
  if (target.size() > s.n_trunc) throw ConfigError("bias_exact: target exceeds truncation");
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const ModeSymbols m = eigenvalues(s, i + 1);
    const double c = lam / (m.lambda * m.a1 + lam);
    const double a = target[i];
    if (a == 0.0 || c == 0.0) continue;
    sum += c * c * a * a * std::pow(m.lambda, -gamma_eval);
  }
  return norm_from_sum(sum);
}

/// L2 norm of the energy residual, coefficients p_i lam / (lambda_i p_i + lam) a_i.
inline NormResult energy_bias_exact(const SpectrumSpec& s, const FunctionCoeffs& target, double lam) {
  if (!(lam >= 0.0)) throw ConfigError("energy_bias_exact: lam must be nonnegative");
  if (target.size() > s.n_trunc) throw ConfigError("energy_bias_exact: target exceeds truncation");
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const ModeSymbols m = eigenvalues(s, i + 1);
    const double c = m.a1 * lam / (m.lambda * m.a1 + lam);
    sum += c * c * target[i] * target[i];
  }
  return norm_from_sum(sum);
}

/// N(lam) = sum_i lambda_i q_i^2 / (lambda_i p_i + lam), with an integral tail past n_trunc.
inline double effective_dimension(const SpectrumSpec& s, double lam) {
  if (!(lam > 0.0)) throw ConfigError("effective_dimension: lam must be positive");
  double sum = 0.0;
  for (std::size_t i = 1; i <= s.n_trunc; ++i) {
    const ModeSymbols m = eigenvalues(s, i);
    sum += m.lambda * m.a2 * m.a2 / (m.lambda * m.a1 + lam);
  }
  const detail::ContSymbols c{s};
  return sum + detail::tail_integral(
                   [&](double i) { return c.lambda(i) * c.q(i) * c.q(i) / (c.lambda(i) * c.p(i) + lam); }, s.n_trunc,
                   s.alpha + 2.0 * s.q);
}

/// Trace of (Sigma_A1 + lam)^-1 Sigma: sum_i lambda_i / (lambda_i p_i + lam), with tail.
inline double dof_trace(const SpectrumSpec& s, double lam) {
  if (!(lam > 0.0)) throw ConfigError("dof_trace: lam must be positive");
  double sum = 0.0;
  for (std::size_t i = 1; i <= s.n_trunc; ++i) {
    const ModeSymbols m = eigenvalues(s, i);
    sum += m.lambda / (m.lambda * m.a1 + lam);
  }
  const detail::ContSymbols c{s};
  return sum + detail::tail_integral([&](double i) { return c.lambda(i) / (c.lambda(i) * c.p(i) + lam); },
                                     s.n_trunc, s.alpha);
}

/// Basis-uniform bound sum_i s_i / (lambda_i p_i + lam) sup e_i^2 with
/// s_i = lambda_i (which=1), lambda_i q_i^2 (2), lambda_i p_i^2 (3).
/// Fourier modes: sup e^2 = 1 for the constant, 2 otherwise.
inline NormResult n_infty(const SpectrumSpec& s, double lam, int which) {
  if (!(lam > 0.0)) throw ConfigError("n_infty: lam must be positive");
  if (which < 1 || which > 3) throw ConfigError("n_infty: which must be 1, 2 or 3");
  const detail::ContSymbols c{s};
  auto weight = [&](double lamb, double p, double q) {
    return which == 1 ? lamb : which == 2 ? lamb * q * q : lamb * p * p;
  };
  double sum = 0.0;
  for (std::size_t i = 1; i <= s.n_trunc; ++i) {
    const ModeSymbols m = eigenvalues(s, i);
    sum += weight(m.lambda, m.a1, m.a2) / (m.lambda * m.a1 + lam) * (i == 1 ? 1.0 : 2.0);
  }
  const double k = which == 1 ? s.alpha : which == 2 ? s.alpha + 2.0 * s.q : s.alpha + 2.0 * s.p;
  sum += 2.0 * detail::tail_integral(
                   [&](double i) { return weight(c.lambda(i), c.p(i), c.q(i)) / (c.lambda(i) * c.p(i) + lam); },
                   s.n_trunc, k);
  return norm_from_sum(sum).diverged ? NormResult{0.0, true} : NormResult{sum, false};
}

/// ||(Sigma_A1 + lam)^-1/2 Sigma^((1-gamma)/2)||^2 = sup_i lambda_i^(1-gamma) / (lambda_i p_i + lam).
inline double sigma_power_norm_sq(const SpectrumSpec& s, double lam, double gamma) {
  if (!(lam > 0.0)) throw ConfigError("sigma_power_norm_sq: lam must be positive");
  double best = 0.0;
  for (std::size_t i = 1; i <= s.n_trunc; ++i) {
    const ModeSymbols m = eigenvalues(s, i);
    best = std::max(best, std::pow(m.lambda, 1.0 - gamma) / (m.lambda * m.a1 + lam));
  }
  return best;
}

// ---------------------------------------------------------------------------
// Envelope checks

enum class Quantity { Bias, EnergyBias, EffectiveDimension, Dof, NInf1, NInf2, NInf3, SigmaPower };

inline const std::vector<Quantity>& all_quantities() {
  static const std::vector<Quantity> q = {Quantity::Bias,  Quantity::EnergyBias, Quantity::EffectiveDimension,
                                          Quantity::Dof,   Quantity::NInf1,      Quantity::NInf2,
                                          Quantity::NInf3, Quantity::SigmaPower};
  return q;
}

inline std::string quantity_name(Quantity q) {
  switch (q) {
    case Quantity::Bias: return "bias";
    case Quantity::EnergyBias: return "energy_bias";
    case Quantity::EffectiveDimension: return "effective_dimension";
    case Quantity::Dof: return "dof_trace";
    case Quantity::NInf1: return "n_infty_1";
    case Quantity::NInf2: return "n_infty_2";
    case Quantity::NInf3: return "n_infty_3";
    case Quantity::SigmaPower: return "sigma_power";
  }
  return "?";
}

struct BoundCheckOptions {
  double gamma_eval = 0.0;     // for Bias and SigmaPower
  double target_delta = 0.05;  // tightness of the source-condition target
  double exponent_shift = 0.0; // added to the envelope exponent (negative controls)
  double max_decay_slope = -0.05;  // partial sums approach their envelope from below
  double sharpness_slope = 0.3;  // bias only
};

/// Envelope exponent e with quantity <~ lam^e. Exponents are the ones the
/// spectral suprema actually produce.
inline double envelope_exponent(Quantity q, const SpectrumSpec& s, double gamma_eval) {
  const double ap = s.alpha + s.p;
  switch (q) {
    case Quantity::Bias: return (s.beta - gamma_eval) * s.alpha / (2.0 * ap);
    case Quantity::EnergyBias: return (s.beta * s.alpha + 2.0 * s.p) / (2.0 * ap);
    // bounded sums once the partial-sum exponent turns negative (log at 0)
    case Quantity::EffectiveDimension: return -std::max(0.0, 1.0 + s.p - 2.0 * s.q) / ap;
    case Quantity::Dof: return -std::max(0.0, 1.0 + s.p) / ap;
    case Quantity::NInf1: return -(s.mu * s.alpha + s.p) / ap;
    case Quantity::NInf2: return -(s.mu * s.alpha + s.p - 2.0 * s.q) / ap;
    case Quantity::NInf3: return -(s.mu * s.alpha - s.p) / ap;
    // the supremum sits at the first mode once gamma alpha + p <= 0
    case Quantity::SigmaPower: return -std::max(0.0, gamma_eval * s.alpha + s.p) / ap;
  }
  return 0.0;
}

/// Alternative exponents with other sign conventions, reported for
/// comparison only.
struct PrintedEnvelope {
  Quantity quantity;
  std::string label;
  double exponent;
};

inline std::vector<PrintedEnvelope> printed_envelopes(const SpectrumSpec& s) {
  const double ap = s.alpha + s.p;
  return {
      {Quantity::EnergyBias, "energy_bias_minus_2p", (s.beta * s.alpha - 2.0 * s.p) / (2.0 * ap)},
      {Quantity::EffectiveDimension, "effective_dimension_printed", (-1.0 + s.p - 2.0 * s.q) / ap},
      {Quantity::NInf2, "n_infty_2_plus_2q", -(s.mu * s.alpha + s.p + 2.0 * s.q) / ap},
      {Quantity::NInf3, "n_infty_3_3p", -(s.mu * s.alpha + 3.0 * s.p) / ap},
      {Quantity::NInf3, "n_infty_3_2p", -(s.mu * s.alpha + 2.0 * s.p) / ap},
  };
}

struct BoundCheckReport {
  std::string quantity;
  std::vector<double> lambdas, values, envelopes, ratios;
  double envelope_exponent = 0.0;
  double max_ratio = 0.0;
  double trend_slope = 0.0;  // log ratio vs log lam over the small-lam half
  bool bounded = false;
  bool flat = false;
  bool sharp = true;  // only asserted for bias
  bool pass = false;

  void write_csv(std::ostream& os, bool header = true) const {
    if (header) os << "quantity,lambda,value,envelope,ratio\n";
    os << std::setprecision(17);
    for (std::size_t k = 0; k < lambdas.size(); ++k)
      os << quantity << ',' << lambdas[k] << ',' << values[k] << ',' << envelopes[k] << ',' << ratios[k] << '\n';
  }

  nlohmann::json verdict() const {
    return {{"quantity", quantity}, {"envelope_exponent", envelope_exponent}, {"max_ratio", max_ratio},
            {"trend_slope", trend_slope}, {"bounded", bounded}, {"flat", flat}, {"sharp", sharp}, {"pass", pass}};
  }
};

/// n log-spaced points from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, std::size_t n) {
  if (!(lo > 0.0 && hi > lo) || n < 2) throw ConfigError("log_grid: need 0 < lo < hi and n >= 2");
  std::vector<double> g(n);
  const double a = std::log(lo), b = std::log(hi);
  for (std::size_t k = 0; k < n; ++k) g[k] = std::exp(a + (b - a) * static_cast<double>(k) / static_cast<double>(n - 1));
  g.back() = hi;
  return g;
}

namespace detail {
inline double ols_slope(const std::vector<double>& x, const std::vector<double>& y) {
  const double n = static_cast<double>(x.size());
  double mx = 0, my = 0;
  for (std::size_t k = 0; k < x.size(); ++k) mx += x[k], my += y[k];
  mx /= n, my /= n;
  double sxy = 0, sxx = 0;
  for (std::size_t k = 0; k < x.size(); ++k) sxy += (x[k] - mx) * (y[k] - my), sxx += (x[k] - mx) * (x[k] - mx);
  return sxy / sxx;
}
}  // namespace detail

/// Value of quantity q at lam; +inf when the sum diverges.
inline double evaluate_quantity(Quantity q, const SpectrumSpec& s, const FunctionCoeffs& target, double lam,
                                double gamma_eval) {
  auto val = [](NormResult r) { return r.diverged ? std::numeric_limits<double>::infinity() : r.value; };
  switch (q) {
    case Quantity::Bias: return val(bias_exact(s, target, lam, gamma_eval));
    case Quantity::EnergyBias: return val(energy_bias_exact(s, target, lam));
    case Quantity::EffectiveDimension: return effective_dimension(s, lam);
    case Quantity::Dof: return dof_trace(s, lam);
    case Quantity::NInf1: return val(n_infty(s, lam, 1));
    case Quantity::NInf2: return val(n_infty(s, lam, 2));
    case Quantity::NInf3: return val(n_infty(s, lam, 3));
    case Quantity::SigmaPower: return sigma_power_norm_sq(s, lam, gamma_eval);
  }
  return 0.0;
}

/// Ratio check of quantity / lam^e over `grid`. Passes when every ratio is
/// finite and the fitted log-log slope of the ratio over the small-lam half
/// is at least `max_decay_slope` (no growth as lam -> 0). For the bias the
/// ratio must also not vanish faster than lam^sharpness_slope.
inline BoundCheckReport bound_check(Quantity q, const SpectrumSpec& s, const std::vector<double>& grid,
                                    const BoundCheckOptions& opt = {}, const double* exponent_override = nullptr) {
  if (grid.size() < 20) throw ConfigError("bound_check: grid needs at least 20 points");
  const auto [lo, hi] = std::minmax_element(grid.begin(), grid.end());
  if (!(*lo > 0.0) || std::log10(*hi / *lo) < 4.0 - 1e-9) throw ConfigError("bound_check: grid must span 4 decades");
  std::vector<double> g(grid);
  std::sort(g.begin(), g.end());

  const FunctionCoeffs target =
      (q == Quantity::Bias || q == Quantity::EnergyBias) ? make_target(s, opt.target_delta, 1.0) : FunctionCoeffs{};

  BoundCheckReport r;
  r.quantity = quantity_name(q);
  r.envelope_exponent = (exponent_override ? *exponent_override : envelope_exponent(q, s, opt.gamma_eval)) +
                        opt.exponent_shift;
  r.bounded = true;
  for (double lam : g) {
    const double v = evaluate_quantity(q, s, target, lam, opt.gamma_eval);
    const double env = std::pow(lam, r.envelope_exponent);
    const double ratio = v / env;
    r.lambdas.push_back(lam);
    r.values.push_back(v);
    r.envelopes.push_back(env);
    r.ratios.push_back(ratio);
    if (!std::isfinite(ratio)) r.bounded = false;
    r.max_ratio = std::max(r.max_ratio, ratio);
  }
  if (r.bounded) {
    const std::size_t half = g.size() / 2;
    std::vector<double> lx, ly;
    for (std::size_t k = 0; k < half; ++k) {
      if (r.ratios[k] <= 0.0) continue;
      lx.push_back(std::log(g[k]));
      ly.push_back(std::log(r.ratios[k]));
    }
    r.trend_slope = lx.size() >= 2 ? detail::ols_slope(lx, ly) : 0.0;
    r.flat = r.trend_slope >= opt.max_decay_slope;
    if (q == Quantity::Bias) r.sharp = r.trend_slope <= opt.sharpness_slope;
  }
  r.pass = r.bounded && r.flat && r.sharp;
  return r;
}

// ---------------------------------------------------------------------------
// Filter inequalities

struct FilterSuiteResult {
  std::size_t checks = 0;
  std::size_t residual_violations = 0;  // x^u r_t(x) > (step t)^-u
  std::size_t filter_violations = 0;    // q_t(x) / (step t) > 2
  std::size_t shrinkage_violations = 0; // 1 - r_t outside [0,1] or decreasing in t
  double worst_residual_excess = 0.0;
  double worst_filter_value = 0.0;

  bool pass() const { return residual_violations == 0 && filter_violations == 0 && shrinkage_violations == 0; }
};

/// Grid check over x in (0, 1/step], the given exponents u and t = 1..t_max.
inline FilterSuiteResult filter_bound_suite(double step, std::size_t t_max, const std::vector<double>& us,
                                            std::size_t n_x = 200) {
  FilterSuiteResult res;
  const std::vector<double> xs = log_grid(1e-8 / step, 1.0 / step, n_x);
  for (double x : xs) {
    double prev_shrink = 0.0;
    for (std::size_t t = 1; t <= t_max; ++t) {
      const double r = residual_gd(t, step, x);
      const double qv = filter_gd(t, step, x);
      const double st = step * static_cast<double>(t);
      for (double u : us) {
        ++res.checks;
        const double lhs = std::pow(x, u) * r, rhs = std::pow(st, -u);
        if (lhs > rhs * (1.0 + 1e-12)) {
          ++res.residual_violations;
          res.worst_residual_excess = std::max(res.worst_residual_excess, lhs / rhs - 1.0);
        }
      }
      // lam q_lam(x) <= 2 at lam = 1 / (step t)
      const double scaled = qv / st;
      res.worst_filter_value = std::max(res.worst_filter_value, scaled);
      if (scaled > 2.0) ++res.filter_violations;
      const double shrink = 1.0 - r;
      if (shrink < -1e-15 || shrink > 1.0 + 1e-15 || shrink < prev_shrink - 1e-15) ++res.shrinkage_violations;
      prev_shrink = shrink;
    }
  }
  return res;
}

}  // namespace specgd
