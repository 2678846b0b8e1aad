#pragma once

// Shared eigenbasis, the diagonal spectral model of the kernel and of the
// operators A1, A2, and the norm arithmetic built on top of them.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "error.hpp"

namespace specgd {

/// Sums above this are reported as diverged rather than as a number.
inline constexpr double kOverflowThreshold = 1e150;

/// Diagonal model parameters. Eigenvalues are lambda_i = c_lambda i^-alpha,
/// A1 symbols c_p i^-p and A2 symbols c_q i^-q, for i = 1..n_trunc.
struct SpectrumSpec {
  double alpha = 2.0;
  double p = 0.0;
  double q = 0.0;
  double beta = 1.0;
  double mu = 0.5;  // embedding order; from_json defaults it to 1/alpha
  double c_lambda = 1.0;
  double c_p = 1.0;
  double c_q = 1.0;
  std::size_t n_trunc = 512;
  int dimension = 1;

  /// Spec with mu = 1/alpha and unit constants.
  static SpectrumSpec make(double alpha, double p, double q, double beta,
                           std::size_t n_trunc = 512) {
    SpectrumSpec s;
    s.alpha = alpha;
    s.p = p;
    s.q = q;
    s.beta = beta;
    s.mu = 1.0 / alpha;
    s.n_trunc = n_trunc;
    return s;
  }

  void validate() const {
    auto fail = [](const std::string& m) { throw ConfigError("SpectrumSpec: " + m); };
    if (!(alpha > 1.0)) fail("alpha must exceed 1");
    if (!(p <= 0.0)) fail("p must be <= 0");
    if (!(q <= 0.0)) fail("q must be <= 0");
    if (!(alpha + p > 0.0)) fail("alpha + p must be positive");
    if (!(beta > 0.0)) fail("beta must be positive");
    if (!(mu > 0.0 && mu <= 1.0)) fail("mu must lie in (0, 1]");
    if (!(c_lambda > 0.0 && c_p > 0.0 && c_q > 0.0)) fail("scale constants must be positive");
    if (n_trunc == 0) fail("n_trunc must be positive");
    if (dimension < 1) fail("dimension must be positive");
  }

  /// Non-fatal findings: a divergent L-infinity embedding sum at this mu.
  std::vector<std::string> warnings() const {
    std::vector<std::string> out;
    if (mu * alpha <= 1.0) {
      out.push_back("embedding sum sum_i lambda_i^mu sup|e_i|^2 diverges (mu*alpha <= 1); "
                    "truncated value grows with n_trunc");
    }
    return out;
  }

  friend bool operator==(const SpectrumSpec&, const SpectrumSpec&) = default;
};

inline void to_json(nlohmann::json& j, const SpectrumSpec& s) {
  j = nlohmann::json{{"alpha", s.alpha}, {"p", s.p},           {"q", s.q},
                     {"beta", s.beta},   {"mu", s.mu},         {"c_lambda", s.c_lambda},
                     {"c_p", s.c_p},     {"c_q", s.c_q},       {"n_trunc", s.n_trunc},
                     {"dimension", s.dimension}};
}

inline void from_json(const nlohmann::json& j, SpectrumSpec& s) {
  static const std::vector<std::string> known = {"alpha", "p",   "q",   "beta",    "mu",
                                                 "c_lambda", "c_p", "c_q", "n_trunc", "dimension"};
  if (!j.is_object()) throw ConfigError("SpectrumSpec: expected an object");
  for (const auto& [key, _] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError("SpectrumSpec: unknown key '" + key + "'");
  }
  SpectrumSpec out;
  out.alpha = j.value("alpha", out.alpha);
  out.p = j.value("p", out.p);
  out.q = j.value("q", out.q);
  out.beta = j.value("beta", out.beta);
  out.mu = j.contains("mu") ? j.at("mu").get<double>() : 1.0 / out.alpha;
  out.c_lambda = j.value("c_lambda", out.c_lambda);
  out.c_p = j.value("c_p", out.c_p);
  out.c_q = j.value("c_q", out.c_q);
  out.n_trunc = j.value("n_trunc", out.n_trunc);
  out.dimension = j.value("dimension", out.dimension);
  out.validate();
  s = out;
}

/// Kernel eigenvalue and operator symbols of one mode.
struct ModeSymbols {
  double lambda;
  double a1;
  double a2;
};

/// Symbols of mode i (1-based).
inline ModeSymbols eigenvalues(const SpectrumSpec& spec, std::size_t i) {
  if (i < 1 || i > spec.n_trunc)
    throw ConfigError("eigenvalues: index " + std::to_string(i) + " outside [1, n_trunc]");
  const double x = static_cast<double>(i);
  return {spec.c_lambda * std::pow(x, -spec.alpha), spec.c_p * std::pow(x, -spec.p),
          spec.c_q * std::pow(x, -spec.q)};
}

/// Coefficients of u = sum_i a_i e_i in the shared L2 eigenbasis.
struct FunctionCoeffs {
  Eigen::VectorXd coeffs;

  FunctionCoeffs() = default;
  explicit FunctionCoeffs(Eigen::VectorXd c) : coeffs(std::move(c)) {}
  static FunctionCoeffs zero(std::size_t n) { return FunctionCoeffs(Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n))); }

  std::size_t size() const noexcept { return static_cast<std::size_t>(coeffs.size()); }
  double operator[](std::size_t i) const { return coeffs[static_cast<Eigen::Index>(i)]; }
};

/// Materialized per-mode arrays: kernel eigenvalues and the two operator
/// symbols. Built from a SpectrumSpec, or with explicit symbols (PDE operators).
class SpectralModel {
 public:
  explicit SpectralModel(const SpectrumSpec& spec) : spec_(spec) {
    spec.validate();
    const auto n = static_cast<Eigen::Index>(spec.n_trunc);
    lambda_.resize(n);
    a1_.resize(n);
    a2_.resize(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      const ModeSymbols s = eigenvalues(spec, static_cast<std::size_t>(i + 1));
      lambda_[i] = s.lambda;
      a1_[i] = s.a1;
      a2_[i] = s.a2;
    }
  }

  /// Kernel from spec, operator symbols supplied per mode.
  SpectralModel(const SpectrumSpec& spec, Eigen::VectorXd a1, Eigen::VectorXd a2)
      : SpectralModel(spec) {
    if (a1.size() != lambda_.size() || a2.size() != lambda_.size())
      throw ConfigError("SpectralModel: symbol arrays must have n_trunc entries");
    if ((a1.array() <= 0.0).any() || (a2.array() <= 0.0).any())
      throw ConfigError("SpectralModel: symbols must be positive");
    a1_ = std::move(a1);
    a2_ = std::move(a2);
  }

  const SpectrumSpec& spec() const noexcept { return spec_; }
  std::size_t size() const noexcept { return static_cast<std::size_t>(lambda_.size()); }
  const Eigen::VectorXd& lambda() const noexcept { return lambda_; }
  const Eigen::VectorXd& a1() const noexcept { return a1_; }
  const Eigen::VectorXd& a2() const noexcept { return a2_; }

  /// lambda_i * a1_i: the diagonal of the population operator GD iterates with.
  Eigen::VectorXd population_diagonal() const { return lambda_.cwiseProduct(a1_); }

 private:
  SpectrumSpec spec_;
  Eigen::VectorXd lambda_;
  Eigen::VectorXd a1_;
  Eigen::VectorXd a2_;
};

struct NormResult {
  double value = 0.0;
  bool diverged = false;

  explicit operator bool() const noexcept { return !diverged; }
};

/// Finalize a sum of squares into a norm, flagging overflow.
inline NormResult norm_from_sum(double sum_sq) {
  if (!std::isfinite(sum_sq) || sum_sq > kOverflowThreshold) return {0.0, true};
  return {std::sqrt(sum_sq), false};
}

/// (sum_i lambda_i^-gamma a_i^2)^(1/2) over the coefficients present in u.
inline NormResult power_norm(const FunctionCoeffs& u, double gamma, const SpectralModel& model) {
  if (u.size() > model.size()) throw ConfigError("power_norm: more coefficients than modes");
  double sum = 0.0;
  const auto& lam = model.lambda();
  for (Eigen::Index i = 0; i < u.coeffs.size(); ++i) {
    const double a = u.coeffs[i];
    if (!std::isfinite(a)) return {0.0, true};
    if (a == 0.0) continue;
    sum += a * a * std::pow(lam[i], -gamma);
    if (sum > kOverflowThreshold) return {0.0, true};
  }
  return norm_from_sum(sum);
}

inline NormResult power_norm(const FunctionCoeffs& u, double gamma, const SpectrumSpec& spec) {
  return power_norm(u, gamma, SpectralModel(spec));
}

/// Squared gamma-distance between two coefficient vectors of equal length.
inline double power_distance_sq(const Eigen::VectorXd& a, const Eigen::VectorXd& b,
                                const Eigen::VectorXd& weights) {
  return ((a - b).array().square() * weights.array()).sum();
}

/// lambda_i^-gamma for all modes.
inline Eigen::VectorXd power_weights(const SpectralModel& model, double gamma) {
  return model.lambda().array().pow(-gamma).matrix();
}

struct Operator {
  enum class Kind { A1, A2, A, KernelPower };
  Kind kind;
  double s = 0.0;

  static constexpr Operator a1() { return {Kind::A1, 0.0}; }
  static constexpr Operator a2() { return {Kind::A2, 0.0}; }
  static constexpr Operator a() { return {Kind::A, 0.0}; }
  static constexpr Operator kernel_power(double s) { return {Kind::KernelPower, s}; }
};

/// Coefficient-wise action: A1 -> a1_i, A2 -> a2_i, A = A2^-1 A1 -> a1_i/a2_i,
/// L^s -> lambda_i^s.
inline FunctionCoeffs apply_operator(const FunctionCoeffs& u, Operator op, const SpectralModel& model) {
  const auto n = u.coeffs.size();
  if (u.size() > model.size()) throw ConfigError("apply_operator: more coefficients than modes");
  Eigen::VectorXd out(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double factor = 1.0;
    switch (op.kind) {
      case Operator::Kind::A1: factor = model.a1()[i]; break;
      case Operator::Kind::A2: factor = model.a2()[i]; break;
      case Operator::Kind::A:
        if (model.a2()[i] == 0.0) throw ConfigError("apply_operator: zero A2 symbol");
        factor = model.a1()[i] / model.a2()[i];
        break;
      case Operator::Kind::KernelPower: factor = std::pow(model.lambda()[i], op.s); break;
    }
    out[i] = factor * u.coeffs[i];
  }
  return FunctionCoeffs(std::move(out));
}

/// Source-condition target a_i = scale * lambda_i^(beta/2) * i^-(1/2 + delta):
/// in H^beta with ||u||_beta^2 = scale^2 sum i^-(1+2 delta), and not in
/// H^beta' for beta' much above beta as delta -> 0.
inline FunctionCoeffs make_target(const SpectrumSpec& spec, double delta, double scale) {
  if (!(delta > 0.0)) throw ConfigError("make_target: delta must be positive");
  spec.validate();
  Eigen::VectorXd a(static_cast<Eigen::Index>(spec.n_trunc));
  for (std::size_t i = 1; i <= spec.n_trunc; ++i) {
    const double lam = eigenvalues(spec, i).lambda;
    a[static_cast<Eigen::Index>(i - 1)] =
        scale * std::pow(lam, spec.beta / 2.0) * std::pow(static_cast<double>(i), -(0.5 + delta));
  }
  return FunctionCoeffs(std::move(a));
}

/// Mass sum_{i > n_trunc} lambda_i^-gamma a_i^2 that make_target drops,
/// estimated by the integral of the (decreasing) summand from n_trunc.
/// Returns +inf when the full series diverges.
inline double make_target_tail_mass(const SpectrumSpec& spec, double delta, double scale, double gamma) {
  // summand = scale^2 c^(beta-gamma) i^-k with k = alpha (beta - gamma) + 1 + 2 delta
  const double k = spec.alpha * (spec.beta - gamma) + 1.0 + 2.0 * delta;
  if (k <= 1.0) return std::numeric_limits<double>::infinity();
  const double n = static_cast<double>(spec.n_trunc);
  return scale * scale * std::pow(spec.c_lambda, spec.beta - gamma) * std::pow(n, 1.0 - k) / (k - 1.0);
}

// ---------------------------------------------------------------------------
// Torus Fourier basis

/// Orthonormal real Fourier basis on [0,1)^d. Mode 1 is the constant; each
/// nonzero frequency m (one representative of +-m) gives sqrt2 cos(2 pi m.x)
/// followed by sqrt2 sin(2 pi m.x). Ordered by |m|, ties lexicographic.
class TorusBasis {
 public:
  enum class Kind { Constant, Cosine, Sine };

  struct Mode {
    std::vector<int> frequency;
    Kind kind;
    long norm_sq;  // |m|^2
  };

  /// `mean_zero` drops the constant mode, giving a basis of mean-zero
  /// functions whose first mode is the lowest cosine.
  TorusBasis(int dimension, std::size_t n_modes, bool mean_zero = false)
      : dimension_(dimension), mean_zero_(mean_zero) {
    if (dimension < 1) throw ConfigError("TorusBasis: dimension must be positive");
    if (n_modes == 0) throw ConfigError("TorusBasis: need at least one mode");
    build(n_modes);
  }

  bool mean_zero() const noexcept { return mean_zero_; }

  int dimension() const noexcept { return dimension_; }
  std::size_t size() const noexcept { return modes_.size(); }
  const Mode& mode(std::size_t i) const { return modes_.at(i); }

  /// 4 pi^2 |m|^2 for mode index i (0-based): the -Laplacian eigenvalue.
  double omega_sq(std::size_t i) const {
    return 4.0 * std::numbers::pi * std::numbers::pi * static_cast<double>(modes_[i].norm_sq);
  }

  /// sup_x e_i(x)^2.
  double sup_sq(std::size_t i) const { return modes_[i].kind == Kind::Constant ? 1.0 : 2.0; }

  /// e_i(x), i 0-based.
  double eval(std::size_t i, std::span<const double> x) const {
    const Mode& m = modes_[i];
    if (m.kind == Kind::Constant) return 1.0;
    const double phase = 2.0 * std::numbers::pi * dot(m.frequency, x);
    return m.kind == Kind::Cosine ? std::numbers::sqrt2 * std::cos(phase)
                                  : std::numbers::sqrt2 * std::sin(phase);
  }

  /// Fill out[0..count) with e_0(x)..e_{count-1}(x).
  void eval_all(std::span<const double> x, std::span<double> out) const {
    const std::size_t count = std::min(out.size(), modes_.size());
    for (std::size_t i = 0; i < count; ++i) {
      const Mode& m = modes_[i];
      if (m.kind == Kind::Constant) {
        out[i] = 1.0;
        continue;
      }
      // cos/sin pairs share a phase
      const double phase = 2.0 * std::numbers::pi * dot(m.frequency, x);
      if (m.kind == Kind::Cosine) {
        out[i] = std::numbers::sqrt2 * std::cos(phase);
        if (i + 1 < count && modes_[i + 1].kind == Kind::Sine) {
          out[i + 1] = std::numbers::sqrt2 * std::sin(phase);
          ++i;
        }
      } else {
        out[i] = std::numbers::sqrt2 * std::sin(phase);
      }
    }
  }

 private:
  static double dot(const std::vector<int>& m, std::span<const double> x) {
    double s = 0.0;
    for (std::size_t k = 0; k < m.size(); ++k) s += static_cast<double>(m[k]) * x[k];
    return s;
  }

  void build(std::size_t n_modes) {
    // Half-space representatives with |m|^2 <= r2, grown until enough modes.
    const std::size_t needed_freqs = n_modes / 2 + 2;
    long radius = 1;
    std::vector<std::vector<int>> reps;
    for (;;) {
      reps.clear();
      const long r2 = radius * radius;
      std::vector<int> m(static_cast<std::size_t>(dimension_), -static_cast<int>(radius));
      for (;;) {
        long n2 = 0;
        for (int c : m) n2 += static_cast<long>(c) * c;
        if (n2 > 0 && n2 <= r2 && is_representative(m)) reps.push_back(m);
        std::size_t k = 0;
        while (k < m.size() && m[k] == radius) m[k++] = -static_cast<int>(radius);
        if (k == m.size()) break;
        ++m[k];
      }
      if (reps.size() >= needed_freqs) break;
      radius *= 2;
    }
    std::sort(reps.begin(), reps.end(), [](const auto& a, const auto& b) {
      const long na = std::inner_product(a.begin(), a.end(), a.begin(), 0L);
      const long nb = std::inner_product(b.begin(), b.end(), b.begin(), 0L);
      if (na != nb) return na < nb;
      return a < b;
    });
    modes_.reserve(n_modes);
    if (!mean_zero_) modes_.push_back({std::vector<int>(static_cast<std::size_t>(dimension_), 0), Kind::Constant, 0});
    for (const auto& m : reps) {
      if (modes_.size() >= n_modes) break;
      const long n2 = std::inner_product(m.begin(), m.end(), m.begin(), 0L);
      modes_.push_back({m, Kind::Cosine, n2});
      if (modes_.size() >= n_modes) break;
      modes_.push_back({m, Kind::Sine, n2});
    }
  }

  static bool is_representative(const std::vector<int>& m) {
    for (int c : m) {
      if (c != 0) return c > 0;
    }
    return false;
  }

  int dimension_;
  bool mean_zero_ = false;
  std::vector<Mode> modes_;
};

/// sum_i a_i e_i(x).
inline double eval_function(const FunctionCoeffs& u, std::span<const double> x, const TorusBasis& basis) {
  if (u.size() > basis.size()) throw ConfigError("eval_function: more coefficients than basis modes");
  if (x.size() != static_cast<std::size_t>(basis.dimension()))
    throw ConfigError("eval_function: point dimension mismatch");
  double s = 0.0;
  for (std::size_t i = 0; i < u.size(); ++i) {
    const double a = u[i];
    if (a != 0.0) s += a * basis.eval(i, x);
  }
  return s;
}

/// Derived constants of the truncated spectrum: kernel bound R = sup K(x,x),
/// embedding constant kappa_mu^2 = sum lambda_i^mu sup e_i^2, and
/// Q = tr(Sigma^(1/alpha)).
struct SpectrumConstants {
  double kernel_bound;
  double embedding_sq;
  double capacity_trace;
};

inline SpectrumConstants spectrum_constants(const SpectrumSpec& spec) {
  spec.validate();
  SpectrumConstants c{0.0, 0.0, 0.0};
  for (std::size_t i = 1; i <= spec.n_trunc; ++i) {
    const double lam = eigenvalues(spec, i).lambda;
    const double sup = i == 1 ? 1.0 : 2.0;
    c.kernel_bound += lam * sup;
    c.embedding_sq += std::pow(lam, spec.mu) * sup;
    c.capacity_trace += std::pow(lam, 1.0 / spec.alpha);
  }
  return c;
}

}  // namespace specgd
