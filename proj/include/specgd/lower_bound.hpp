#pragma once

// Packing construction for the minimax lower bound: a Varshamov-Gilbert
// binary code, the hypothesis functions indexed by its words, and the Fano
// inequality evaluated on them.

#include <json.hpp>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "error.hpp"
#include "random.hpp"
#include "spectral_core.hpp"
#include "theory_bounds.hpp"

namespace specgd {

/// Binary words of length m packed into 64-bit blocks.
struct Codebook {
  std::size_t m = 0;
  std::vector<std::vector<std::uint64_t>> words;
  std::size_t min_pairwise_hamming = 0;

  std::size_t size() const noexcept { return words.size(); }

  bool bit(std::size_t w, std::size_t i) const { return (words[w][i / 64] >> (i % 64)) & 1u; }

  std::size_t weight(std::size_t w) const {
    std::size_t s = 0;
    for (auto b : words[w]) s += static_cast<std::size_t>(std::popcount(b));
    return s;
  }

  std::size_t hamming(std::size_t a, std::size_t b) const { return hamming(words[a], words[b]); }

  static std::size_t hamming(const std::vector<std::uint64_t>& a, const std::vector<std::uint64_t>& b) {
    std::size_t s = 0;
    for (std::size_t k = 0; k < a.size(); ++k) s += static_cast<std::size_t>(std::popcount(a[k] ^ b[k]));
    return s;
  }

  std::string bitstring(std::size_t w) const {
    std::string s(m, '0');
    for (std::size_t i = 0; i < m; ++i)
      if (bit(w, i)) s[i] = '1';
    return s;
  }
};

/// Exhaustive O(M^2 m) minimum pairwise distance.
inline std::size_t min_pairwise_distance(const Codebook& c) {
  std::size_t best = std::numeric_limits<std::size_t>::max();
  for (std::size_t a = 0; a < c.size(); ++a)
    for (std::size_t b = a + 1; b < c.size(); ++b) best = std::min(best, c.hamming(a, b));
  return best;
}

/// Randomized greedy search for 2^ceil(m/8) words at pairwise distance at
/// least ceil(m/8), starting from the zero word. The result is verified
/// exhaustively before it is returned.
inline Codebook gilbert_varshamov(std::size_t m, std::uint64_t seed, std::size_t max_tries = 1u << 20) {
  if (m < 8) throw ConfigError("gilbert_varshamov: m must be at least 8");
  if (m > 512) throw ConfigError("gilbert_varshamov: m above 512 is outside the supported range");
  const std::size_t blocks = (m + 63) / 64;
  const std::size_t min_dist = (m + 7) / 8;
  const std::size_t want = std::size_t{1} << ((m + 7) / 8);

  Codebook c;
  c.m = m;
  c.words.emplace_back(blocks, 0);
  RngStream rng(seed, 7);
  std::size_t tries = 0;
  while (c.size() < want) {
    if (tries++ >= max_tries)
      throw BudgetError("gilbert_varshamov: found " + std::to_string(c.size()) + " of " + std::to_string(want) +
                        " words; increase max_tries");
    std::vector<std::uint64_t> cand(blocks);
    for (std::size_t k = 0; k < blocks; ++k) cand[k] = rng.next_bits();
    if (m % 64) cand.back() &= (std::uint64_t{1} << (m % 64)) - 1;
    bool ok = true;
    for (const auto& w : c.words) {
      if (Codebook::hamming(w, cand) < min_dist) {
        ok = false;
        break;
      }
    }
    if (ok) c.words.push_back(std::move(cand));
  }
  c.min_pairwise_hamming = min_pairwise_distance(c);
  if (c.min_pairwise_hamming < min_dist) throw Error("gilbert_varshamov: verification failed");
  return c;
}

struct HypothesisFamily {
  double epsilon = 0.0;
  std::size_t m = 0;
  double gamma_eval = 0.0;
  Codebook code;
  std::vector<FunctionCoeffs> hypotheses;  // length 2m, supported on indices m..2m-1 (0-based)
  std::vector<FunctionCoeffs> images;      // A u

  nlohmann::json to_json() const {
    nlohmann::json j;
    j["epsilon"] = epsilon;
    j["m"] = m;
    j["gamma_eval"] = gamma_eval;
    j["codewords"] = nlohmann::json::array();
    j["coefficients"] = nlohmann::json::array();
    for (std::size_t w = 0; w < hypotheses.size(); ++w) {
      j["codewords"].push_back(code.bitstring(w));
      j["coefficients"].push_back(std::vector<double>(hypotheses[w].coeffs.data(),
                                                      hypotheses[w].coeffs.data() + hypotheses[w].coeffs.size()));
    }
    return j;
  }
};

/// Largest m allowed by the two budgets m <= c eps^(-1/(alpha (s - gamma))),
/// s in {beta, mu}.
inline double m_budget(const SpectrumSpec& s, double epsilon, double order, double gamma_eval, double c) {
  if (!(order > gamma_eval)) return std::numeric_limits<double>::infinity();
  return c * std::pow(epsilon, -1.0 / (s.alpha * (order - gamma_eval)));
}

/// u_w = (eps/m)^1/2 sum_i w_i lambda_{i+m}^(gamma/2) e_{i+m}.
inline HypothesisFamily build_hypotheses(const SpectrumSpec& s, double epsilon, const Codebook& code, double gamma_eval,
                                         double budget_c = 1.0) {
  s.validate();
  const std::size_t m = code.m;
  if (!(epsilon > 0.0)) throw ConfigError("build_hypotheses: epsilon must be positive");
  if (2 * m > s.n_trunc) throw ConfigError("build_hypotheses: 2m exceeds n_trunc");
  if (!(gamma_eval < s.beta)) throw ConfigError("build_hypotheses: gamma_eval must be below beta");
  const double md = static_cast<double>(m);
  if (md > m_budget(s, epsilon, s.beta, gamma_eval, budget_c) * (1.0 + 1e-12))
    throw BudgetError("build_hypotheses: m exceeds the beta budget c eps^(-1/(alpha(beta-gamma)))");
  if (md > m_budget(s, epsilon, s.mu, gamma_eval, budget_c) * (1.0 + 1e-12))
    throw BudgetError("build_hypotheses: m exceeds the mu budget c eps^(-1/(alpha(mu-gamma)))");

  const SpectralModel model(s);
  HypothesisFamily fam;
  fam.epsilon = epsilon;
  fam.m = m;
  fam.gamma_eval = gamma_eval;
  fam.code = code;
  const double amp = std::sqrt(epsilon / md);
  for (std::size_t w = 0; w < code.size(); ++w) {
    Eigen::VectorXd c = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(2 * m));
    for (std::size_t i = 0; i < m; ++i) {
      if (!code.bit(w, i)) continue;
      const auto idx = static_cast<Eigen::Index>(i + m);
      c[idx] = amp * std::pow(model.lambda()[idx], gamma_eval / 2.0);
    }
    fam.hypotheses.emplace_back(std::move(c));
    fam.images.push_back(apply_operator(fam.hypotheses.back(), Operator::a(), model));
  }
  return fam;
}

struct FamilyCertificate {
  double max_beta_norm_sq = 0.0;
  double max_mu_norm_sq = 0.0;
  double min_separation_sq = 0.0;          // min over pairs of ||u_w - u_w'||_gamma^2
  double max_identity_deviation = 0.0;     // max relative gap to (eps/m) Hamming
  double beta_norm_threshold = 0.0;
  bool beta_ok = false;
  bool separation_ok = false;
  bool identity_ok = false;

  bool pass() const { return beta_ok && separation_ok && identity_ok; }

  nlohmann::json to_json() const {
    return {{"max_beta_norm_sq", max_beta_norm_sq},   {"max_mu_norm_sq", max_mu_norm_sq},
            {"min_separation_sq", min_separation_sq}, {"max_identity_deviation", max_identity_deviation},
            {"beta_norm_threshold", beta_norm_threshold}, {"beta_ok", beta_ok},
            {"separation_ok", separation_ok},         {"identity_ok", identity_ok}};
  }
};

/// Squared beta-norm ceiling implied by the budget: ||u_w||_beta^2 <= eps lambda_2m^(gamma-beta)
/// <= (2c)^(alpha(beta-gamma)) c_lambda^(gamma-beta).
inline double beta_norm_threshold(const SpectrumSpec& s, double gamma_eval, double budget_c = 1.0) {
  return std::pow(2.0 * budget_c, s.alpha * (s.beta - gamma_eval)) * std::pow(s.c_lambda, gamma_eval - s.beta);
}

inline FamilyCertificate certify_family(const HypothesisFamily& fam, const SpectrumSpec& s, double budget_c = 1.0) {
  const SpectralModel model(s);
  const Eigen::VectorXd wg = power_weights(model, fam.gamma_eval).head(static_cast<Eigen::Index>(2 * fam.m));
  const Eigen::VectorXd wb = power_weights(model, s.beta).head(wg.size());
  const Eigen::VectorXd wm = power_weights(model, s.mu).head(wg.size());
  const Eigen::VectorXd zero = Eigen::VectorXd::Zero(wg.size());

  FamilyCertificate cert;
  cert.beta_norm_threshold = beta_norm_threshold(s, fam.gamma_eval, budget_c);
  cert.min_separation_sq = std::numeric_limits<double>::infinity();
  const std::size_t M = fam.hypotheses.size();
  for (std::size_t a = 0; a < M; ++a) {
    const Eigen::VectorXd& ua = fam.hypotheses[a].coeffs;
    cert.max_beta_norm_sq = std::max(cert.max_beta_norm_sq, power_distance_sq(ua, zero, wb));
    cert.max_mu_norm_sq = std::max(cert.max_mu_norm_sq, power_distance_sq(ua, zero, wm));
    for (std::size_t b = a + 1; b < M; ++b) {
      const double d = power_distance_sq(ua, fam.hypotheses[b].coeffs, wg);
      const double expect = fam.epsilon / static_cast<double>(fam.m) * static_cast<double>(fam.code.hamming(a, b));
      cert.min_separation_sq = std::min(cert.min_separation_sq, d);
      cert.max_identity_deviation = std::max(cert.max_identity_deviation, std::abs(d - expect) / expect);
    }
  }
  if (M < 2) cert.min_separation_sq = std::numeric_limits<double>::infinity();
  cert.beta_ok = cert.max_beta_norm_sq <= cert.beta_norm_threshold * (1.0 + 1e-12);
  cert.separation_ok = cert.min_separation_sq >= fam.epsilon / 8.0 * (1.0 - 1e-12);
  cert.identity_ok = cert.max_identity_deviation <= 1e-12;
  return cert;
}

struct FanoResult {
  double mutual_info_bound = 0.0;
  double failure_prob_lower_bound = 0.0;
  double epsilon_exponent = 0.0;  // eps(n) = n^epsilon_exponent
  double epsilon_rate = 0.0;      // eps(n) itself
};

/// I <= n / (2 sbar^2 |V|) sum_j ||f_j - f_0||^2 with sbar = min(sigma, L);
/// P(error) >= 1 - (I + log 2) / log |V|, clamped to [0, 1].
inline FanoResult fano_bound(const HypothesisFamily& fam, const SpectrumSpec& s, std::size_t n, const NoiseModel& noise) {
  const std::size_t M = fam.images.size();
  if (M < 2) throw ConfigError("fano_bound: need at least two hypotheses");
  const double sbar = std::min(noise.sigma, noise.L);
  if (!(sbar > 0.0)) throw ConfigError("fano_bound: noise scale must be positive");
  double sum = 0.0;
  for (std::size_t j = 1; j < M; ++j) sum += (fam.images[j].coeffs - fam.images[0].coeffs).squaredNorm();
  FanoResult r;
  r.mutual_info_bound = static_cast<double>(n) / (2.0 * sbar * sbar * static_cast<double>(M)) * sum;
  r.failure_prob_lower_bound =
      std::clamp(1.0 - (r.mutual_info_bound + std::log(2.0)) / std::log(static_cast<double>(M)), 0.0, 1.0);
  // separation scale at which the Fano bound stays nontrivial
  const double b = std::max(s.beta, s.mu);
  r.epsilon_exponent = -(b - fam.gamma_eval) * s.alpha / (b * s.alpha + 2.0 * (s.p - s.q) + 1.0);
  r.epsilon_rate = std::pow(static_cast<double>(n), r.epsilon_exponent);
  return r;
}

}  // namespace specgd
