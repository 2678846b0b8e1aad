#pragma once

// Experiment driver: configuration, the six run modes, and CSV/JSON output.
// Every run returns its output files in memory; writing them is separate so
// reruns can be compared byte for byte.

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "error.hpp"
#include "fit.hpp"
#include "lower_bound.hpp"
#include "oracles.hpp"
#include "parallel.hpp"
#include "pde_sobolev.hpp"
#include "random.hpp"
#include "simulate.hpp"
#include "spectral_core.hpp"
#include "theory_bounds.hpp"

namespace specgd {

enum class Mode { Rates, Phase, Bounds, LowerBound, Pde, FilterCheck };

inline std::string mode_name(Mode m) {
  switch (m) {
    case Mode::Rates: return "rates";
    case Mode::Phase: return "phase";
    case Mode::Bounds: return "bounds";
    case Mode::LowerBound: return "lowerbound";
    case Mode::Pde: return "pde";
    case Mode::FilterCheck: return "filtercheck";
  }
  return "?";
}

inline Mode parse_mode(const std::string& s) {
  for (Mode m : {Mode::Rates, Mode::Phase, Mode::Bounds, Mode::LowerBound, Mode::Pde, Mode::FilterCheck})
    if (mode_name(m) == s) return m;
  throw ConfigError("unknown mode '" + s + "'");
}

struct RatesOptions {
  double scan_factor = 4.0;     // empirical optimum searched over t <= scan_factor * t*
  double opt_gap_factor = 3.0;  // allowed scheduled / optimal error ratio at the largest n (ConstLR)
  double tolerance = 0.12;      // |fitted slope + upper exponent|
  double sandwich_margin = 0.15;
};

struct PhaseOptions {
  double alpha_min = 1.25, alpha_max = 6.0;
  std::size_t alpha_points = 20;
  double beta_min = 0.05, beta_max = 3.0;
  std::size_t beta_points = 60;
  bool mu_inverse_alpha = true;  // otherwise the spec's mu is held fixed
};

struct BoundsOptions {
  std::vector<SpectrumSpec> specs;  // empty: the experiment spec only
  double lambda_min = 1e-6, lambda_max = 1.0;
  std::size_t grid_points = 40;
  double gamma_eval = 0.0;
  double negative_control_shift = 0.2;
  double filter_step = 1.0;
  std::size_t filter_t_max = 1024;
  std::vector<double> filter_us{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t filter_x_points = 200;
};

struct LowerBoundOptions {
  std::size_t m = 64;
  std::vector<double> epsilons{1e-1, 1e-2, 1e-3};
  std::size_t n = 1000;
  double gamma_eval = 0.3;
  double budget_c = 1.0;
};

struct PdeOptions {
  std::vector<std::size_t> n_grid{256, 512, 1024, 2048, 4096};
  std::size_t replications = 10;
  double gamma_eval = 0.75;
  std::vector<std::string> operators{"DRM", "PINN"};
  double sobolev_weight = 1.0;
  std::size_t t_cap = 1u << 20;
  bool mean_zero = false;
  double tolerance = 0.15;
  std::size_t ibp_pairs = 100;
  std::size_t ibp_modes = 24;
  double ibp_tolerance = 1e-10;
};

struct FilterCheckOptions {
  std::size_t population_t_max = 1000;
  std::size_t oracle_modes = 8;
  std::size_t oracle_n = 64;
  std::size_t oracle_t_max = 200;
  std::size_t suite_t_max = 1024;
  std::vector<double> us{0.0, 0.25, 0.5, 0.75, 1.0};
  std::size_t x_points = 200;
  double tolerance = 1e-12;
};

struct ExperimentConfig {
  Mode mode = Mode::Rates;
  SpectrumSpec spec;
  std::vector<std::size_t> n_grid;
  std::size_t replications = 20;
  std::vector<double> gammas_eval{0.0};
  NoiseModel noise = NoiseModel::gaussian(0.3);
  std::uint64_t seed = 1;
  unsigned threads = 1;
  double target_delta = 0.05;
  double target_scale = 1.0;
  RatesOptions rates;
  PhaseOptions phase;
  BoundsOptions bounds;
  LowerBoundOptions lowerbound;
  PdeOptions pde;
  FilterCheckOptions filtercheck;

  /// Mode-specific checks. The rates grid must support a slope fit.
  void validate() const {
    spec.validate();
    if (!(noise.sigma >= 0.0 && noise.L >= 0.0)) throw ConfigError("config: noise scales must be nonnegative");
    if (!(target_delta > 0.0)) throw ConfigError("config: target_delta must be positive");
    if (mode == Mode::Rates) {
      if (n_grid.size() < 4) throw ConfigError("config: n_grid needs at least 4 points");
      for (std::size_t k = 1; k < n_grid.size(); ++k)
        if (n_grid[k] <= n_grid[k - 1]) throw ConfigError("config: n_grid must be strictly increasing");
      if (n_grid.front() < 2) throw ConfigError("config: n_grid entries must be at least 2");
      if (std::log10(static_cast<double>(n_grid.back()) / static_cast<double>(n_grid.front())) < 1.5 - 1e-12)
        throw ConfigError("config: n_grid must span at least 1.5 decades");
      if (replications == 0) throw ConfigError("config: replications must be positive");
      if (gammas_eval.empty()) throw ConfigError("config: gammas_eval is empty");
      for (double g : gammas_eval)
        if (!(g >= 0.0 && g < spec.beta)) throw ConfigError("config: gamma_eval must lie in [0, beta)");
      if (!(rates.scan_factor >= 1.0)) throw ConfigError("config: scan_factor must be at least 1");
    }
    if (mode == Mode::Pde) {
      for (std::size_t k = 1; k < pde.n_grid.size(); ++k)
        if (pde.n_grid[k] <= pde.n_grid[k - 1]) throw ConfigError("config: pde.n_grid must be strictly increasing");
    }
  }
};

namespace detail {
inline void reject_unknown(const nlohmann::json& j, const std::vector<std::string>& known, const std::string& where) {
  if (!j.is_object()) throw ConfigError(where + ": expected an object");
  for (const auto& [key, _] : j.items())
    if (std::find(known.begin(), known.end(), key) == known.end())
      throw ConfigError(where + ": unknown key '" + key + "'");
}

template <class T>
void read(const nlohmann::json& j, const char* key, T& out) {
  if (!j.contains(key)) return;
  try {
    out = j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config: bad value for '") + key + "': " + e.what());
  }
}
}  // namespace detail

inline ExperimentConfig parse_config(const nlohmann::json& j) {
  using detail::read;
  detail::reject_unknown(j,
                         {"mode", "spec", "n_grid", "replications", "gammas_eval", "noise", "seed", "threads",
                          "target_delta", "target_scale", "rates", "phase", "bounds", "lowerbound", "pde",
                          "filtercheck"},
                         "config");
  ExperimentConfig c;
  if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
  if (j.contains("spec")) c.spec = j.at("spec").get<SpectrumSpec>();
  read(j, "n_grid", c.n_grid);
  read(j, "replications", c.replications);
  read(j, "gammas_eval", c.gammas_eval);
  read(j, "seed", c.seed);
  read(j, "threads", c.threads);
  read(j, "target_delta", c.target_delta);
  read(j, "target_scale", c.target_scale);
  if (j.contains("noise")) {
    const auto& n = j.at("noise");
    detail::reject_unknown(n, {"sigma", "L"}, "noise");
    double sigma = c.noise.sigma;
    read(n, "sigma", sigma);
    c.noise = NoiseModel::gaussian(sigma);
    read(n, "L", c.noise.L);
  }
  if (j.contains("rates")) {
    const auto& r = j.at("rates");
    detail::reject_unknown(r, {"scan_factor", "opt_gap_factor", "tolerance", "sandwich_margin"}, "rates");
    read(r, "scan_factor", c.rates.scan_factor);
    read(r, "opt_gap_factor", c.rates.opt_gap_factor);
    read(r, "tolerance", c.rates.tolerance);
    read(r, "sandwich_margin", c.rates.sandwich_margin);
  }
  if (j.contains("phase")) {
    const auto& r = j.at("phase");
    detail::reject_unknown(r,
                           {"alpha_min", "alpha_max", "alpha_points", "beta_min", "beta_max", "beta_points",
                            "mu_inverse_alpha"},
                           "phase");
    read(r, "alpha_min", c.phase.alpha_min);
    read(r, "alpha_max", c.phase.alpha_max);
    read(r, "alpha_points", c.phase.alpha_points);
    read(r, "beta_min", c.phase.beta_min);
    read(r, "beta_max", c.phase.beta_max);
    read(r, "beta_points", c.phase.beta_points);
    read(r, "mu_inverse_alpha", c.phase.mu_inverse_alpha);
  }
  if (j.contains("bounds")) {
    const auto& r = j.at("bounds");
    detail::reject_unknown(r,
                           {"specs", "lambda_min", "lambda_max", "grid_points", "gamma_eval",
                            "negative_control_shift", "filter_step", "filter_t_max", "filter_us",
                            "filter_x_points"},
                           "bounds");
    read(r, "specs", c.bounds.specs);
    read(r, "lambda_min", c.bounds.lambda_min);
    read(r, "lambda_max", c.bounds.lambda_max);
    read(r, "grid_points", c.bounds.grid_points);
    read(r, "gamma_eval", c.bounds.gamma_eval);
    read(r, "negative_control_shift", c.bounds.negative_control_shift);
    read(r, "filter_step", c.bounds.filter_step);
    read(r, "filter_t_max", c.bounds.filter_t_max);
    read(r, "filter_us", c.bounds.filter_us);
    read(r, "filter_x_points", c.bounds.filter_x_points);
  }
  if (j.contains("lowerbound")) {
    const auto& r = j.at("lowerbound");
    detail::reject_unknown(r, {"m", "epsilons", "n", "gamma_eval", "budget_c"}, "lowerbound");
    read(r, "m", c.lowerbound.m);
    read(r, "epsilons", c.lowerbound.epsilons);
    read(r, "n", c.lowerbound.n);
    read(r, "gamma_eval", c.lowerbound.gamma_eval);
    read(r, "budget_c", c.lowerbound.budget_c);
  }
  if (j.contains("pde")) {
    const auto& r = j.at("pde");
    detail::reject_unknown(r,
                           {"n_grid", "replications", "gamma_eval", "operators", "sobolev_weight", "t_cap",
                            "mean_zero", "tolerance", "ibp_pairs", "ibp_modes", "ibp_tolerance"},
                           "pde");
    read(r, "n_grid", c.pde.n_grid);
    read(r, "replications", c.pde.replications);
    read(r, "gamma_eval", c.pde.gamma_eval);
    read(r, "operators", c.pde.operators);
    read(r, "sobolev_weight", c.pde.sobolev_weight);
    read(r, "t_cap", c.pde.t_cap);
    read(r, "mean_zero", c.pde.mean_zero);
    read(r, "tolerance", c.pde.tolerance);
    read(r, "ibp_pairs", c.pde.ibp_pairs);
    read(r, "ibp_modes", c.pde.ibp_modes);
    read(r, "ibp_tolerance", c.pde.ibp_tolerance);
  }
  if (j.contains("filtercheck")) {
    const auto& r = j.at("filtercheck");
    detail::reject_unknown(r,
                           {"population_t_max", "oracle_modes", "oracle_n", "oracle_t_max", "suite_t_max", "us",
                            "x_points", "tolerance"},
                           "filtercheck");
    read(r, "population_t_max", c.filtercheck.population_t_max);
    read(r, "oracle_modes", c.filtercheck.oracle_modes);
    read(r, "oracle_n", c.filtercheck.oracle_n);
    read(r, "oracle_t_max", c.filtercheck.oracle_t_max);
    read(r, "suite_t_max", c.filtercheck.suite_t_max);
    read(r, "us", c.filtercheck.us);
    read(r, "x_points", c.filtercheck.x_points);
    read(r, "tolerance", c.filtercheck.tolerance);
  }
  c.validate();
  return c;
}

inline ExperimentConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("config '" + path + "' is not valid JSON: " + e.what());
  }
  return parse_config(j);
}

struct OutputFile {
  std::string name;
  std::string content;
};

struct RunReport {
  Mode mode = Mode::Rates;
  bool pass = false;
  nlohmann::json summary;
  std::vector<OutputFile> files;

  const OutputFile* file(const std::string& name) const {
    for (const auto& f : files)
      if (f.name == name) return &f;
    return nullptr;
  }
};

inline void write_outputs(const RunReport& report, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  for (const auto& f : report.files) {
    std::ofstream out(dir / f.name, std::ios::binary);
    if (!out) throw Error("cannot write '" + (dir / f.name).string() + "'");
    out << f.content;
  }
}

namespace detail {
inline std::string dump(const nlohmann::json& j) { return j.dump(2) + "\n"; }

inline nlohmann::json finite_or_null(double v) { return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(); }

struct MeanSe {
  double mean = 0.0;
  double se = 0.0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
  MeanSe r;
  if (v.empty()) return r;
  for (double x : v) r.mean += x;
  r.mean /= static_cast<double>(v.size());
  if (v.size() > 1) {
    double ss = 0.0;
    for (double x : v) ss += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(ss / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
  }
  return r;
}
}  // namespace detail

// ---------------------------------------------------------------------------
// rates

struct RatesCell {
  std::size_t n = 0;
  std::size_t replication = 0;
  std::size_t t_star = 0;
  std::vector<double> err_scheduled;  // per gamma
  std::vector<double> err_opt;
  std::vector<std::size_t> t_opt;
  std::string error;  // non-empty when the replication failed
};

/// Scheduled-stop and empirical-optimum errors over n and replications,
/// with log-log slopes of the replication-mean squared error.
inline RunReport run_rates(const ExperimentConfig& cfg) {
  cfg.validate();
  const SpectrumSpec& s = cfg.spec;
  const SpectralModel model(s);
  const TorusBasis basis(s.dimension, s.n_trunc);
  const FunctionCoeffs target = make_target(s, cfg.target_delta, cfg.target_scale);
  const std::size_t G = cfg.gammas_eval.size(), R = cfg.replications;

  std::vector<StoppingPlan> plans;
  for (std::size_t n : cfg.n_grid) plans.push_back(stopping_schedule(s, n, cfg.gammas_eval));

  std::vector<RatesCell> cells(cfg.n_grid.size() * R);
  parallel_for(cells.size(), cfg.threads, [&](std::size_t slot) {
    const std::size_t a = slot / R;
    RatesCell& c = cells[slot];
    c.n = cfg.n_grid[a];
    c.replication = slot % R;
    c.t_star = plans[a].iterations;
    try {
      const Dataset data = sample_dataset(model, basis, target, c.n, cfg.noise, hash_words({cfg.seed, c.n, c.replication}));
      const EmpiricalOperator op(data, model, basis);
      const auto horizon = static_cast<std::size_t>(std::ceil(cfg.rates.scan_factor * static_cast<double>(c.t_star)));
      const GDConfig gd = GDConfig::make(op.default_step() * plans[a].gamma_factor, horizon, 1, true, op);
      const Trajectory tr = gd_run(op, model, gd, target, cfg.gammas_eval);
      for (std::size_t g = 0; g < G; ++g) {
        c.err_scheduled.push_back(tr.records[c.t_star].err_sq_average[g]);
        double best = std::numeric_limits<double>::infinity();
        std::size_t arg = 0;
        for (const auto& rec : tr.records) {
          if (rec.err_sq_average[g] < best) {
            best = rec.err_sq_average[g];
            arg = rec.t;
          }
        }
        c.err_opt.push_back(best);
        c.t_opt.push_back(arg);
      }
    } catch (const DivergenceError& e) {
      c.error = e.what();
    } catch (const StabilityError& e) {
      c.error = e.what();
    }
  });

  std::ostringstream csv;
  csv << "n,replication,gamma_eval,err_sq_scheduled,err_sq_opt,t_star,t_opt\n" << std::setprecision(17);
  nlohmann::json errors = nlohmann::json::array();
  for (const auto& c : cells) {
    if (!c.error.empty()) {
      for (double g : cfg.gammas_eval) csv << c.n << ',' << c.replication << ',' << g << ",nan,nan," << c.t_star << ",0\n";
      errors.push_back({{"n", c.n}, {"replication", c.replication}, {"error", c.error}});
      continue;
    }
    for (std::size_t g = 0; g < G; ++g)
      csv << c.n << ',' << c.replication << ',' << cfg.gammas_eval[g] << ',' << c.err_scheduled[g] << ','
          << c.err_opt[g] << ',' << c.t_star << ',' << c.t_opt[g] << '\n';
  }

  const Regime regime = regime_classify(s);
  nlohmann::json slopes = nlohmann::json::array();
  bool all_pass = true;
  for (std::size_t g = 0; g < G; ++g) {
    std::vector<std::pair<double, double>> sched_pts, opt_pts;
    nlohmann::json per_n = nlohmann::json::array();
    double gap_at_largest = std::numeric_limits<double>::quiet_NaN();
    for (std::size_t a = 0; a < cfg.n_grid.size(); ++a) {
      std::vector<double> es, eo;
      bool failed = false;
      for (std::size_t r = 0; r < R; ++r) {
        const RatesCell& c = cells[a * R + r];
        if (!c.error.empty()) {
          failed = true;
          break;
        }
        es.push_back(c.err_scheduled[g]);
        eo.push_back(c.err_opt[g]);
      }
      if (failed) {
        per_n.push_back({{"n", cfg.n_grid[a]}, {"error", "replication diverged"}});
        continue;
      }
      const auto ms = detail::mean_se(es), mo = detail::mean_se(eo);
      const auto n = static_cast<double>(cfg.n_grid[a]);
      sched_pts.emplace_back(n, ms.mean);
      opt_pts.emplace_back(n, mo.mean);
      per_n.push_back({{"n", cfg.n_grid[a]}, {"t_star", plans[a].iterations}, {"mean_err_sq_scheduled", ms.mean},
                       {"se_err_sq_scheduled", ms.se}, {"mean_err_sq_opt", mo.mean}, {"se_err_sq_opt", mo.se}});
      if (a + 1 == cfg.n_grid.size()) gap_at_largest = ms.mean / mo.mean;
    }
    const double g_eval = cfg.gammas_eval[g];
    const double upper = rate_exponent(s, g_eval, BoundKind::Upper);
    const double lower = rate_exponent(s, g_eval, BoundKind::Lower);
    nlohmann::json entry{{"gamma_eval", g_eval},          {"regime", regime_name(regime)},
                         {"upper_exponent", upper},       {"lower_exponent", lower},
                         {"theory_slope", -upper},        {"per_n", per_n}};
    bool pass = sched_pts.size() >= 3;
    if (pass) {
      const SlopeFit fs = fit_slope(sched_pts), fo = fit_slope(opt_pts);
      entry["slope_scheduled"] = fs.slope;
      entry["stderr_scheduled"] = fs.stderr_;
      entry["slope_opt"] = fo.slope;
      entry["stderr_opt"] = fo.stderr_;
      const bool within = std::abs(fs.slope + upper) <= cfg.rates.tolerance;
      entry["within_tolerance"] = within;
      pass = pass && within;
      if (s.beta >= s.mu) {
        const bool sandwich = fs.slope >= -lower - cfg.rates.sandwich_margin && fs.slope <= -upper + cfg.rates.sandwich_margin;
        entry["sandwich"] = sandwich;
        pass = pass && sandwich;
      }
    } else {
      entry["error"] = "fewer than 3 sample sizes without divergence";
    }
    entry["gap_at_largest_n"] = detail::finite_or_null(gap_at_largest);
    if (regime == Regime::ConstLR) {
      const bool gap_ok = std::isfinite(gap_at_largest) && gap_at_largest <= cfg.rates.opt_gap_factor;
      entry["gap_ok"] = gap_ok;
      pass = pass && gap_ok;
    }
    entry["pass"] = pass;
    all_pass = all_pass && pass;
    slopes.push_back(entry);
  }

  RunReport rep;
  rep.mode = Mode::Rates;
  rep.pass = all_pass && errors.empty();
  rep.summary = {{"mode", "rates"}, {"spec", s},          {"seed", cfg.seed},
                 {"slopes", slopes}, {"errors", errors}, {"pass", rep.pass}};
  rep.files.push_back({"rates.csv", csv.str()});
  rep.files.push_back({"slopes.json", detail::dump(rep.summary)});
  return rep;
}

// ---------------------------------------------------------------------------
// phase

inline RunReport run_phase(const ExperimentConfig& cfg) {
  const PhaseOptions& o = cfg.phase;
  if (o.alpha_points < 2 || o.beta_points < 2) throw ConfigError("phase: need at least 2 points per axis");
  if (!(o.alpha_min > 1.0 && o.alpha_max > o.alpha_min && o.beta_min > 0.0 && o.beta_max > o.beta_min))
    throw ConfigError("phase: bad axis ranges");
  std::ostringstream csv;
  csv << "alpha,beta,mu,regime,lower_curve,upper_curve,upper_exponent,lower_exponent\n" << std::setprecision(17);
  std::size_t cells = 0, skipped = 0, order_violations = 0;
  auto rank = [](Regime r) { return r == Regime::SubOptimal ? 0 : r == Regime::ConstLR ? 1 : 2; };
  for (std::size_t ia = 0; ia < o.alpha_points; ++ia) {
    const double alpha = o.alpha_min + (o.alpha_max - o.alpha_min) * static_cast<double>(ia) / static_cast<double>(o.alpha_points - 1);
    int prev = -1;
    for (std::size_t ib = 0; ib < o.beta_points; ++ib) {
      const double beta = o.beta_min + (o.beta_max - o.beta_min) * static_cast<double>(ib) / static_cast<double>(o.beta_points - 1);
      SpectrumSpec s = cfg.spec;
      s.alpha = alpha;
      s.beta = beta;
      if (o.mu_inverse_alpha) s.mu = 1.0 / alpha;
      try {
        s.validate();
      } catch (const ConfigError&) {
        ++skipped;
        continue;
      }
      const Regime r = regime_classify(s);
      const RegimeThresholds th = regime_thresholds(s);
      double up = std::numeric_limits<double>::quiet_NaN();
      if (r != Regime::SubOptimal || s.mu * s.alpha + s.p > 0.0) up = rate_exponent(s, 0.0, BoundKind::Upper);
      const double lo = rate_exponent(s, 0.0, BoundKind::Lower);
      csv << alpha << ',' << beta << ',' << s.mu << ',' << regime_name(r) << ',' << th.lower << ',' << th.upper << ',';
      if (std::isfinite(up)) csv << up; else csv << "nan";
      csv << ',' << lo << '\n';
      ++cells;
      if (rank(r) < prev) ++order_violations;
      prev = rank(r);
    }
  }
  RunReport rep;
  rep.mode = Mode::Phase;
  rep.pass = order_violations == 0 && cells > 0;
  rep.summary = {{"mode", "phase"},          {"cells", cells}, {"skipped_invalid", skipped},
                 {"order_violations", order_violations}, {"pass", rep.pass}};
  rep.files.push_back({"phase.csv", csv.str()});
  rep.files.push_back({"phase.json", detail::dump(rep.summary)});
  return rep;
}

// ---------------------------------------------------------------------------
// bounds

inline RunReport run_bounds(const ExperimentConfig& cfg) {
  const BoundsOptions& o = cfg.bounds;
  const std::vector<SpectrumSpec> specs = o.specs.empty() ? std::vector<SpectrumSpec>{cfg.spec} : o.specs;
  const std::vector<double> grid = log_grid(o.lambda_min, o.lambda_max, o.grid_points);
  BoundCheckOptions opt;
  opt.gamma_eval = o.gamma_eval;
  opt.target_delta = cfg.target_delta;

  std::ostringstream csv;
  csv << "spec,quantity,lambda,value,envelope,ratio\n" << std::setprecision(17);
  nlohmann::json verdicts = nlohmann::json::array();
  bool all_pass = true;
  for (std::size_t k = 0; k < specs.size(); ++k) {
    std::vector<BoundCheckReport> reports(all_quantities().size());
    parallel_for(reports.size(), cfg.threads,
                 [&](std::size_t q) { reports[q] = bound_check(all_quantities()[q], specs[k], grid, opt); });
    nlohmann::json per{{"spec_index", k}, {"spec", specs[k]}, {"checks", nlohmann::json::array()}};
    for (const auto& r : reports) {
      for (std::size_t i = 0; i < r.lambdas.size(); ++i)
        csv << k << ',' << r.quantity << ',' << r.lambdas[i] << ',' << r.values[i] << ',' << r.envelopes[i] << ','
            << r.ratios[i] << '\n';
      per["checks"].push_back(r.verdict());
      all_pass = all_pass && r.pass;
    }
    nlohmann::json printed = nlohmann::json::array();
    for (const auto& pe : printed_envelopes(specs[k])) {
      const BoundCheckReport r = bound_check(pe.quantity, specs[k], grid, opt, &pe.exponent);
      printed.push_back({{"label", pe.label}, {"exponent", pe.exponent}, {"pass", r.pass}});
    }
    per["alternative_envelopes"] = printed;  // informational
    verdicts.push_back(per);
  }

  // every quantity must fail once its envelope is made too steep
  BoundCheckOptions neg = opt;
  neg.exponent_shift = o.negative_control_shift;
  nlohmann::json controls = nlohmann::json::array();
  for (Quantity q : all_quantities()) {
    const BoundCheckReport r = bound_check(q, specs.front(), grid, neg);
    controls.push_back({{"quantity", r.quantity}, {"shift", o.negative_control_shift}, {"control_failed", !r.pass}});
    all_pass = all_pass && !r.pass;
  }

  const FilterSuiteResult fs = filter_bound_suite(o.filter_step, o.filter_t_max, o.filter_us, o.filter_x_points);
  all_pass = all_pass && fs.pass();

  RunReport rep;
  rep.mode = Mode::Bounds;
  rep.pass = all_pass;
  rep.summary = {{"mode", "bounds"},
                 {"grid", {{"lambda_min", o.lambda_min}, {"lambda_max", o.lambda_max}, {"points", o.grid_points}}},
                 {"verdicts", verdicts},
                 {"negative_controls", controls},
                 {"filter_suite",
                  {{"checks", fs.checks},
                   {"residual_violations", fs.residual_violations},
                   {"filter_violations", fs.filter_violations},
                   {"shrinkage_violations", fs.shrinkage_violations},
                   {"worst_filter_value", fs.worst_filter_value},
                   {"pass", fs.pass()}}},
                 {"pass", all_pass}};
  rep.files.push_back({"bounds.csv", csv.str()});
  rep.files.push_back({"bounds.json", detail::dump(rep.summary)});
  return rep;
}

// ---------------------------------------------------------------------------
// lower bound

inline RunReport run_lowerbound(const ExperimentConfig& cfg) {
  const LowerBoundOptions& o = cfg.lowerbound;
  const SpectrumSpec& s = cfg.spec;
  const Codebook code = gilbert_varshamov(o.m, hash_words({cfg.seed, o.m}));
  const std::size_t want_words = std::size_t{1} << ((o.m + 7) / 8);
  const std::size_t want_dist = (o.m + 7) / 8;
  const bool code_ok = code.size() >= want_words && code.min_pairwise_hamming >= want_dist;

  nlohmann::json families = nlohmann::json::array();
  nlohmann::json per_eps = nlohmann::json::array();
  bool all_pass = code_ok;
  const double lower = rate_exponent(s, o.gamma_eval, BoundKind::Lower);
  for (double eps : o.epsilons) {
    nlohmann::json e{{"epsilon", eps}};
    try {
      const HypothesisFamily fam = build_hypotheses(s, eps, code, o.gamma_eval, o.budget_c);
      const FamilyCertificate cert = certify_family(fam, s, o.budget_c);
      const FanoResult fano = fano_bound(fam, s, o.n, cfg.noise);
      const double exp_gap = std::abs(fano.epsilon_exponent + lower);
      e["certificate"] = cert.to_json();
      e["fano"] = {{"n", o.n},
                   {"mutual_info_bound", fano.mutual_info_bound},
                   {"failure_prob_lower_bound", fano.failure_prob_lower_bound},
                   {"epsilon_exponent", fano.epsilon_exponent},
                   {"epsilon_rate", fano.epsilon_rate}};
      e["lower_rate_exponent"] = lower;
      e["exponent_gap"] = exp_gap;
      const bool pass = cert.pass() && exp_gap <= 1e-15;
      e["pass"] = pass;
      all_pass = all_pass && pass;
      families.push_back(fam.to_json());
    } catch (const BudgetError& err) {
      e["error"] = err.what();
      e["pass"] = false;
      all_pass = false;
    }
    per_eps.push_back(e);
  }
  RunReport rep;
  rep.mode = Mode::LowerBound;
  rep.pass = all_pass;
  rep.summary = {{"mode", "lowerbound"},
                 {"spec", s},
                 {"codebook",
                  {{"m", o.m},
                   {"words", code.size()},
                   {"required_words", want_words},
                   {"min_pairwise_hamming", code.min_pairwise_hamming},
                   {"required_distance", want_dist},
                   {"verified_exhaustively", true},
                   {"pass", code_ok}}},
                 {"families", per_eps},
                 {"pass", all_pass}};
  rep.files.push_back({"lowerbound.json", detail::dump(rep.summary)});
  rep.files.push_back({"lowerbound_families.json", families.dump() + "\n"});
  return rep;
}

// ---------------------------------------------------------------------------
// pde

inline PdeOperatorSet make_operator_set(const std::string& name, int d, const TorusBasis& basis, double weight) {
  if (name == "DRM") return drm_operators(d, basis);
  if (name == "PINN") return pinn_operators(d, basis);
  if (name == "SOBOLEV_PINN") return sobolev_pinn_operators(d, basis, weight);
  throw ConfigError("pde: unknown operator '" + name + "'");
}

struct IbpSummary {
  std::size_t pairs = 0;
  double max_identity_gap = 0.0;   // relative
  double max_objective_gap = 0.0;  // relative
};

/// Random band-limited (u, f) pairs in d = 1, 2, 3.
inline IbpSummary ibp_suite(std::size_t pairs, std::size_t modes, double weight, std::uint64_t seed) {
  IbpSummary out;
  for (int d = 1; d <= 3; ++d) {
    const TorusBasis basis(d, modes);
    RngStream rng(hash_words({seed, static_cast<std::uint64_t>(d)}), 11);
    for (std::size_t k = 0; k < pairs; ++k) {
      Eigen::VectorXd u(static_cast<Eigen::Index>(modes)), f(static_cast<Eigen::Index>(modes));
      for (Eigen::Index i = 0; i < u.size(); ++i) {
        u[i] = rng.normal();
        f[i] = rng.normal();
      }
      const FunctionCoeffs fu(u), ff(f);
      const SobolevObjective obj = sobolev_objective(fu, ff, weight, basis);
      double scale = 0.0;
      for (std::size_t i = 0; i < modes; ++i)
        scale += basis.omega_sq(i) * (u[static_cast<Eigen::Index>(i)] * u[static_cast<Eigen::Index>(i)] +
                                      f[static_cast<Eigen::Index>(i)] * f[static_cast<Eigen::Index>(i)]);
      out.max_identity_gap = std::max(out.max_identity_gap, ibp_identity_check(fu, ff, basis) / scale);
      out.max_objective_gap = std::max(out.max_objective_gap, std::abs(obj.direct - obj.expanded) / std::abs(obj.direct));
      ++out.pairs;
    }
  }
  return out;
}

inline RunReport run_pde(const ExperimentConfig& cfg) {
  const PdeOptions& o = cfg.pde;
  const SpectrumSpec& s = cfg.spec;
  const TorusBasis basis(s.dimension, s.n_trunc, o.mean_zero);
  std::vector<PdeOperatorSet> sets;
  for (const auto& name : o.operators) sets.push_back(make_operator_set(name, s.dimension, basis, o.sobolev_weight));

  AccelerationConfig ac;
  ac.n_grid = o.n_grid;
  ac.replications = o.replications;
  ac.gamma_eval = o.gamma_eval;
  ac.sigma = cfg.noise.sigma;
  ac.target_delta = cfg.target_delta;
  ac.target_scale = cfg.target_scale;
  ac.t_cap = o.t_cap;
  ac.seed = cfg.seed;
  ac.threads = cfg.threads;
  ac.mean_zero = o.mean_zero;
  const AccelerationResult res = acceleration_experiment(s, sets, ac);

  nlohmann::json slopes = res.summary();
  bool all_pass = true;
  for (std::size_t k = 0; k < res.slopes.size(); ++k) {
    const bool within = std::abs(res.slopes[k].slope - res.slopes[k].theory) <= o.tolerance;
    slopes[k]["within_tolerance"] = within;
    all_pass = all_pass && within;
  }
  nlohmann::json ordering = nlohmann::json::array();
  for (std::size_t a = 0; a < res.slopes.size(); ++a)
    for (std::size_t b = 0; b < res.slopes.size(); ++b) {
      if (res.slopes[a].op == "DRM" && res.slopes[b].op != "DRM") {
        const bool faster = res.slopes[b].slope < res.slopes[a].slope;
        ordering.push_back({{"operator", res.slopes[b].op}, {"baseline", "DRM"}, {"smaller_slope", faster}});
        all_pass = all_pass && faster;
      }
    }

  const IbpSummary ibp = ibp_suite(o.ibp_pairs, o.ibp_modes, o.sobolev_weight, cfg.seed);
  const bool ibp_ok = ibp.max_identity_gap <= o.ibp_tolerance && ibp.max_objective_gap <= o.ibp_tolerance;
  all_pass = all_pass && ibp_ok;

  nlohmann::json symbols = nlohmann::json::array();
  for (const auto& set : sets)
    symbols.push_back({{"operator", set.name}, {"equivalent_p", set.equivalent_p}, {"equivalent_q", set.equivalent_q}});

  RunReport rep;
  rep.mode = Mode::Pde;
  rep.pass = all_pass;
  rep.summary = {{"mode", "pde"},
                 {"spec", s},
                 {"gamma_eval", o.gamma_eval},
                 {"mean_zero", o.mean_zero},
                 {"symbols", symbols},
                 {"slopes", slopes},
                 {"ordering", ordering},
                 {"integration_by_parts",
                  {{"pairs", ibp.pairs},
                   {"max_identity_gap", ibp.max_identity_gap},
                   {"max_objective_gap", ibp.max_objective_gap},
                   {"pass", ibp_ok}}},
                 {"pass", all_pass}};
  std::ostringstream csv;
  res.write_csv(csv);
  rep.files.push_back({"pde.csv", csv.str()});
  rep.files.push_back({"pde.json", detail::dump(rep.summary)});
  return rep;
}

// ---------------------------------------------------------------------------
// filter check

inline RunReport run_filtercheck(const ExperimentConfig& cfg) {
  const FilterCheckOptions& o = cfg.filtercheck;

  // population: iterated recursion vs closed-form filter
  const SpectralModel model(cfg.spec);
  const FunctionCoeffs target = make_target(cfg.spec, cfg.target_delta, cfg.target_scale);
  const double step = 0.9 / model.population_diagonal().maxCoeff();
  const auto recursion = oracle::population_recursion(model, target, step, o.population_t_max);
  double pop_dev = 0.0;
  for (std::size_t t = 1; t <= o.population_t_max; ++t) {
    const PopulationResult pr = population_gd(model, target, t, step, {});
    pop_dev = std::max(pop_dev, (pr.averaged.coeffs - recursion[t]).cwiseAbs().maxCoeff());
  }

  // empirical: gd_run vs entrywise recursion on a small model
  SpectrumSpec small = cfg.spec;
  small.n_trunc = o.oracle_modes;
  const SpectralModel sm(small);
  const TorusBasis basis(small.dimension, small.n_trunc);
  const FunctionCoeffs st = make_target(small, cfg.target_delta, cfg.target_scale);
  const Dataset data = sample_dataset(sm, basis, st, o.oracle_n, cfg.noise, hash_words({cfg.seed, o.oracle_n}));
  const EmpiricalOperator op(data, sm, basis);
  const GDConfig gd = GDConfig::make(op.default_step(), o.oracle_t_max, 1, true, op, true);
  const Trajectory tr = gd_run(op, sm, gd, st, {0.0});
  const auto dense = oracle::dense_gd(data, sm, basis, gd.step, o.oracle_t_max);
  double emp_dev = 0.0;
  for (std::size_t t = 0; t <= o.oracle_t_max; ++t) {
    for (std::size_t i = 0; i < o.oracle_modes; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      emp_dev = std::max(emp_dev, std::abs(tr.iterates[t][ii] - dense.theta[t][i]));
      emp_dev = std::max(emp_dev, std::abs(tr.averaged_iterates[t][ii] - dense.averaged[t][i]));
    }
  }

  const FilterSuiteResult fs = filter_bound_suite(1.0, o.suite_t_max, o.us, o.x_points);
  const bool pop_ok = pop_dev <= o.tolerance, emp_ok = emp_dev <= o.tolerance;

  RunReport rep;
  rep.mode = Mode::FilterCheck;
  rep.pass = pop_ok && emp_ok && fs.pass();
  rep.summary = {{"mode", "filtercheck"},
                 {"population", {{"t_max", o.population_t_max}, {"max_deviation", pop_dev}, {"pass", pop_ok}}},
                 {"empirical",
                  {{"modes", o.oracle_modes}, {"n", o.oracle_n}, {"t_max", o.oracle_t_max},
                   {"max_deviation", emp_dev}, {"pass", emp_ok}}},
                 {"filter_suite",
                  {{"checks", fs.checks},
                   {"residual_violations", fs.residual_violations},
                   {"filter_violations", fs.filter_violations},
                   {"shrinkage_violations", fs.shrinkage_violations},
                   {"worst_filter_value", fs.worst_filter_value},
                   {"pass", fs.pass()}}},
                 {"pass", rep.pass}};
  rep.files.push_back({"filtercheck.json", detail::dump(rep.summary)});
  return rep;
}

inline RunReport run(const ExperimentConfig& cfg) {
  switch (cfg.mode) {
    case Mode::Rates: return run_rates(cfg);
    case Mode::Phase: return run_phase(cfg);
    case Mode::Bounds: return run_bounds(cfg);
    case Mode::LowerBound: return run_lowerbound(cfg);
    case Mode::Pde: return run_pde(cfg);
    case Mode::FilterCheck: return run_filtercheck(cfg);
  }
  throw ConfigError("unknown mode");
}

}  // namespace specgd
