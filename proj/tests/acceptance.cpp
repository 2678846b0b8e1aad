// Acceptance suite: one PASS/FAIL line per criterion.
//
//   acceptance --config-dir DIR [--expect-fail 9,...] [--only 1,2] [--threads N]
//
// Exit status is 0 when every criterion passes, except those listed with
// --expect-fail, whose outcome is still printed.

#include <specgd/harness.hpp>

#include <CLI11.hpp>

#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <set>
#include <sstream>
#include <string>

using namespace specgd;
using nlohmann::json;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

class Suite {
 public:
  Suite(std::string dir, unsigned threads) : dir_(std::move(dir)), threads_(threads) {}

  ExperimentConfig config(const std::string& name) const {
    ExperimentConfig c = load_config(dir_ + "/" + name + ".json");
    c.threads = threads_;
    return c;
  }

  // Runs are cached so criteria sharing a run do not repeat it.
  const RunReport& report(const std::string& name) {
    auto it = cache_.find(name);
    if (it != cache_.end()) return it->second;
    const auto t0 = std::chrono::steady_clock::now();
    RunReport r = run(config(name));
    times_[name] = seconds_since(t0);
    return cache_.emplace(name, std::move(r)).first->second;
  }

  double seconds(const std::string& name) const { return times_.at(name); }

 private:
  std::string dir_;
  unsigned threads_;
  std::map<std::string, RunReport> cache_;
  std::map<std::string, double> times_;
};

json slopes_entry(const RunReport& r, double gamma) {
  const json s = json::parse(r.file("slopes.json")->content);
  for (const auto& e : s["slopes"])
    if (std::abs(e["gamma_eval"].get<double>() - gamma) < 1e-12) return e;
  throw Error("no slope entry for gamma_eval " + std::to_string(gamma));
}

Outcome rate_criterion(Suite& s, const std::string& cfg, double gamma, double target, double tol, bool timed) {
  const RunReport& r = s.report(cfg);
  const json e = slopes_entry(r, gamma);
  if (!e.contains("slope_scheduled")) return {false, "no slope fitted"};
  const double slope = e["slope_scheduled"], se = e["stderr_scheduled"];
  bool pass = std::abs(slope - target) <= tol;
  std::string d = "slope " + fmt("%.4f", slope) + " +- " + fmt("%.4f", se) + ", target " + fmt("%.4f", target) +
                  " +- " + fmt("%.2f", tol);
  if (timed) {
    const double sec = s.seconds(cfg);
    pass = pass && sec <= 600.0;
    d += ", runtime " + fmt("%.1f", sec) + " s (limit 600 s)";
  }
  return {pass, d};
}

Outcome criterion(int k, Suite& s, unsigned threads) {
  switch (k) {
    case 1:
      return rate_criterion(s, "rates_kernel", 0.0, -2.0 / 3.0, 0.12, true);
    case 2:
      return rate_criterion(s, "rates_kernel", 0.5, -1.0 / 3.0, 0.12, false);
    case 3:
      return rate_criterion(s, "rates_inverse", 0.0, -1.0, 0.15, false);
    case 4: {
      const RunReport& r = s.report("filtercheck");
      const double pd = r.summary["population"]["max_deviation"], ed = r.summary["empirical"]["max_deviation"];
      const std::size_t pt = r.summary["population"]["t_max"], modes = r.summary["empirical"]["modes"];
      const bool pass = pd <= 1e-12 && ed <= 1e-12 && pt >= 1000 && modes <= 8;
      return {pass, "population max dev " + fmt("%.2e", pd) + " over t <= " + std::to_string(pt) +
                        ", empirical max dev " + fmt("%.2e", ed) + " at N = " + std::to_string(modes)};
    }
    case 5: {
      std::size_t checks = 0, viol = 0;
      double worst = 0.0;
      for (double step : {1.0, 0.37, 1e-3}) {
        const FilterSuiteResult f = filter_bound_suite(step, 1024, {0.0, 0.25, 0.5, 0.75, 1.0}, 200);
        checks += f.checks;
        viol += f.residual_violations + f.filter_violations;
        worst = std::max(worst, f.worst_filter_value);
      }
      return {viol == 0, std::to_string(checks) + " checks, " + std::to_string(viol) +
                             " violations, max q_t/(step t) " + fmt("%.4f", worst)};
    }
    case 6: {
      const RunReport& r = s.report("bounds");
      std::size_t specs = 0, passed = 0, total = 0, controls = 0, control_failed = 0;
      for (const auto& v : r.summary["verdicts"]) {
        ++specs;
        for (const auto& c : v["checks"]) {
          ++total;
          passed += c["pass"].get<bool>();
        }
      }
      for (const auto& c : r.summary["negative_controls"]) {
        ++controls;
        control_failed += c["control_failed"].get<bool>();
      }
      const bool pass = specs >= 3 && passed == total && control_failed == controls;
      return {pass, std::to_string(passed) + "/" + std::to_string(total) + " checks over " + std::to_string(specs) +
                        " specs, negative controls failing " + std::to_string(control_failed) + "/" +
                        std::to_string(controls)};
    }
    case 7: {
      const RunReport& r = s.report("lowerbound");
      const json& cb = r.summary["codebook"];
      bool pass = cb["words"].get<std::size_t>() >= 256 && cb["min_pairwise_hamming"].get<std::size_t>() >= 8;
      std::set<double> eps;
      double worst_gap = 0.0;
      for (const auto& f : r.summary["families"]) {
        if (!f["pass"].get<bool>()) pass = false;
        if (!f.contains("certificate")) continue;
        eps.insert(f["epsilon"].get<double>());
        const double e = f["fano"]["epsilon_exponent"], lower = f["lower_rate_exponent"];
        worst_gap = std::max(worst_gap, std::abs(e + lower));
        pass = pass && std::abs(e + lower) <= 4.0 * std::numeric_limits<double>::epsilon() * std::abs(lower);
      }
      pass = pass && eps.count(1e-1) && eps.count(1e-2) && eps.count(1e-3);
      return {pass, std::to_string(cb["words"].get<std::size_t>()) + " words, min Hamming " +
                        std::to_string(cb["min_pairwise_hamming"].get<std::size_t>()) + ", " +
                        std::to_string(eps.size()) + " certified families, exponent gap " + fmt("%.1e", worst_gap)};
    }
    case 8: {
      const IbpSummary ibp = ibp_suite(100, 24, 1.0, 8);
      const bool pass = ibp.pairs == 300 && ibp.max_identity_gap <= 1e-10 && ibp.max_objective_gap <= 1e-10;
      return {pass, std::to_string(ibp.pairs) + " pairs in d = 1, 2, 3, max relative gap " +
                        fmt("%.1e", std::max(ibp.max_identity_gap, ibp.max_objective_gap))};
    }
    case 9: {
      const RunReport& r = s.report("pde");
      std::string d;
      bool pass = true;
      for (const auto& sl : r.summary["slopes"]) {
        const double slope = sl["slope"], theory = sl["theory"];
        pass = pass && std::abs(slope - theory) <= 0.15;
        d += sl["operator"].get<std::string>() + " " + fmt("%.3f", slope) + " (theory " + fmt("%.3f", theory) + ") ";
      }
      for (const auto& o : r.summary["ordering"]) pass = pass && o["smaller_slope"].get<bool>();
      const auto& n = s.config("pde").pde.n_grid;
      pass = pass && s.config("pde").spec.dimension == 1 && n.front() == 256 && n.back() == 4096 &&
             s.config("pde").pde.replications == 10;
      return {pass, d + "over n = 2^8..2^12"};
    }
    case 10: {
      std::string d;
      bool pass = true;
      const auto tmp = std::filesystem::temp_directory_path() / "specgd_acceptance";
      for (const char* name : {"rates_kernel", "phase", "bounds", "lowerbound", "pde", "filtercheck"}) {
        ExperimentConfig c = s.config(name);
        c.threads = 1;
        const auto a = tmp / (std::string(name) + "_a");
        const auto b = tmp / (std::string(name) + "_b");
        std::filesystem::remove_all(a);
        std::filesystem::remove_all(b);
        const RunReport ra = run(c);
        write_outputs(ra, a);
        c.threads = std::max(2u, threads);
        write_outputs(run(c), b);
        bool same = true;
        for (const auto& f : ra.files) same = same && read_file(a / f.name) == read_file(b / f.name);
        pass = pass && same;
        d += std::string(name) + (same ? " same " : " DIFFERENT ");
      }
      std::filesystem::remove_all(tmp);
      return {pass, d + "(threads 1 vs " + std::to_string(std::max(2u, threads)) + ")"};
    }
    default:
      throw Error("unknown criterion");
  }
}

const char* title(int k) {
  static const char* t[] = {"",
                            "classical kernel rate",
                            "Sobolev-norm rate",
                            "inverse-problem rate",
                            "filter-identity oracle",
                            "filter bound suite",
                            "bound-check suite",
                            "lower-bound certification",
                            "integration-by-parts identity",
                            "Sobolev implicit acceleration",
                            "determinism"};
  return t[k];
}

std::set<int> parse_list(const std::string& s) {
  std::set<int> out;
  std::stringstream ss(s);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.insert(std::stoi(tok));
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"acceptance criteria"};
  std::string dir = "configs", expect, only;
  unsigned threads = 1;
  app.add_option("--config-dir", dir, "directory with the shipped configs");
  app.add_option("--expect-fail", expect, "comma-separated criteria whose failure does not fail the run");
  app.add_option("--only", only, "comma-separated subset of criteria");
  app.add_option("--threads", threads, "worker threads");
  CLI11_PARSE(app, argc, argv);

  const std::set<int> expected = parse_list(expect);
  std::set<int> chosen = parse_list(only);
  if (chosen.empty())
    for (int k = 1; k <= 10; ++k) chosen.insert(k);

  Suite suite(dir, threads);
  int unexpected = 0;
  for (int k : chosen) {
    const auto t0 = std::chrono::steady_clock::now();
    Outcome o;
    try {
      o = criterion(k, suite, threads);
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    std::string tag = o.pass ? "PASS" : "FAIL";
    if (!o.pass && expected.count(k)) tag += " (expected failure)";
    if (!o.pass && !expected.count(k)) ++unexpected;
    std::cout << "ACCEPTANCE " << k << ": " << tag << "  " << title(k) << ": " << o.detail << " ["
              << fmt("%.1f", seconds_since(t0)) << " s]" << std::endl;
  }
  return unexpected == 0 ? 0 : 1;
}
