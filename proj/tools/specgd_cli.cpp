// specgd: one executable, one subcommand per experiment mode.
// Exit status: 0 when every verdict passes, 1 when some verdict fails,
// 2 on configuration or runtime errors.

#include <specgd/harness.hpp>

#include <CLI11.hpp>

#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"Spectral gradient-descent experiments"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = ".";
  std::optional<unsigned> threads;

  for (const char* name : {"rates", "phase", "bounds", "lowerbound", "pde", "filtercheck"}) {
    CLI::App* sub = app.add_subcommand(name, std::string("run the ") + name + " experiment");
    sub->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "override the base seed");
    sub->add_option("--out-dir", out_dir, "directory for CSV/JSON outputs");
    sub->add_option("--threads", threads, "worker threads (results do not depend on it)");
  }

  CLI11_PARSE(app, argc, argv);
  const std::string mode = app.get_subcommands().front()->get_name();

  try {
    specgd::ExperimentConfig cfg;
    if (!config_path.empty()) {
      cfg = specgd::load_config(config_path);
    } else {
      nlohmann::json j{{"mode", mode}};
      if (mode == "rates") j["n_grid"] = {128, 256, 512, 1024, 2048, 4096, 8192};
      cfg = specgd::parse_config(j);
    }
    if (specgd::mode_name(cfg.mode) != mode)
      throw specgd::ConfigError("config mode '" + specgd::mode_name(cfg.mode) + "' does not match subcommand '" + mode + "'");
    if (seed) cfg.seed = *seed;
    if (threads) cfg.threads = *threads;
    for (const auto& w : cfg.spec.warnings()) std::cerr << "warning: " << w << '\n';

    const specgd::RunReport rep = specgd::run(cfg);
    specgd::write_outputs(rep, out_dir);
    for (const auto& f : rep.files) std::cout << "wrote " << (std::filesystem::path(out_dir) / f.name).string() << '\n';
    std::cout << mode << ": " << (rep.pass ? "PASS" : "FAIL") << '\n';
    return rep.pass ? 0 : 1;
  } catch (const specgd::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
}
