#include "egflow/run.hpp"

#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"egflow: enriched Galerkin Boussinesq solver"};
  app.require_subcommand(1);
  CLI::App* run = app.add_subcommand("run", "run a benchmark case or a custom problem");

  std::string config_path;
  bool dry_run = false;
  // flag name -> configuration key; values stay strings so the config parser
  // validates file entries and flags the same way
  const std::map<std::string, std::string> keys = {
      {"case", "case"}, {"ra", "ra"},         {"re", "re"},         {"ri", "ri"}, {"pr", "pr"},
      {"n", "n"},       {"levels", "levels"}, {"method", "method"}, {"dt", "dt"}, {"tf", "tf"},
      {"out", "out"}};
  std::map<std::string, std::string> flags;
  for (const auto& [flag, key] : keys) run->add_option("--" + flag, flags[flag], "sets '" + key + "'");
  run->add_option("--config", config_path, "key = value file; flags override its entries");
  run->add_flag("--dry-run", dry_run, "print the resolved configuration and exit");

  CLI11_PARSE(app, argc, argv);

  try {
    egflow::RunConfig cfg;
    if (!config_path.empty()) cfg.set_all(egflow::read_key_value_file(config_path));
    for (const auto& [flag, key] : keys)
      if (run->count("--" + flag) > 0) cfg.set(key, flags[flag]);
    if (dry_run) {
      std::cout << cfg.resolved().to_text();
      return 0;
    }
    return egflow::run(cfg, std::cout);
  } catch (const egflow::Error& e) {
    std::cerr << "egflow: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "egflow: " << e.what() << '\n';
    return 2;
  }
}
