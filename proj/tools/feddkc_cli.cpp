#include <CLI11.hpp>
#include <iostream>
#include <string>

#include "feddkc/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Federated distillation simulator with knowledge refinement"};
  app.set_version_flag("--version", std::string(feddkc::version()));
  app.require_subcommand(1);

  std::string config;
  auto* run = app.add_subcommand("run", "Run every seed of a config (or a manifest.json) and write artifacts");
  run->add_option("config", config, "Config file or manifest.json")->required()->check(CLI::ExistingFile);

  std::string validate_config;
  auto* validate = app.add_subcommand("validate", "Check a config without running it");
  validate->add_option("config", validate_config, "Config file or manifest.json")->required()->check(CLI::ExistingFile);

  std::string dir_a;
  std::string dir_b;
  auto* compare = app.add_subcommand("compare", "Per-client Top-1/Top-5 deltas between two run directories");
  compare->add_option("baseline", dir_a, "Baseline run directory")->required();
  compare->add_option("treatment", dir_b, "Treatment run directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : feddkc::kExitConfig;
  }

  if (*run) return feddkc::cli_run(config, std::cout, std::cerr);
  if (*validate) return feddkc::cli_validate(validate_config, std::cout, std::cerr);
  return feddkc::cli_compare(dir_a, dir_b, std::cout, std::cerr);
}
