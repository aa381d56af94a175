#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "logopt/experiment.hpp"

namespace {

std::vector<std::string> split_names(const std::string& text) {
  std::vector<std::string> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential log-optimal portfolio experiments"};
  app.set_version_flag("--version", std::string(logopt::kToolVersion));
  app.require_subcommand(1);

  std::string config;
  std::string out;
  std::string seed_panel;
  std::size_t threads = 1;
  std::string a, b, only;

  auto add_common = [&](CLI::App* cmd) {
    cmd->add_option("config", config, "Experiment config (JSON)")->required()->check(CLI::ExistingFile);
    cmd->add_option("--out", out, "Output directory (overrides the config)");
    cmd->add_option("--seed-panel", seed_panel, "Seeds, e.g. 1,2,10..20 (overrides the config)");
    cmd->add_option("--threads", threads, "Worker threads")->check(CLI::PositiveNumber);
  };
  auto* simulate = app.add_subcommand("simulate", "Write one wealth ledger per strategy and seed");
  add_common(simulate);
  auto* compare = app.add_subcommand("compare", "Growth-rate difference of two strategies per seed");
  add_common(compare);
  compare->add_option("--a", a, "Label of strategy A")->required();
  compare->add_option("--b", b, "Label of strategy B")->required();
  auto* checks = app.add_subcommand("checks", "Run diagnostics and write checks/report.json");
  add_common(checks);
  checks->add_option("--only", only, "Comma-separated check names");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return logopt::kExitConfig;
  }

  logopt::RunOptions options;
  options.threads = threads;
  if (!out.empty()) options.out = out;
  if (!seed_panel.empty()) {
    try {
      options.seed_panel = logopt::parse_seed_panel(seed_panel);
    } catch (const std::exception& e) {
      std::cerr << "config error: " << e.what() << '\n';
      return logopt::kExitConfig;
    }
  }

  if (simulate->parsed()) return logopt::cmd_simulate(config, options);
  if (compare->parsed()) return logopt::cmd_compare(config, a, b, options);
  std::optional<std::vector<std::string>> names;
  if (!only.empty()) names = split_names(only);
  return logopt::cmd_checks(config, names, options);
}
