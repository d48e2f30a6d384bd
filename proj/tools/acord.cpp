// acord: calibrate-sizes | roc | run | sweep --axis {energy|bandwidth}
#include <CLI11.hpp>

#include <iostream>
#include <map>
#include <string>

#include "acord/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Energy-budgeted continual-learning fault detection simulator"};
  app.require_subcommand(1);
  app.fallthrough();

  std::string config_path;
  app.add_option("--config", config_path, "key = value configuration file")->check(CLI::ExistingFile);

  // Every configuration key doubles as a flag; flags win over the file.
  std::map<std::string, std::string> overrides;
  for (const auto& key : acord::ExperimentConfig::keys()) {
    app.add_option("--" + key, overrides[key], "config key " + key);
  }

  auto* calibrate = app.add_subcommand("calibrate-sizes", "Measure coded sizes and fit the size models");
  auto* roc = app.add_subcommand("roc", "ROC dry runs for the AE and MLP detectors");
  auto* run = app.add_subcommand("run", "One run with per-round logging");
  auto* sweep = app.add_subcommand("sweep", "Recall and energy over E_th or bandwidth");
  std::string axis;
  sweep->add_option("--axis", axis, "energy or bandwidth")->required()->check(CLI::IsMember({"energy", "bandwidth"}));

  CLI11_PARSE(app, argc, argv);

  try {
    acord::ExperimentConfig config = config_path.empty() ? acord::ExperimentConfig{} : acord::load_config(config_path);
    for (const auto& key : acord::ExperimentConfig::keys()) {
      if (app.count("--" + key) > 0) config.set(key, overrides[key]);
    }
    if (*calibrate) return acord::cmd_calibrate_sizes(config);
    if (*roc) return acord::cmd_roc(config);
    if (*run) return acord::cmd_run(config);
    if (*sweep) return acord::cmd_sweep(config, acord::sweep_axis_from_string(axis));
  } catch (const std::exception& e) {
    std::cerr << "acord: error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
