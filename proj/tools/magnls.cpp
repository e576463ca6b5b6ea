// magnls <mode> --config path [--set key=value ...] --out dir

#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "magnls/run.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Magnetic NLS ground states, limit problems and profile decompositions"};
  app.require_subcommand(1);
  std::string config_path;
  std::vector<std::string> overrides;
  std::string out_dir;
  for (const char* mode : {"solve", "penalty", "profiles", "critical", "gauge-check"}) {
    CLI::App* sub = app.add_subcommand(mode);
    sub->add_option("--config", config_path, "JSON run configuration")->required()->check(CLI::ExistingFile);
    sub->add_option("--set", overrides, "override a config entry, dotted.key=value (value parsed as JSON)");
    sub->add_option("--out", out_dir, "output directory (overrides output.directory)");
  }
  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : magnls::kExitInvalid;
  }
  const std::string mode = app.get_subcommands().front()->get_name();
  magnls::EventLog log(&std::cerr);
  nlohmann::json raw;
  try {
    raw = magnls::load_config_json(config_path);
  } catch (const magnls::ConfigError& e) {
    log.emit("validation_failed", {{"message", e.what()}});
    return magnls::kExitInvalid;
  }
  if (raw.contains("mode") && raw["mode"].is_string() && raw["mode"].get<std::string>() != mode) {
    log.emit("validation_failed", {{"message", "config mode '" + raw["mode"].get<std::string>() +
                                                   "' does not match subcommand '" + mode + "'"}});
    return magnls::kExitInvalid;
  }
  return magnls::run(std::move(raw), overrides, out_dir, &std::cerr, mode);
}
