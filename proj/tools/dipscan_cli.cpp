// Command-line runner for the dipscan experiments. Uses only the C API.
#include <CLI11.hpp>

#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "dipscan/dipscan.h"

namespace {

enum Exit { kPass = 0, kCheckFailed = 1, kConfigError = 2, kRuntimeError = 3 };

int report_error(dipscan_status status) {
  std::fprintf(stderr, "dipscan: %s: %s\n", dipscan_status_name(status), dipscan_last_error());
  return status == DIPSCAN_CONFIG ? kConfigError : kRuntimeError;
}

struct RunOptions {
  std::string config_path;
  std::optional<std::string> seed, experiment, out_dir, format;
  std::vector<std::string> sets;
};

int run(const RunOptions& opt) {
  dipscan_config* config = nullptr;
  dipscan_status st = dipscan_config_load(opt.config_path.c_str(), &config);
  if (st != DIPSCAN_OK) {
    report_error(st);
    return kConfigError;
  }

  auto cleanup = [&](int code) {
    dipscan_config_free(config);
    return code;
  };
  auto set = [&](const char* key, const std::string& value) { return dipscan_config_set(config, key, value.c_str()); };

  for (const auto& kv : opt.sets) {
    const auto eq = kv.find('=');
    if (eq == std::string::npos || eq == 0) {
      std::fprintf(stderr, "dipscan: --set expects key=value, got '%s'\n", kv.c_str());
      return cleanup(kConfigError);
    }
    if ((st = set(kv.substr(0, eq).c_str(), kv.substr(eq + 1))) != DIPSCAN_OK) return cleanup(report_error(st));
  }
  const std::pair<const char*, const std::optional<std::string>*> flags[] = {
      {"seed", &opt.seed}, {"experiment", &opt.experiment}, {"out_dir", &opt.out_dir}, {"format", &opt.format}};
  for (const auto& [key, value] : flags) {
    if (*value && (st = set(key, **value)) != DIPSCAN_OK) return cleanup(report_error(st));
  }
  if ((st = dipscan_config_validate(config)) != DIPSCAN_OK) return cleanup(report_error(st));

  size_t count = 0;
  if ((st = dipscan_config_selected_count(config, &count)) != DIPSCAN_OK) return cleanup(report_error(st));
  int exit_code = kPass;
  for (size_t i = 0; i < count; ++i) {
    const char* name = nullptr;
    if ((st = dipscan_config_selected_name(config, i, &name)) != DIPSCAN_OK) return cleanup(report_error(st));
    dipscan_result* result = nullptr;
    if ((st = dipscan_run(config, name, &result)) != DIPSCAN_OK) return cleanup(report_error(st));
    st = dipscan_result_write(result, nullptr, DIPSCAN_FORMAT_DEFAULT, nullptr);
    if (st != DIPSCAN_OK) {
      dipscan_result_free(result);
      return cleanup(report_error(st));
    }
    std::printf("%s\n", dipscan_result_summary(result));
    if (!dipscan_result_pass(result)) exit_code = kCheckFailed;
    dipscan_result_free(result);
  }
  std::fflush(stdout);
  return cleanup(exit_code);
}

int list() {
  for (size_t i = 0; i < dipscan_experiment_count(); ++i) {
    const char* name = nullptr;
    const char* description = nullptr;
    dipscan_experiment_info(i, &name, &description);
    std::printf("%-18s %s\n", name, description);
  }
  return kPass;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Dipole scan and beamformer certification experiments"};
  app.set_version_flag("--version", dipscan_version());
  app.require_subcommand(1);

  RunOptions opt;
  auto* run_cmd = app.add_subcommand("run", "Run the experiments selected by a config file");
  run_cmd->add_option("--config", opt.config_path, "Config file (key = value, [experiment] sections)")->required();
  run_cmd->add_option("--seed", opt.seed, "Override seed");
  run_cmd->add_option("--experiment", opt.experiment, "Run only this experiment");
  run_cmd->add_option("--out-dir", opt.out_dir, "Override out_dir");
  run_cmd->add_option("--format", opt.format, "Override format (csv, json, both)");
  run_cmd->add_option("--set", opt.sets, "Override any key, as key=value");

  app.add_subcommand("list", "List available experiments");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kPass : kConfigError;
  }
  if (run_cmd->parsed()) return run(opt);
  return list();
}
