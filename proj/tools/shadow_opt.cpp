#include <iostream>
#include <map>
#include <string>

#include <CLI11.hpp>

#include "shadow_opt/shadow_opt.hpp"

namespace {

// Flag name -> config key. Every config key is also a flag; --k and --out
// are short spellings of K and output_dir.
std::map<std::string, std::string> flag_keys() {
  std::map<std::string, std::string> out;
  for (const std::string& key : shadow_opt::config_keys()) {
    if (key == "preset" || key == "K" || key == "output_dir") continue;
    out[key] = key;
  }
  out["k"] = "K";
  out["out"] = "output_dir";
  return out;
}

void add_config_flags(CLI::App& cmd, std::map<std::string, std::string>& values) {
  for (const auto& [flag, key] : flag_keys()) {
    cmd.add_option("--" + flag, values[flag], "override '" + key + "'");
  }
}

shadow_opt::ExperimentConfig build_config(const std::string& config_path,
                                          const std::string& preset,
                                          const std::map<std::string, std::string>& values,
                                          const CLI::App& cmd) {
  shadow_opt::ExperimentConfig cfg;
  if (!config_path.empty()) shadow_opt::load_config_file(config_path, cfg);
  if (!preset.empty()) cfg.preset = shadow_opt::parse_preset(preset);
  const auto keys = flag_keys();
  for (const auto& [flag, value] : values) {
    if (cmd.count("--" + flag) == 0) continue;
    shadow_opt::apply_setting(cfg, keys.at(flag), value);
  }
  return cfg;
}

void print_report(const shadow_opt::ExperimentReport& report) {
  shadow_opt::emit_summary(report, std::cout);
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Shadowing experiments for gradient methods"};
  app.require_subcommand(1);
  // -h would collide with the step-size flag --h.
  app.set_help_flag("--help", "print this help and exit");

  std::string run_config;
  std::string run_preset;
  std::map<std::string, std::string> run_values;
  CLI::App* run = app.add_subcommand("run", "run one preset");
  run->add_option("--preset", run_preset, "sc_quadratic, saddle, hosaki, hb_quadratic, sigmoid_erm, h_sweep");
  run->add_option("--config", run_config, "key=value config file");
  add_config_flags(*run, run_values);

  std::string sweep_config;
  std::map<std::string, std::string> sweep_values;
  CLI::App* sweep = app.add_subcommand("sweep", "step-size sweep");
  sweep->add_option("--config", sweep_config, "key=value config file")->required();
  add_config_flags(*sweep, sweep_values);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (*run) {
      const auto cfg = build_config(run_config, run_preset, run_values, *run);
      if (cfg.preset == shadow_opt::Preset::h_sweep) {
        const auto report = shadow_opt::run_h_sweep(cfg);
        std::cout << "slope " << shadow_opt::format_double(report.slope) << '\n';
      } else {
        print_report(shadow_opt::run_preset(cfg));
      }
    } else {
      const auto cfg = build_config(sweep_config, "", sweep_values, *sweep);
      const auto report = shadow_opt::run_h_sweep(cfg);
      for (const auto& p : report.points) {
        std::cout << "h " << shadow_opt::format_double(p.h) << "  max_deviation "
                  << shadow_opt::format_double(p.max_deviation) << '\n';
      }
      std::cout << "slope " << shadow_opt::format_double(report.slope) << '\n';
    }
  } catch (const shadow_opt::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const shadow_opt::Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
