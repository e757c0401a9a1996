#include <filesystem>
#include <fstream>
#include <iostream>

#include <CLI11.hpp>

#include "onestate/scenario.hpp"

namespace fs = std::filesystem;
using namespace onestate;

namespace {

void write_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
}

void emit(const RunReport& rep, const fs::path& dir) {
  fs::create_directories(dir);
  for (const auto& [name, text] : rep.files) write_file(dir / name, text);
  write_file(dir / "summary.json", rep.summary.dump(2) + "\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"One State fault detection: scenario runner"};
  app.require_subcommand(1);

  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string out_dir = "out";
  std::optional<int> trials;

  struct Command {
    const char* name;
    const char* help;
    RunMode mode;
  };
  const Command commands[] = {
      {"trace", "single closed-loop run: trace.csv and summary.json", RunMode::trace},
      {"montecarlo", "ensemble of seeded runs", RunMode::monte_carlo},
      {"design", "optimal sampling time search and sweep tables", RunMode::design},
      {"sweep", "EDP sweep over tau for a periodic input", RunMode::sweep},
      {"validate-dep", "empirical vs analytic per-step error probability", RunMode::validate_dep},
  };
  std::optional<RunMode> chosen;
  for (const Command& c : commands) {
    CLI::App* sub = app.add_subcommand(c.name, c.help);
    sub->add_option("--config", config_path, "scenario file")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "noise seed, overrides [noise] seed");
    sub->add_option("--out", out_dir, "output directory")->capture_default_str();
    sub->add_option("--trials", trials, "trials for montecarlo / validate-dep");
    const RunMode mode = c.mode;
    sub->callback([&chosen, mode] { chosen = mode; });
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    ScenarioConfig cfg = load_config(config_path);
    cfg.mode = *chosen;
    if (seed) cfg.noise.seed = *seed;
    if (trials) cfg.trials = *trials;
    RunReport rep;
    try {
      rep = run(cfg);
    } catch (const InfeasibleDesign& e) {
      rep.summary["schema_version"] = kSchemaVersion;
      rep.summary["mode"] = to_string(cfg.mode);
      rep.summary["config"] = cfg.to_json();
      rep.summary["error"] = e.what();
      rep.exit_code = 3;
    }
    emit(rep, out_dir);
    if (rep.exit_code == 3) std::cerr << "infeasible design; report written to " << out_dir << "\n";
    return rep.exit_code;
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const std::invalid_argument& e) {
    std::cerr << "invalid scenario: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
}
