// Command-line front end: runs scenario files and the built-in figure presets.
#include <cstdlib>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "qsoliton/scenario.hpp"

namespace {

constexpr int kExitConfig = 2;
constexpr int kExitAllFailed = 3;

struct Overrides {
  unsigned threads = 1;
  bool oracle = false;
  double step = 0.0;
  std::string grid;
  double fluctuation_scale = 0.0;
  std::string out;
  bool pgm = false;
  bool dump = false;
  bool quiet = false;
};

void add_overrides(CLI::App& cmd, Overrides& o) {
  cmd.add_option("--threads", o.threads, "Worker threads for the back-propagation")->check(CLI::PositiveNumber);
  cmd.add_flag("--oracle", o.oracle, "Cross-check covariances against the dense Green matrix on a reduced grid");
  cmd.add_option("--step", o.step, "Override solver.z_step")->check(CLI::PositiveNumber);
  cmd.add_option("--grid", o.grid, "Override the grid as n,t_half_span");
  cmd.add_option("--fluctuation-scale", o.fluctuation_scale, "Override fluctuation_scale")
      ->check(CLI::PositiveNumber);
  cmd.add_option("--out", o.out, "Output directory (default: the scenario's output field)");
  cmd.add_flag("--pgm", o.pgm, "Also write correlation maps as PGM images");
  cmd.add_flag("--dump-config", o.dump, "Print the effective scenario JSON and exit");
  cmd.add_flag("-q,--quiet", o.quiet, "No progress messages");
}

void apply(qsol::ScenarioConfig& c, const Overrides& o) {
  if (o.oracle) c.oracle = true;
  if (o.step > 0.0) c.z_step = o.step;
  if (o.fluctuation_scale > 0.0) c.fluctuation_scale = o.fluctuation_scale;
  if (!o.out.empty()) c.output = o.out;
  if (!o.grid.empty()) {
    std::istringstream in(o.grid);
    std::size_t n = 0;
    char comma = 0;
    double span = 0.0;
    if (!(in >> n >> comma >> span) || comma != ',' || !in.eof()) {
      throw qsol::ValidationError("--grid expects n,t_half_span (for example 512,20)");
    }
    c.grid_n = n;
    c.t_half_span = span;
  }
  c.validate();
}

int run(qsol::ScenarioConfig config, const Overrides& o) {
  apply(config, o);
  if (o.dump) {
    std::cout << qsol::to_json(config).dump(2) << '\n';
    return 0;
  }
  qsol::RunOptions options;
  options.threads = o.threads;
  options.log = o.quiet ? nullptr : &std::cerr;
  const auto result = qsol::run_scenario(config, options);
  for (const auto& w : result.warnings) std::cerr << "warning: " << w << '\n';
  for (const auto& t : result.tuples) {
    for (const auto& w : t.warnings) std::cerr << "warning [" << t.parameters.id() << "]: " << w << '\n';
    if (!t.ok) std::cerr << "error [" << t.parameters.id() << "]: " << t.error << '\n';
  }
  qsol::OutputOptions out_options;
  out_options.pgm = o.pgm;
  const auto files = qsol::write_outputs(result, config.output, out_options);
  if (!o.quiet) std::cerr << "wrote " << files.size() << " files to " << config.output << '\n';
  return result.failed() == result.tuples.size() ? kExitAllFailed : 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quantum correlations of interacting soliton pairs"};
  app.require_subcommand(1);

  Overrides run_o;
  std::string scenario_path;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario file");
  run_cmd->add_option("--scenario,scenario", scenario_path, "Scenario JSON file")->required();
  add_overrides(*run_cmd, run_o);

  Overrides preset_o;
  std::string preset_name;
  auto* preset_cmd = app.add_subcommand("preset", "Run a built-in figure preset");
  preset_cmd->add_option("name", preset_name, "fig1, fig2a, fig2b or fig3")->required();
  add_overrides(*preset_cmd, preset_o);

  auto* list_cmd = app.add_subcommand("presets", "List the built-in presets");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitConfig;
  }

  try {
    if (*list_cmd) {
      for (const auto& p : qsol::list_presets()) {
        std::cout << p.name << "  (" << p.figure << ")\n    " << p.summary << '\n';
      }
      return 0;
    }
    if (*run_cmd) return run(qsol::load_scenario(scenario_path), run_o);
    return run(qsol::preset(preset_name), preset_o);
  } catch (const qsol::ValidationError& e) {
    std::cerr << "configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
}
