#include <cmath>
#include <numbers>

#include "qsoliton/scenario.hpp"

namespace qsol {

namespace {

constexpr double kPi = std::numbers::pi;

std::vector<double> range(double start, double stop, double step) {
  std::vector<double> zs;
  const auto count = static_cast<std::size_t>(std::llround((stop - start) / step));
  for (std::size_t i = 0; i <= count; ++i) zs.push_back(start + static_cast<double>(i) * step);
  return zs;
}

ScenarioConfig fig1() {
  ScenarioConfig c;
  c.name = "fig1";
  c.figure = "Fig. 1";
  c.description =
      "Correlation maps of an out-of-phase soliton pair at z = 6, 30, 50: correlations start on "
      "the diagonal, then inter-pulse correlations emerge and grow.";
  c.scalar = {1.0, kPi / 2, 3.5};
  c.trace_spacing = 0.5;
  ObservableConfig map;
  map.kind = ObservableKind::Map;
  map.z_checkpoints = {6.0, 30.0, 50.0};
  map.slot_width = 0.1;
  map.window_begin = -8.0;
  map.window_end = 8.0;
  c.observables = {map};
  c.output = "out/fig1";
  return c;
}

ScenarioConfig fig2(bool vary_rho) {
  ScenarioConfig c;
  c.name = vary_rho ? "fig2a" : "fig2b";
  c.figure = vary_rho ? "Fig. 2(a)" : "Fig. 2(b)";
  c.description = vary_rho
                      ? "Inter-soliton correlation C12 versus z for separations rho = 3, 3.5, 4 "
                        "(theta = pi/2)."
                      : "Inter-soliton correlation C12 versus z for relative phases theta = 0, "
                        "pi/4, pi/2 (rho = 3.5).";
  c.scalar = {1.0, kPi / 2, 3.5};
  c.trace_spacing = 0.25;
  ObservableConfig pair;
  pair.kind = ObservableKind::Pair;
  pair.z_checkpoints = range(0.0, 100.0, 2.0);
  c.observables = {pair};
  if (vary_rho) {
    c.sweep.rho = {3.0, 3.5, 4.0};
  } else {
    c.sweep.theta = {0.0, kPi / 4, kPi / 2};
  }
  c.output = "out/" + c.name;
  return c;
}

ScenarioConfig fig3() {
  ScenarioConfig c;
  c.name = "fig3";
  c.figure = "Fig. 3";
  c.description =
      "Photon-number correlation between the x and y linear polarizations of a vector soliton "
      "pair (A:B = 1:2, t1 = 3.5), plus the classical x-component energy trace.";
  c.system = SystemKind::Vector;
  c.vector = {3.5, 1.0, 2.0};
  c.trace_spacing = 0.1;
  ObservableConfig pair;
  pair.kind = ObservableKind::PolarizationPair;
  pair.z_checkpoints = range(0.0, 50.0, 1.0);
  pair.polarization = PolarizationMode::Totals;
  c.observables = {pair};
  c.output = "out/fig3";
  return c;
}

}  // namespace

std::vector<PresetInfo> list_presets() {
  std::vector<PresetInfo> out;
  for (const auto* name : {"fig1", "fig2a", "fig2b", "fig3"}) {
    const auto c = preset(name);
    out.push_back({c.name, c.figure, c.description});
  }
  return out;
}

ScenarioConfig preset(std::string_view name) {
  if (name == "fig1") return fig1();
  if (name == "fig2a") return fig2(true);
  if (name == "fig2b") return fig2(false);
  if (name == "fig3") return fig3();
  throw ValidationError("unknown preset '" + std::string(name) + "' (fig1, fig2a, fig2b, fig3)");
}

}  // namespace qsol
