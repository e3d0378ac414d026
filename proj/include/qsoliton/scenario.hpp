#pragma once

#include <cstddef>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "qsoliton/correlation.hpp"

namespace qsol {

enum class SystemKind { Scalar, Vector };

enum class ObservableKind {
  /// Slot-by-slot correlation map C_ij.
  Map,
  /// C_12 between the two pulses of a scalar pair.
  Pair,
  /// C_xy between the x and y linear polarizations of a vector pair.
  PolarizationPair,
};

struct ObservableConfig {
  ObservableKind kind = ObservableKind::Pair;
  std::vector<double> z_checkpoints;

  // Map only.
  double slot_width = 0.1;
  double window_begin = -8.0;
  double window_end = 8.0;

  // Pair / PolarizationPair only.
  PairSplit split = PairSplit::HalfLine;
  double window_half_width = 3.0;
  PolarizationMode polarization = PolarizationMode::Totals;
};

/// Parameter lists; a run covers their Cartesian product. Empty lists keep the
/// value from the initial condition.
struct SweepConfig {
  std::vector<double> rho;
  std::vector<double> theta;
  std::vector<double> gamma;
  std::vector<double> t1;
  std::vector<double> b_coeff;

  bool empty() const {
    return rho.empty() && theta.empty() && gamma.empty() && t1.empty() && b_coeff.empty();
  }
};

struct ScenarioConfig {
  std::string name = "scenario";
  std::string figure;
  std::string description;

  SystemKind system = SystemKind::Scalar;
  SolitonPairSpec scalar;
  VectorPairSpec vector;

  std::size_t grid_n = 1024;
  double t_half_span = 20.0;

  double z_step = 1e-3;
  /// Spacing of the classical diagnostics trace; 0 disables it.
  double trace_spacing = 0.0;

  double fluctuation_scale = 1.0;
  std::vector<ObservableConfig> observables;
  SweepConfig sweep;
  std::string output = "out";
  /// Cross-check back-propagation against the dense Green matrix. The check
  /// uses a separate propagation on at most kOracleMaxGrid samples, up to the
  /// smallest positive checkpoint.
  bool oracle = false;

  /// Throws ValidationError on the first problem found.
  void validate() const;
  /// Largest distance any observable or trace needs.
  double z_max() const;
};

inline constexpr std::size_t kOracleMaxGrid = 256;

nlohmann::json to_json(const ScenarioConfig& config);
/// Strict parser: unknown keys and wrong types are errors.
ScenarioConfig scenario_from_json(const nlohmann::json& j);
ScenarioConfig load_scenario(const std::filesystem::path& path);

struct PresetInfo {
  std::string name;
  std::string figure;
  std::string summary;
};

std::vector<PresetInfo> list_presets();
ScenarioConfig preset(std::string_view name);

/// One point of a sweep: (parameter name, value) in a fixed order.
struct ParameterTuple {
  std::vector<std::pair<std::string, double>> values;

  /// Compact id such as "rho3.5_theta0"; "base" for an empty sweep.
  std::string id() const;
};

std::vector<ParameterTuple> expand_sweep(const ScenarioConfig& config);

struct ClassicalTrace {
  std::vector<double> z;
  /// NaN where the two pulses are not resolved.
  std::vector<double> peak_separation;
  std::vector<double> photon_number;
  std::vector<double> hamiltonian;
  // Vector system only: |E_x|^2 over [-2 t1, 0) and |E_y|^2 over [0, 2 t1).
  std::vector<double> x_slot_energy;
  std::vector<double> y_slot_energy;
};

struct OracleReport {
  double z = 0.0;
  std::size_t grid_n = 0;
  double covariance_error = 0.0;  // max |cov_sweep - cov_green| / max |cov|
  double unitarity_defect = 0.0;
  double symmetry_defect = 0.0;
};

struct ObservableResult {
  ObservableKind kind = ObservableKind::Pair;
  std::vector<CorrelationMap> maps;
  std::vector<PairCorrelation> pairs;
};

struct TupleResult {
  ParameterTuple parameters;
  SolitonPairSpec scalar;
  VectorPairSpec vector;
  bool ok = false;
  std::string error;
  std::vector<ObservableResult> observables;
  ClassicalTrace trace;
  std::optional<OracleReport> oracle;
  ConservedQuantities conserved_start;
  ConservedQuantities conserved_end;
  std::vector<std::string> warnings;
};

struct ScenarioResult {
  ScenarioConfig config;
  std::vector<TupleResult> tuples;
  std::vector<std::string> warnings;

  std::size_t failed() const;
};

struct RunOptions {
  unsigned threads = 1;
  /// Progress messages, one line per stage; nullptr for silence.
  std::ostream* log = nullptr;
};

/// Runs every sweep tuple in order. Tuple failures (numerical or validation)
/// are recorded in the result; configuration errors throw before any work.
ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options = {});

struct OutputOptions {
  bool pgm = false;
};

/// Writes CSV files and meta.json into `dir` (created if needed). Returns the
/// files written, relative to `dir`.
std::vector<std::string> write_outputs(const ScenarioResult& result,
                                       const std::filesystem::path& dir,
                                       const OutputOptions& options = {});

/// printf("%.12e") formatting used for every number in the outputs.
std::string format_number(double value);

}  // namespace qsol
