#include "qsoliton/scenario.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <ostream>
#include <set>
#include <sstream>

namespace qsol {

using nlohmann::json;

namespace {

[[noreturn]] void config_error(const std::string& message) { throw ValidationError(message); }

// Reads an object while remembering which keys were consumed, so leftovers
// can be reported as typos.
class ObjectReader {
public:
  ObjectReader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) config_error(where_ + " must be a JSON object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  const json& raw(const std::string& key) {
    used_.insert(key);
    return j_.at(key);
  }

  void number(const std::string& key, double& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number()) config_error(path(key) + " must be a number");
    out = v.get<double>();
  }

  void count(const std::string& key, std::size_t& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_number_integer() || v.get<long long>() <= 0) {
      config_error(path(key) + " must be a positive integer");
    }
    out = v.get<std::size_t>();
  }

  void string(const std::string& key, std::string& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_string()) config_error(path(key) + " must be a string");
    out = v.get<std::string>();
  }

  void boolean(const std::string& key, bool& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_boolean()) config_error(path(key) + " must be true or false");
    out = v.get<bool>();
  }

  void numbers(const std::string& key, std::vector<double>& out) {
    if (!has(key)) return;
    const auto& v = raw(key);
    if (!v.is_array()) config_error(path(key) + " must be an array of numbers");
    out.clear();
    for (const auto& e : v) {
      if (!e.is_number()) config_error(path(key) + " must be an array of numbers");
      out.push_back(e.get<double>());
    }
  }

  std::string path(const std::string& key) const { return where_ + "." + key; }

  void finish() const {
    for (const auto& [key, value] : j_.items()) {
      if (!used_.count(key)) config_error("unknown key " + path(key));
    }
  }

private:
  const json& j_;
  std::string where_;
  std::set<std::string> used_;
};

std::string kind_name(ObservableKind kind) {
  switch (kind) {
    case ObservableKind::Map:
      return "map";
    case ObservableKind::Pair:
      return "pair";
    case ObservableKind::PolarizationPair:
      return "polarization_pair";
  }
  return "pair";
}

ObservableKind parse_kind(const std::string& s, const std::string& where) {
  if (s == "map") return ObservableKind::Map;
  if (s == "pair") return ObservableKind::Pair;
  if (s == "polarization_pair") return ObservableKind::PolarizationPair;
  config_error(where + ": unknown observable kind '" + s + "' (map, pair, polarization_pair)");
}

std::string split_name(PairSplit s) { return s == PairSplit::HalfLine ? "half_line" : "finite_window"; }

std::string mode_name(PolarizationMode m) {
  return m == PolarizationMode::Totals ? "totals" : "per_soliton";
}

// z checkpoints: explicit array, or {"start", "stop", "step"} (inclusive).
std::vector<double> parse_checkpoints(const json& j, const std::string& where) {
  std::vector<double> zs;
  if (j.is_array()) {
    for (const auto& e : j) {
      if (!e.is_number()) config_error(where + " must contain numbers");
      zs.push_back(e.get<double>());
    }
    return zs;
  }
  ObjectReader r(j, where);
  double start = 0.0;
  double stop = std::numeric_limits<double>::quiet_NaN();
  double step = std::numeric_limits<double>::quiet_NaN();
  r.number("start", start);
  r.number("stop", stop);
  r.number("step", step);
  r.finish();
  if (!std::isfinite(stop) || !(step > 0.0) || !(stop >= start)) {
    config_error(where + " range needs finite start <= stop and step > 0");
  }
  const auto count = static_cast<std::size_t>(std::llround((stop - start) / step));
  if (std::abs(start + static_cast<double>(count) * step - stop) > 1e-9 * std::max(1.0, stop)) {
    config_error(where + " range: stop - start is not a multiple of step");
  }
  for (std::size_t i = 0; i <= count; ++i) zs.push_back(start + static_cast<double>(i) * step);
  return zs;
}

ObservableConfig parse_observable(const json& j, const std::string& where) {
  ObjectReader r(j, where);
  ObservableConfig o;
  std::string kind;
  r.string("kind", kind);
  if (kind.empty()) config_error(where + ".kind is required");
  o.kind = parse_kind(kind, where);
  if (!r.has("z_checkpoints")) config_error(where + ".z_checkpoints is required");
  o.z_checkpoints = parse_checkpoints(r.raw("z_checkpoints"), r.path("z_checkpoints"));
  if (o.kind == ObservableKind::Map) {
    r.number("slot_width", o.slot_width);
    if (r.has("window")) {
      std::vector<double> w;
      r.numbers("window", w);
      if (w.size() != 2) config_error(r.path("window") + " must be [begin, end]");
      o.window_begin = w[0];
      o.window_end = w[1];
    }
  } else {
    r.number("window_half_width", o.window_half_width);
  }
  if (o.kind == ObservableKind::Pair && r.has("split")) {
    std::string s;
    r.string("split", s);
    if (s == "half_line") {
      o.split = PairSplit::HalfLine;
    } else if (s == "finite_window") {
      o.split = PairSplit::FiniteWindow;
    } else {
      config_error(r.path("split") + " must be half_line or finite_window");
    }
  }
  if (o.kind == ObservableKind::PolarizationPair && r.has("mode")) {
    std::string s;
    r.string("mode", s);
    if (s == "totals") {
      o.polarization = PolarizationMode::Totals;
    } else if (s == "per_soliton") {
      o.polarization = PolarizationMode::PerSoliton;
    } else {
      config_error(r.path("mode") + " must be totals or per_soliton");
    }
  }
  r.finish();
  return o;
}

bool is_multiple(double z, double step) {
  const double q = z / step;
  return std::abs(q - std::round(q)) <= 1e-6 * std::max(1.0, std::abs(q));
}

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

// sum |E|^2 dt over samples with t in [lo, hi).
double window_energy(const TimeGrid& grid, const Field& e, double lo, double hi) {
  double s = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    const double t = grid.t(k);
    if (t >= lo && t < hi) s += std::norm(e[k]);
  }
  return s * grid.dt();
}

ClassicalTrace classical_trace(const Trajectory& traj, double spacing, double z_max,
                               const VectorPairSpec* vector) {
  ClassicalTrace tr;
  const auto& grid = traj.grid();
  TrajectoryReader reader(traj);
  const auto count = static_cast<std::size_t>(std::floor(z_max / spacing + 1e-9));
  for (std::size_t i = 0; i <= count; ++i) {
    const double z = static_cast<double>(i) * spacing;
    const auto fields = reader.fields_at(traj.checkpoint_index(z));
    tr.z.push_back(z);
    const auto peaks = find_peak_pair(grid, fields[0]);
    tr.peak_separation.push_back(peaks ? peaks->separation : std::numeric_limits<double>::quiet_NaN());
    const auto q = conserved_quantities(grid, fields, traj.coupling());
    tr.photon_number.push_back(q.photon_number);
    tr.hamiltonian.push_back(q.hamiltonian);
    if (vector != nullptr) {
      const double t1 = vector->t1;
      tr.x_slot_energy.push_back(window_energy(grid, polarization_x(fields[0], fields[1]), -2.0 * t1, 0.0));
      tr.y_slot_energy.push_back(window_energy(grid, polarization_y(fields[0], fields[1]), 0.0, 2.0 * t1));
    }
  }
  return tr;
}

OracleReport run_oracle(const Trajectory& traj, double z, MeasuredComponent component,
                        unsigned threads) {
  const auto& grid = traj.grid();
  const std::size_t step = traj.checkpoint_index(z);
  const auto green = build_green_matrix(traj, step, threads);
  const double span = grid.t_half_span();
  const auto partition = SlotPartition::uniform(grid, -span, span, span / 8.0);
  const auto fields = traj.fields_at(step);

  std::vector<BackpropRequest> requests;
  for (const auto& slot : partition.slots) {
    requests.push_back({step, number_functional(fields, slot, component)});
  }
  const auto swept = backpropagate_batch(requests, traj, threads);
  std::vector<DoubledField> dense;
  for (const auto& r : requests) dense.push_back(green.transpose_apply(r.functional));

  // <O_i O_j> = dt^2 g_i^T Sigma0 g_j with Sigma0 = (1/dt) [[0, I], [0, 0]].
  const double dt = grid.dt();
  double worst = 0.0;
  double scale = 0.0;
  for (std::size_t i = 0; i < requests.size(); ++i) {
    for (std::size_t j = 0; j < requests.size(); ++j) {
      cdouble oracle = 0.0;
      for (std::size_t c = 0; c < dense[i].components(); ++c) {
        for (std::size_t k = 0; k < grid.size(); ++k) oracle += dense[i].plus[c][k] * dense[j].minus[c][k];
      }
      oracle *= dt;
      const double sweep = covariance(swept[i], swept[j], dt);
      worst = std::max(worst, std::abs(sweep - oracle.real()));
      scale = std::max(scale, std::abs(sweep));
    }
  }
  OracleReport rep;
  rep.z = z;
  rep.grid_n = grid.size();
  rep.covariance_error = scale > 0.0 ? worst / scale : worst;
  rep.unitarity_defect = green.unitarity_defect();
  rep.symmetry_defect = green.symmetry_defect();
  return rep;
}

void log_line(const RunOptions& options, const std::string& line) {
  if (options.log != nullptr) *options.log << line << '\n' << std::flush;
}

TupleResult run_tuple(const ScenarioConfig& config, const ParameterTuple& tuple,
                      std::size_t grid_n, const RunOptions& options) {
  TupleResult out;
  out.parameters = tuple;
  out.scalar = config.scalar;
  out.vector = config.vector;
  for (const auto& [name, value] : tuple.values) {
    if (name == "rho") out.scalar.rho = value;
    if (name == "theta") out.scalar.theta = value;
    if (name == "gamma") out.scalar.gamma = value;
    if (name == "t1") out.vector.t1 = value;
    if (name == "b_coeff") out.vector.b_coeff = value;
  }
  const bool vector = config.system == SystemKind::Vector;
  const MeasuredComponent map_component = vector ? MeasuredComponent::Ex : MeasuredComponent::U;

  try {
    const auto grid = make_grid(grid_n, config.t_half_span);
    std::vector<Field> fields;
    KerrCoupling coupling = KerrCoupling::scalar();
    if (vector) {
      const auto init = init_vector_pair(out.vector, grid, &out.warnings);
      fields = {init.u.samples, init.v.samples};
      coupling = KerrCoupling::vector(out.vector.a_coeff, out.vector.b_coeff);
    } else {
      fields = {init_scalar_pair(out.scalar, grid, &out.warnings).samples};
    }
    log_line(options, "[" + tuple.id() + "] propagating to z = " + short_number(config.z_max()));
    const auto traj = propagate(fields, grid, coupling, config.z_max(), config.z_step);
    for (const auto& w : traj.warnings()) out.warnings.push_back(w);
    out.conserved_start = conserved_quantities(*grid, traj.fields_at(0), coupling);
    out.conserved_end = conserved_quantities(*grid, traj.fields_at(traj.num_steps()), coupling);

    if (config.trace_spacing > 0.0) {
      out.trace = classical_trace(traj, config.trace_spacing, config.z_max(), vector ? &out.vector : nullptr);
    }

    for (const auto& obs : config.observables) {
      ObservableResult res;
      res.kind = obs.kind;
      log_line(options, "[" + tuple.id() + "] " + kind_name(obs.kind) + " at " +
                            std::to_string(obs.z_checkpoints.size()) + " distances");
      switch (obs.kind) {
        case ObservableKind::Map: {
          const auto partition =
              SlotPartition::uniform(*grid, obs.window_begin, obs.window_end, obs.slot_width);
          CorrelationOptions co{options.threads, config.fluctuation_scale, map_component};
          res.maps = correlation_maps(traj, obs.z_checkpoints, partition, co);
          break;
        }
        case ObservableKind::Pair: {
          PairOptions po;
          po.threads = options.threads;
          po.fluctuation_scale = config.fluctuation_scale;
          po.split = obs.split;
          po.window_half_width = obs.window_half_width;
          res.pairs = pair_correlation_curve(traj, obs.z_checkpoints, po);
          break;
        }
        case ObservableKind::PolarizationPair: {
          PairOptions po;
          po.threads = options.threads;
          po.fluctuation_scale = config.fluctuation_scale;
          po.polarization = obs.polarization;
          res.pairs = polarization_correlation_curve(traj, obs.z_checkpoints, po);
          break;
        }
      }
      out.observables.push_back(std::move(res));
    }

    if (config.oracle) {
      double z_oracle = config.z_max();
      for (const auto& obs : config.observables) {
        for (double z : obs.z_checkpoints) {
          if (z > 0.0) z_oracle = std::min(z_oracle, z);
        }
      }
      // The dense matrix is built on a reduced copy of the run.
      const auto small = make_grid(std::min(grid_n, kOracleMaxGrid), config.t_half_span);
      std::vector<Field> small_fields;
      if (vector) {
        const auto init = init_vector_pair(out.vector, small);
        small_fields = {init.u.samples, init.v.samples};
      } else {
        small_fields = {init_scalar_pair(out.scalar, small).samples};
      }
      log_line(options, "[" + tuple.id() + "] Green-matrix oracle at z = " + short_number(z_oracle) +
                            " on " + std::to_string(small->size()) + " samples");
      const auto small_traj = propagate(small_fields, small, coupling, z_oracle, config.z_step);
      out.oracle = run_oracle(small_traj, z_oracle, map_component, options.threads);
    }
    out.ok = true;
  } catch (const std::exception& e) {
    out.ok = false;
    out.error = e.what();
    out.observables.clear();
    log_line(options, "[" + tuple.id() + "] failed: " + out.error);
  }
  return out;
}

}  // namespace

void ScenarioConfig::validate() const {
  if (name.empty()) config_error("name must not be empty");
  const auto grid = make_grid(grid_n, t_half_span);
  if (!(z_step > 0.0) || !std::isfinite(z_step)) config_error("solver.z_step must be positive");
  if (!(trace_spacing >= 0.0) || !std::isfinite(trace_spacing)) {
    config_error("solver.trace_spacing must be >= 0");
  }
  if (trace_spacing > 0.0 && !is_multiple(trace_spacing, z_step)) {
    config_error("solver.trace_spacing must be a multiple of solver.z_step");
  }
  if (!(fluctuation_scale > 0.0) || !std::isfinite(fluctuation_scale)) {
    config_error("fluctuation_scale must be positive");
  }
  if (observables.empty()) config_error("at least one observable is required");
  const bool is_vector = system == SystemKind::Vector;
  for (std::size_t i = 0; i < observables.size(); ++i) {
    const auto& o = observables[i];
    const std::string where = "observables[" + std::to_string(i) + "]";
    if (o.z_checkpoints.empty()) config_error(where + ".z_checkpoints is empty");
    for (double z : o.z_checkpoints) {
      if (!(z >= 0.0) || !std::isfinite(z)) config_error(where + ": z must be finite and >= 0");
      if (!is_multiple(z, z_step)) {
        config_error(where + ": z = " + short_number(z) + " is not a multiple of z_step " +
                     short_number(z_step));
      }
    }
    switch (o.kind) {
      case ObservableKind::Map:
        try {
          SlotPartition::uniform(*grid, o.window_begin, o.window_end, o.slot_width);
        } catch (const ValidationError& e) {
          config_error(where + ": " + e.what());
        }
        break;
      case ObservableKind::Pair:
        if (is_vector) config_error(where + ": pair needs a scalar system (use polarization_pair)");
        if (!(o.window_half_width > 0.0)) config_error(where + ".window_half_width must be positive");
        break;
      case ObservableKind::PolarizationPair:
        if (!is_vector) config_error(where + ": polarization_pair needs a vector system");
        break;
    }
  }
  if (is_vector) {
    if (!sweep.rho.empty() || !sweep.theta.empty() || !sweep.gamma.empty()) {
      config_error("sweep over rho/theta/gamma applies to scalar systems only");
    }
  } else if (!sweep.t1.empty() || !sweep.b_coeff.empty()) {
    config_error("sweep over t1/b_coeff applies to vector systems only");
  }
  for (const auto& tuple : expand_sweep(*this)) {
    SolitonPairSpec s = scalar;
    VectorPairSpec v = vector;
    for (const auto& [key, value] : tuple.values) {
      if (key == "rho") s.rho = value;
      if (key == "theta") s.theta = value;
      if (key == "gamma") s.gamma = value;
      if (key == "t1") v.t1 = value;
      if (key == "b_coeff") v.b_coeff = value;
    }
    try {
      if (is_vector) {
        v.validate();
      } else {
        s.validate();
      }
    } catch (const ValidationError& e) {
      config_error("initial condition for " + tuple.id() + ": " + e.what());
    }
  }
}

double ScenarioConfig::z_max() const {
  double z = 0.0;
  for (const auto& o : observables) {
    for (double v : o.z_checkpoints) z = std::max(z, v);
  }
  return z;
}

json to_json(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["figure"] = c.figure;
  j["description"] = c.description;
  j["system"] = c.system == SystemKind::Scalar ? "scalar" : "vector";
  if (c.system == SystemKind::Scalar) {
    j["initial"] = {{"gamma", c.scalar.gamma}, {"theta", c.scalar.theta}, {"rho", c.scalar.rho}};
  } else {
    j["initial"] = {{"t1", c.vector.t1}, {"a_coeff", c.vector.a_coeff}, {"b_coeff", c.vector.b_coeff}};
  }
  j["grid"] = {{"n", c.grid_n}, {"t_half_span", c.t_half_span}};
  j["solver"] = {{"z_step", c.z_step}, {"trace_spacing", c.trace_spacing}};
  j["fluctuation_scale"] = c.fluctuation_scale;
  json obs = json::array();
  for (const auto& o : c.observables) {
    json e;
    e["kind"] = kind_name(o.kind);
    e["z_checkpoints"] = o.z_checkpoints;
    switch (o.kind) {
      case ObservableKind::Map:
        e["slot_width"] = o.slot_width;
        e["window"] = {o.window_begin, o.window_end};
        break;
      case ObservableKind::Pair:
        e["split"] = split_name(o.split);
        e["window_half_width"] = o.window_half_width;
        break;
      case ObservableKind::PolarizationPair:
        e["mode"] = mode_name(o.polarization);
        e["window_half_width"] = o.window_half_width;
        break;
    }
    obs.push_back(std::move(e));
  }
  j["observables"] = std::move(obs);
  json sweep = json::object();
  auto put = [&](const char* key, const std::vector<double>& v) {
    if (!v.empty()) sweep[key] = v;
  };
  put("rho", c.sweep.rho);
  put("theta", c.sweep.theta);
  put("gamma", c.sweep.gamma);
  put("t1", c.sweep.t1);
  put("b_coeff", c.sweep.b_coeff);
  j["sweep"] = std::move(sweep);
  j["output"] = c.output;
  j["oracle"] = c.oracle;
  return j;
}

ScenarioConfig scenario_from_json(const json& j) {
  ScenarioConfig c;
  ObjectReader r(j, "scenario");
  r.string("name", c.name);
  r.string("figure", c.figure);
  r.string("description", c.description);
  std::string system = "scalar";
  r.string("system", system);
  if (system == "scalar") {
    c.system = SystemKind::Scalar;
  } else if (system == "vector") {
    c.system = SystemKind::Vector;
  } else {
    config_error("scenario.system must be scalar or vector");
  }
  if (r.has("initial")) {
    ObjectReader init(r.raw("initial"), "scenario.initial");
    if (c.system == SystemKind::Scalar) {
      init.number("gamma", c.scalar.gamma);
      init.number("theta", c.scalar.theta);
      init.number("rho", c.scalar.rho);
    } else {
      init.number("t1", c.vector.t1);
      init.number("a_coeff", c.vector.a_coeff);
      init.number("b_coeff", c.vector.b_coeff);
    }
    init.finish();
  }
  if (r.has("grid")) {
    ObjectReader g(r.raw("grid"), "scenario.grid");
    g.count("n", c.grid_n);
    g.number("t_half_span", c.t_half_span);
    g.finish();
  }
  if (r.has("solver")) {
    ObjectReader s(r.raw("solver"), "scenario.solver");
    s.number("z_step", c.z_step);
    s.number("trace_spacing", c.trace_spacing);
    s.finish();
  }
  r.number("fluctuation_scale", c.fluctuation_scale);
  if (r.has("observables")) {
    const auto& arr = r.raw("observables");
    if (!arr.is_array()) config_error("scenario.observables must be an array");
    for (std::size_t i = 0; i < arr.size(); ++i) {
      c.observables.push_back(parse_observable(arr[i], "scenario.observables[" + std::to_string(i) + "]"));
    }
  }
  if (r.has("sweep")) {
    ObjectReader s(r.raw("sweep"), "scenario.sweep");
    s.numbers("rho", c.sweep.rho);
    s.numbers("theta", c.sweep.theta);
    s.numbers("gamma", c.sweep.gamma);
    s.numbers("t1", c.sweep.t1);
    s.numbers("b_coeff", c.sweep.b_coeff);
    s.finish();
  }
  r.string("output", c.output);
  r.boolean("oracle", c.oracle);
  r.finish();
  c.validate();
  return c;
}

ScenarioConfig load_scenario(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) config_error("cannot open scenario file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    config_error("malformed JSON in " + path.string() + ": " + e.what());
  }
  return scenario_from_json(j);
}

std::string ParameterTuple::id() const {
  if (values.empty()) return "base";
  std::string s;
  for (const auto& [name, value] : values) {
    if (!s.empty()) s += "_";
    s += name + short_number(value);
  }
  return s;
}

std::vector<ParameterTuple> expand_sweep(const ScenarioConfig& config) {
  std::vector<std::pair<std::string, const std::vector<double>*>> axes;
  if (config.system == SystemKind::Scalar) {
    axes = {{"rho", &config.sweep.rho}, {"theta", &config.sweep.theta}, {"gamma", &config.sweep.gamma}};
  } else {
    axes = {{"t1", &config.sweep.t1}, {"b_coeff", &config.sweep.b_coeff}};
  }
  std::vector<ParameterTuple> tuples{ParameterTuple{}};
  for (const auto& [name, values] : axes) {
    if (values->empty()) continue;
    std::vector<ParameterTuple> next;
    for (const auto& t : tuples) {
      for (double v : *values) {
        auto copy = t;
        copy.values.emplace_back(name, v);
        next.push_back(std::move(copy));
      }
    }
    tuples = std::move(next);
  }
  return tuples;
}

std::size_t ScenarioResult::failed() const {
  std::size_t n = 0;
  for (const auto& t : tuples) n += t.ok ? 0 : 1;
  return n;
}

ScenarioResult run_scenario(const ScenarioConfig& config, const RunOptions& options) {
  config.validate();
  ScenarioResult result;
  result.config = config;
  // Tuples run one after another so only one trajectory is alive at a time;
  // threads are spent on the functionals within a tuple.
  for (const auto& tuple : expand_sweep(config)) {
    result.tuples.push_back(run_tuple(config, tuple, config.grid_n, options));
  }
  return result;
}

}  // namespace qsol
