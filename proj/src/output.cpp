#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>

#include "qsoliton/scenario.hpp"

namespace qsol {

using nlohmann::json;

namespace {

class CsvWriter {
public:
  explicit CsvWriter(const std::filesystem::path& path) : out_(path, std::ios::binary) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
  }

  CsvWriter& text(const std::string& s) {
    sep();
    out_ << s;
    return *this;
  }
  CsvWriter& number(double v) { return text(format_number(v)); }
  void end_row() {
    out_ << '\n';
    first_ = true;
  }

private:
  void sep() {
    if (!first_) out_ << ',';
    first_ = false;
  }

  std::ofstream out_;
  bool first_ = true;
};

std::string z_tag(double z) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", z);
  return buf;
}

// "map", "c12", "cxy", with an index suffix when a kind appears more than once.
std::vector<std::string> observable_stems(const ScenarioConfig& config) {
  std::map<ObservableKind, int> seen;
  for (const auto& o : config.observables) ++seen[o.kind];
  std::map<ObservableKind, int> used;
  std::vector<std::string> stems;
  for (const auto& o : config.observables) {
    std::string base = o.kind == ObservableKind::Map    ? "map"
                       : o.kind == ObservableKind::Pair ? "c12"
                                                        : "cxy";
    const int idx = used[o.kind]++;
    if (seen[o.kind] > 1) base += std::to_string(idx);
    stems.push_back(base);
  }
  return stems;
}

void write_map(const CorrelationMap& map, const std::filesystem::path& path) {
  CsvWriter csv(path);
  csv.text("t_center");
  for (double c : map.partition.centers) csv.number(c);
  csv.end_row();
  const auto m = map.c.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    csv.number(map.partition.centers[static_cast<std::size_t>(i)]);
    for (Eigen::Index j = 0; j < m; ++j) {
      const bool masked = map.masked[static_cast<std::size_t>(i)] || map.masked[static_cast<std::size_t>(j)];
      csv.number(masked ? std::nan("") : map.c(i, j));
    }
    csv.end_row();
  }
}

// Plain grayscale image, C = -1 black, C = +1 white.
void write_pgm(const CorrelationMap& map, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  const auto m = map.c.rows();
  out << "P2\n" << m << ' ' << m << "\n255\n";
  for (Eigen::Index i = m; i-- > 0;) {
    for (Eigen::Index j = 0; j < m; ++j) {
      const double v = std::clamp(map.c(i, j), -1.0, 1.0);
      out << std::lround((v + 1.0) * 127.5) << (j + 1 == m ? '\n' : ' ');
    }
  }
}

void write_pair_detail(const std::vector<PairCorrelation>& pairs, const std::filesystem::path& path) {
  CsvWriter csv(path);
  for (const char* h : {"z", "c12", "boundary", "fallback", "cov11", "cov22", "cov12", "cov12_imag"}) {
    csv.text(h);
  }
  csv.end_row();
  for (const auto& p : pairs) {
    csv.number(p.z).number(p.c12).number(p.boundary).text(p.fallback ? "1" : "0");
    csv.number(p.cov11).number(p.cov22).number(p.cov12).number(p.cov12_imag);
    csv.end_row();
  }
}

void write_trace(const ClassicalTrace& tr, const std::filesystem::path& path) {
  CsvWriter csv(path);
  const bool vector = !tr.x_slot_energy.empty();
  csv.text("z").text("peak_separation").text("photon_number").text("hamiltonian");
  if (vector) csv.text("x_slot_energy").text("y_slot_energy");
  csv.end_row();
  for (std::size_t i = 0; i < tr.z.size(); ++i) {
    csv.number(tr.z[i]).number(tr.peak_separation[i]).number(tr.photon_number[i]).number(tr.hamiltonian[i]);
    if (vector) csv.number(tr.x_slot_energy[i]).number(tr.y_slot_energy[i]);
    csv.end_row();
  }
}

json conserved_json(const TupleResult& t) {
  auto rel = [](double a, double b) { return b != 0.0 ? std::abs(a - b) / std::abs(b) : std::abs(a); };
  return {{"photon_number_start", t.conserved_start.photon_number},
          {"photon_number_end", t.conserved_end.photon_number},
          {"photon_number_drift", rel(t.conserved_end.photon_number, t.conserved_start.photon_number)},
          {"hamiltonian_start", t.conserved_start.hamiltonian},
          {"hamiltonian_end", t.conserved_end.hamiltonian},
          {"hamiltonian_drift", rel(t.conserved_end.hamiltonian, t.conserved_start.hamiltonian)}};
}

}  // namespace

std::string format_number(double value) {
  if (std::isnan(value)) return "nan";
  if (std::isinf(value)) return value > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12e", value);
  return buf;
}

std::vector<std::string> write_outputs(const ScenarioResult& result, const std::filesystem::path& dir,
                                       const OutputOptions& options) {
  std::filesystem::create_directories(dir);
  std::vector<std::string> files;
  const auto& config = result.config;
  const auto stems = observable_stems(config);

  for (std::size_t o = 0; o < config.observables.size(); ++o) {
    const auto& obs = config.observables[o];
    if (obs.kind == ObservableKind::Map) {
      for (const auto& t : result.tuples) {
        if (!t.ok) continue;
        for (const auto& map : t.observables[o].maps) {
          const std::string name = stems[o] + "_" + t.parameters.id() + "_z" + z_tag(map.z);
          write_map(map, dir / (name + ".csv"));
          files.push_back(name + ".csv");
          if (options.pgm) {
            write_pgm(map, dir / (name + ".pgm"));
            files.push_back(name + ".pgm");
          }
        }
      }
      continue;
    }
    const std::string summary = stems[o] + "_vs_z.csv";
    CsvWriter csv(dir / summary);
    csv.text("z");
    for (const auto& t : result.tuples) csv.text(t.parameters.id());
    csv.end_row();
    for (std::size_t i = 0; i < obs.z_checkpoints.size(); ++i) {
      csv.number(obs.z_checkpoints[i]);
      for (const auto& t : result.tuples) csv.number(t.ok ? t.observables[o].pairs[i].c12 : std::nan(""));
      csv.end_row();
    }
    files.push_back(summary);
    for (const auto& t : result.tuples) {
      if (!t.ok) continue;
      const std::string name = stems[o] + "_" + t.parameters.id() + ".csv";
      write_pair_detail(t.observables[o].pairs, dir / name);
      files.push_back(name);
    }
  }

  for (const auto& t : result.tuples) {
    if (!t.ok || t.trace.z.empty()) continue;
    const std::string name = "classical_" + t.parameters.id() + ".csv";
    write_trace(t.trace, dir / name);
    files.push_back(name);
  }

  json meta;
  meta["scenario"] = to_json(config);
  meta["warnings"] = result.warnings;
  json tuples = json::array();
  for (const auto& t : result.tuples) {
    json e;
    e["id"] = t.parameters.id();
    json params = json::object();
    for (const auto& [k, v] : t.parameters.values) params[k] = v;
    e["parameters"] = std::move(params);
    e["status"] = t.ok ? "ok" : "failed";
    if (!t.ok) e["error"] = t.error;
    e["warnings"] = t.warnings;
    if (t.ok) e["conserved"] = conserved_json(t);
    if (t.oracle) {
      e["oracle"] = {{"z", t.oracle->z},
                     {"grid_n", t.oracle->grid_n},
                     {"covariance_error", t.oracle->covariance_error},
                     {"unitarity_defect", t.oracle->unitarity_defect},
                     {"symmetry_defect", t.oracle->symmetry_defect}};
    }
    tuples.push_back(std::move(e));
  }
  meta["tuples"] = std::move(tuples);
  files.push_back("meta.json");
  meta["files"] = files;
  std::ofstream out(dir / "meta.json", std::ios::binary);
  out << meta.dump(2) << '\n';
  return files;
}

}  // namespace qsol
