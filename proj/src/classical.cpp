#include "qsoliton/classical.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numbers>
#include <sstream>

namespace qsol {

namespace {

double sech(double x) { return 1.0 / std::cosh(x); }

void require_finite(double value, const char* name) {
  if (!std::isfinite(value)) throw ValidationError(std::string(name) + " must be finite");
}

void warn_overhang(const TimeGrid& grid, double offset, std::vector<std::string>* warnings) {
  if (warnings == nullptr) return;
  const double edge = sech(grid.t_half_span() - offset);
  if (edge >= 1e-5) {
    std::ostringstream os;
    os << "pulse at |t| = " << offset << " overhangs the window (sech at edge = " << edge << ")";
    warnings->push_back(os.str());
  }
}

// Caches exp(-i omega^2 s / 2) / n (inverse FFT scale folded in) for the handful of distinct lengths a run uses.
class DispersionCache {
public:
  explicit DispersionCache(const TimeGrid& grid) : grid_(grid) {}

  const std::vector<cdouble>& get(double length) {
    auto it = cache_.find(length);
    if (it == cache_.end()) {
      auto mult = dispersion_multiplier(grid_, length);
      const double scale = 1.0 / static_cast<double>(mult.size());
      for (auto& v : mult) v *= scale;
      it = cache_.emplace(length, std::move(mult)).first;
    }
    return it->second;
  }

private:
  const TimeGrid& grid_;
  std::map<double, std::vector<cdouble>> cache_;
};

void apply_dispersion(const SpectralTransform& fft, std::span<cdouble> field,
                      const std::vector<cdouble>& multiplier) {
  fft.forward(field);
  for (std::size_t k = 0; k < field.size(); ++k) field[k] *= multiplier[k];
  fft.inverse_unscaled(field);
}

std::vector<double> step_schedule(double z_target, double step) {
  if (!(step > 0.0) || !std::isfinite(step)) throw ValidationError("z step must be positive");
  if (!(z_target >= 0.0) || !std::isfinite(z_target)) {
    throw ValidationError("propagation distance must be non-negative");
  }
  const double ratio = z_target / step;
  auto count = static_cast<std::size_t>(std::ceil(ratio - 1e-9));
  std::vector<double> lengths(count, step);
  if (count > 0) lengths.back() = z_target - static_cast<double>(count - 1) * step;
  // Nearly exact multiples keep the nominal length so checkpoints line up.
  if (count > 0 && std::abs(lengths.back() - step) <= 1e-9 * step) lengths.back() = step;
  return lengths;
}

void check_inputs(const std::vector<Field>& fields, const TimeGrid& grid,
                  const KerrCoupling& coupling) {
  if (fields.size() != coupling.components()) {
    throw ValidationError("number of fields does not match the Kerr coupling");
  }
  for (const auto& f : fields) {
    if (f.size() != grid.size()) throw ValidationError("field does not match grid size");
    for (const auto& v : f) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
        throw ValidationError("field contains non-finite samples");
      }
    }
  }
}

bool all_finite(std::span<const Field> fields) {
  for (const auto& f : fields) {
    for (const auto& v : f) {
      if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) return false;
    }
  }
  return true;
}

// Runs the merged Strang sweep, calling record(k, fields) with the Kerr input
// of every step. Returns the fields at z_target.
template <typename Recorder>
std::vector<Field> strang_sweep(std::vector<Field> fields, const TimeGrid& grid,
                                const KerrCoupling& coupling, const std::vector<double>& lengths,
                                Recorder&& record) {
  SpectralTransform fft(grid.size());
  DispersionCache dispersion(grid);
  const std::size_t n_steps = lengths.size();
  for (std::size_t k = 0; k < n_steps; ++k) {
    const double pre = k == 0 ? 0.5 * lengths[0] : 0.5 * (lengths[k - 1] + lengths[k]);
    const auto& mult = dispersion.get(pre);
    for (auto& f : fields) apply_dispersion(fft, f, mult);
    record(k, std::span<const Field>(fields));
    kerr_rotation(fields, coupling, lengths[k]);
    if (k % 256 == 255 && !all_finite(fields)) {
      throw NumericalError("non-finite field encountered at step " + std::to_string(k));
    }
  }
  if (n_steps > 0) {
    const auto& mult = dispersion.get(0.5 * lengths.back());
    for (auto& f : fields) apply_dispersion(fft, f, mult);
  }
  if (!all_finite(fields)) throw NumericalError("non-finite field at end of propagation");
  return fields;
}

}  // namespace

void SolitonPairSpec::validate() const {
  require_finite(gamma, "gamma");
  require_finite(theta, "theta");
  require_finite(rho, "rho");
  if (!(gamma > 0.0)) throw ValidationError("gamma must be positive");
  if (rho < 0.0) throw ValidationError("rho must be non-negative");
  if (theta < 0.0 || theta >= 2.0 * std::numbers::pi) {
    throw ValidationError("theta must lie in [0, 2pi)");
  }
}

void VectorPairSpec::validate() const {
  require_finite(t1, "t1");
  require_finite(a_coeff, "a_coeff");
  require_finite(b_coeff, "b_coeff");
  if (t1 < 0.0) throw ValidationError("t1 must be non-negative");
  if (!(a_coeff > 0.0)) throw ValidationError("a_coeff must be positive");
  if (b_coeff < 0.0) throw ValidationError("b_coeff must be non-negative");
}

KerrCoupling KerrCoupling::scalar(double coefficient) { return {1, {coefficient}}; }

KerrCoupling KerrCoupling::vector(double a_coeff, double b_coeff) {
  return {2, {a_coeff, b_coeff, b_coeff, a_coeff}};
}

ComplexEnvelope init_scalar_pair(const SolitonPairSpec& spec, const GridPtr& grid,
                                 std::vector<std::string>* warnings) {
  spec.validate();
  warn_overhang(*grid, spec.rho, warnings);
  const cdouble phase = std::polar(spec.gamma, spec.theta);
  Field u(grid->size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double t = grid->t(k);
    u[k] = sech(t + spec.rho) + phase * sech(t - spec.rho);
  }
  return {grid, std::move(u)};
}

VectorEnvelopes init_vector_pair(const VectorPairSpec& spec, const GridPtr& grid,
                                 std::vector<std::string>* warnings) {
  spec.validate();
  warn_overhang(*grid, spec.t1, warnings);
  Field u(grid->size());
  Field v(grid->size());
  for (std::size_t k = 0; k < u.size(); ++k) {
    const double t = grid->t(k);
    const double lead = sech(t + spec.t1);
    const double trail = sech(t - spec.t1);
    u[k] = lead + trail;
    v[k] = lead - trail;
  }
  return {{grid, std::move(u)}, {grid, std::move(v)}};
}

Field polarization_x(std::span<const cdouble> u, std::span<const cdouble> v) {
  Field out(u.size());
  const double s = 1.0 / std::numbers::sqrt2;
  for (std::size_t k = 0; k < u.size(); ++k) out[k] = (u[k] + v[k]) * s;
  return out;
}

Field polarization_y(std::span<const cdouble> u, std::span<const cdouble> v) {
  Field out(u.size());
  const cdouble s = 1.0 / (cdouble(0.0, 1.0) * std::numbers::sqrt2);
  for (std::size_t k = 0; k < u.size(); ++k) out[k] = (u[k] - v[k]) * s;
  return out;
}

std::vector<cdouble> dispersion_multiplier(const TimeGrid& grid, double length) {
  const auto omega = grid.omega();
  std::vector<cdouble> mult(grid.size());
  for (std::size_t k = 0; k < mult.size(); ++k) {
    mult[k] = std::polar(1.0, -0.5 * omega[k] * omega[k] * length);
  }
  return mult;
}

void kerr_rotation(std::span<Field> fields, const KerrCoupling& coupling, double h) {
  const std::size_t m = coupling.components();
  const std::size_t n = fields[0].size();
  for (std::size_t k = 0; k < n; ++k) {
    double intensity[2] = {0.0, 0.0};
    for (std::size_t c = 0; c < m; ++c) intensity[c] = std::norm(fields[c][k]);
    for (std::size_t c = 0; c < m; ++c) {
      double rate = 0.0;
      for (std::size_t d = 0; d < m; ++d) rate += coupling(c, d) * intensity[d];
      fields[c][k] *= std::polar(1.0, rate * h);
    }
  }
}

std::size_t Trajectory::checkpoint_index(double z) const {
  const auto it = std::lower_bound(z_.begin(), z_.end(), z - 1e-9 * std::max(1.0, std::abs(z)));
  if (it != z_.end() && std::abs(*it - z) <= 1e-9 * std::max(1.0, std::abs(z))) {
    return static_cast<std::size_t>(it - z_.begin());
  }
  std::ostringstream os;
  os << "z = " << z << " is not a stored checkpoint (step " << nominal_step_ << ", end "
     << z_end() << ")";
  throw ValidationError(os.str());
}

struct TrajectoryReader::Impl {
  Impl(const TimeGrid& grid, std::size_t m) : fft(grid.size()), dispersion(grid), scratch(m) {}

  SpectralTransform fft;
  DispersionCache dispersion;
  std::size_t segment = static_cast<std::size_t>(-1);
  std::size_t loaded = 0;  // steps held in `buffer`
  Field buffer;            // [step in segment][component][sample]
  std::vector<Field> scratch;
};

TrajectoryReader::TrajectoryReader(const Trajectory& traj)
    : traj_(traj), impl_(std::make_unique<Impl>(traj.grid(), traj.components())) {}

TrajectoryReader::~TrajectoryReader() = default;

std::span<const cdouble> TrajectoryReader::kerr_input(std::size_t step, std::size_t component) {
  if (step >= traj_.num_steps()) throw ValidationError("step index out of range");
  constexpr std::size_t seg_len = Trajectory::kSegmentSteps;
  const std::size_t m = traj_.components();
  const std::size_t n = traj_.grid().size();
  const std::size_t segment = step / seg_len;
  auto& s = *impl_;
  if (segment != s.segment) {
    const std::size_t first = segment * seg_len;
    s.loaded = std::min(seg_len, traj_.num_steps() - first);
    s.buffer.resize(s.loaded * m * n);
    const auto anchor = traj_.anchors_.begin() + static_cast<std::ptrdiff_t>(segment * m * n);
    std::copy(anchor, anchor + static_cast<std::ptrdiff_t>(m * n), s.buffer.begin());
    // Same operation sequence as strang_sweep.
    for (std::size_t j = 1; j < s.loaded; ++j) {
      const std::size_t k = first + j;
      for (std::size_t c = 0; c < m; ++c) {
        const auto src = s.buffer.begin() + static_cast<std::ptrdiff_t>(((j - 1) * m + c) * n);
        s.scratch[c].assign(src, src + static_cast<std::ptrdiff_t>(n));
      }
      kerr_rotation(s.scratch, traj_.coupling(), traj_.step_length(k - 1));
      const auto& mult =
          s.dispersion.get(0.5 * (traj_.step_length(k - 1) + traj_.step_length(k)));
      for (std::size_t c = 0; c < m; ++c) {
        apply_dispersion(s.fft, s.scratch[c], mult);
        std::copy(s.scratch[c].begin(), s.scratch[c].end(),
                  s.buffer.begin() + static_cast<std::ptrdiff_t>((j * m + c) * n));
      }
    }
    s.segment = segment;
  }
  const std::size_t offset = ((step - segment * seg_len) * m + component) * n;
  return {s.buffer.data() + offset, n};
}

std::vector<Field> TrajectoryReader::fields_at(std::size_t k) {
  if (k > traj_.num_steps()) throw ValidationError("checkpoint index out of range");
  if (k == 0) return traj_.initial_;
  std::vector<Field> fields;
  for (std::size_t c = 0; c < traj_.components(); ++c) {
    const auto src = kerr_input(k - 1, c);
    fields.emplace_back(src.begin(), src.end());
  }
  const double h = traj_.step_length(k - 1);
  kerr_rotation(fields, traj_.coupling(), h);
  const auto& mult = impl_->dispersion.get(0.5 * h);
  for (auto& f : fields) apply_dispersion(impl_->fft, f, mult);
  return fields;
}

std::vector<Field> Trajectory::fields_at(std::size_t k) const {
  TrajectoryReader reader(*this);
  return reader.fields_at(k);
}

Trajectory propagate(std::vector<Field> fields, const GridPtr& grid, const KerrCoupling& coupling,
                     double z_target, double step, std::size_t memory_limit) {
  check_inputs(fields, *grid, coupling);
  const auto lengths = step_schedule(z_target, step);
  const std::size_t m = coupling.components();
  const std::size_t n = grid->size();
  const std::size_t segments = (lengths.size() + Trajectory::kSegmentSteps - 1) / Trajectory::kSegmentSteps;
  const std::size_t bytes = segments * m * n * sizeof(cdouble);
  if (bytes > memory_limit) {
    std::ostringstream os;
    os << "trajectory would need " << bytes / (1 << 20) << " MiB (limit "
       << memory_limit / (1 << 20) << " MiB); use a larger step or a shorter distance";
    throw NumericalError(os.str());
  }

  Trajectory traj(grid, coupling);
  traj.nominal_step_ = step;
  traj.step_lengths_ = lengths;
  traj.z_.resize(lengths.size() + 1);
  traj.z_[0] = 0.0;
  for (std::size_t k = 0; k < lengths.size(); ++k) {
    traj.z_[k + 1] = k + 1 == lengths.size() ? z_target : static_cast<double>(k + 1) * step;
  }
  traj.initial_ = fields;
  traj.anchors_.resize(segments * m * n);

  bool boundary_warned = false;
  auto record = [&](std::size_t k, std::span<const Field> current) {
    for (std::size_t c = 0; c < m; ++c) {
      if (k % Trajectory::kSegmentSteps == 0) {
        const std::size_t segment = k / Trajectory::kSegmentSteps;
        std::copy(current[c].begin(), current[c].end(),
                  traj.anchors_.begin() + static_cast<std::ptrdiff_t>((segment * m + c) * n));
      }
      if (!boundary_warned && boundary_energy_fraction(current[c]) > kBoundaryEnergyTolerance) {
        boundary_warned = true;
        std::ostringstream os;
        os << "boundary energy above " << kBoundaryEnergyTolerance << " of peak at z = "
           << traj.z_[k] << " (component " << c << ")";
        traj.warnings_.push_back(os.str());
      }
    }
  };
  strang_sweep(std::move(fields), *grid, coupling, lengths, record);
  return traj;
}

Trajectory propagate_scalar(const ComplexEnvelope& field, double z_target, double step,
                            double kerr_coefficient) {
  return propagate({field.samples}, field.grid, KerrCoupling::scalar(kerr_coefficient), z_target,
                   step);
}

Trajectory propagate_vector(const ComplexEnvelope& u, const ComplexEnvelope& v, double z_target,
                            double step, const VectorPairSpec& spec) {
  spec.validate();
  if (u.grid != v.grid) throw ValidationError("U and V must share a grid");
  return propagate({u.samples, v.samples}, u.grid, KerrCoupling::vector(spec.a_coeff, spec.b_coeff),
                   z_target, step);
}

std::vector<Field> propagate_endpoint(std::vector<Field> fields, const GridPtr& grid,
                                      const KerrCoupling& coupling, double z_target, double step) {
  check_inputs(fields, *grid, coupling);
  const auto lengths = step_schedule(z_target, step);
  return strang_sweep(std::move(fields), *grid, coupling, lengths,
                      [](std::size_t, std::span<const Field>) {});
}

ConservedQuantities conserved_quantities(const TimeGrid& grid, std::span<const Field> fields,
                                         const KerrCoupling& coupling) {
  ConservedQuantities q;
  SpectralTransform fft(grid.size());
  const auto omega = grid.omega();
  const double dt = grid.dt();
  const double spectral_weight = dt / static_cast<double>(grid.size());
  for (const auto& f : fields) {
    q.photon_number += norm_squared(grid, f);
    Field spectrum = f;
    fft.forward(spectrum);
    double kinetic = 0.0;
    for (std::size_t k = 0; k < spectrum.size(); ++k) {
      const double power = std::norm(spectrum[k]);
      q.momentum += omega[k] * power * spectral_weight;
      kinetic += omega[k] * omega[k] * power;
    }
    q.hamiltonian += 0.5 * kinetic * spectral_weight;
  }
  const std::size_t m = coupling.components();
  double potential = 0.0;
  for (std::size_t k = 0; k < grid.size(); ++k) {
    for (std::size_t c = 0; c < m; ++c) {
      for (std::size_t d = 0; d < m; ++d) {
        potential += coupling(c, d) * std::norm(fields[c][k]) * std::norm(fields[d][k]);
      }
    }
  }
  q.hamiltonian -= 0.5 * potential * dt;
  return q;
}

std::optional<PeakPair> find_peak_pair(const TimeGrid& grid, std::span<const cdouble> field,
                                       double min_ratio) {
  const std::size_t n = field.size();
  std::vector<double> intensity(n);
  for (std::size_t k = 0; k < n; ++k) intensity[k] = std::norm(field[k]);
  std::vector<std::size_t> maxima;
  for (std::size_t k = 1; k + 1 < n; ++k) {
    if (intensity[k] > intensity[k - 1] && intensity[k] >= intensity[k + 1]) maxima.push_back(k);
  }
  if (maxima.size() < 2) return std::nullopt;
  std::stable_sort(maxima.begin(), maxima.end(), [&](std::size_t a, std::size_t b) {
    if (intensity[a] != intensity[b]) return intensity[a] > intensity[b];
    return std::abs(grid.t(a)) > std::abs(grid.t(b));
  });
  if (intensity[maxima[1]] < min_ratio * intensity[maxima[0]]) return std::nullopt;
  PeakPair p;
  p.left = std::min(maxima[0], maxima[1]);
  p.right = std::max(maxima[0], maxima[1]);
  p.trough = p.left;
  for (std::size_t k = p.left; k <= p.right; ++k) {
    if (intensity[k] < intensity[p.trough]) p.trough = k;
  }
  p.separation = grid.t(p.right) - grid.t(p.left);
  return p;
}

}  // namespace qsol
