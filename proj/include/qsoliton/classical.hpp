#pragma once

#include <cstddef>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qsoliton/grid.hpp"

namespace qsol {

/// Raised when a propagation produces non-finite samples or exceeds its
/// memory budget.
class NumericalError : public std::runtime_error {
public:
  using std::runtime_error::runtime_error;
};

/// Sampled classical field in soliton units.
struct ComplexEnvelope {
  GridPtr grid;
  Field samples;
};

/// sech(t + rho) + gamma * sech(t - rho) * exp(i theta).
struct SolitonPairSpec {
  double gamma = 1.0;
  double theta = 0.0;
  double rho = 3.5;

  void validate() const;
};

/// U = sech(t + t1) + sech(t - t1), V = sech(t + t1) - sech(t - t1), evolved
/// under self-phase coefficient A and cross-phase coefficient B.
struct VectorPairSpec {
  double t1 = 3.5;
  double a_coeff = 1.0;
  double b_coeff = 2.0;

  void validate() const;
};

/// Symmetric Kerr matrix G: component c picks up the nonlinear phase rate
/// sum_d G(c, d) |u_d|^2. Scalar NLSE is G = [[1]]; the coupled system is
/// G = [[A, B], [B, A]].
class KerrCoupling {
public:
  static KerrCoupling scalar(double coefficient = 1.0);
  static KerrCoupling vector(double a_coeff, double b_coeff);

  std::size_t components() const { return m_; }
  double operator()(std::size_t c, std::size_t d) const { return g_[c * m_ + d]; }

private:
  KerrCoupling(std::size_t m, std::vector<double> g) : m_(m), g_(std::move(g)) {}
  std::size_t m_;
  std::vector<double> g_;
};

ComplexEnvelope init_scalar_pair(const SolitonPairSpec& spec, const GridPtr& grid,
                                 std::vector<std::string>* warnings = nullptr);

struct VectorEnvelopes {
  ComplexEnvelope u;
  ComplexEnvelope v;
};

VectorEnvelopes init_vector_pair(const VectorPairSpec& spec, const GridPtr& grid,
                                 std::vector<std::string>* warnings = nullptr);

/// Linear-polarization components: E_x = (U + V)/sqrt2, E_y = (U - V)/(i sqrt2).
Field polarization_x(std::span<const cdouble> u, std::span<const cdouble> v);
Field polarization_y(std::span<const cdouble> u, std::span<const cdouble> v);

/// Exact dispersion multiplier exp(-i omega^2 length / 2) per spectral bin.
std::vector<cdouble> dispersion_multiplier(const TimeGrid& grid, double length);

class TrajectoryReader;

/// Classical background recorded along z.
///
/// Every Strang step k maps the field at z_k to z_{k+1} as
///   half dispersion -> Kerr rotation over h_k -> half dispersion.
/// The linearized propagator needs, for every step, the field entering the
/// Kerr rotation (the "Kerr input"). Only every kSegmentSteps-th Kerr input
/// is kept; a TrajectoryReader regenerates the steps in between by replaying
/// the same floating-point operations, so what it returns is bitwise equal to
/// the values seen during propagation.
class Trajectory {
public:
  static constexpr std::size_t kSegmentSteps = 256;

  const TimeGrid& grid() const { return *grid_; }
  const GridPtr& grid_ptr() const { return grid_; }
  const KerrCoupling& coupling() const { return coupling_; }
  std::size_t components() const { return coupling_.components(); }

  std::size_t num_steps() const { return step_lengths_.size(); }
  double nominal_step() const { return nominal_step_; }
  double step_length(std::size_t k) const { return step_lengths_[k]; }
  std::span<const double> checkpoints() const { return z_; }
  double z(std::size_t k) const { return z_[k]; }
  double z_end() const { return z_.back(); }

  /// Index k with z(k) == z (to 1e-9 relative); throws if z is not stored.
  std::size_t checkpoint_index(double z) const;

  /// Classical fields (one per component) at checkpoint k.
  std::vector<Field> fields_at(std::size_t k) const;

  const std::vector<std::string>& warnings() const { return warnings_; }

private:
  friend class TrajectoryReader;
  friend Trajectory propagate(std::vector<Field>, const GridPtr&, const KerrCoupling&, double,
                              double, std::size_t);

  Trajectory(GridPtr grid, KerrCoupling coupling) : grid_(std::move(grid)), coupling_(std::move(coupling)) {}

  GridPtr grid_;
  KerrCoupling coupling_;
  double nominal_step_ = 0.0;
  std::vector<double> step_lengths_;
  std::vector<double> z_;
  std::vector<Field> initial_;
  Field anchors_;  // [segment][component][sample], Kerr input of step segment * kSegmentSteps
  std::vector<std::string> warnings_;
};

/// Sequential access to the Kerr inputs of a Trajectory. Holds one segment
/// in memory; access in increasing or decreasing step order costs one extra
/// classical sweep in total. Not thread-safe: use one reader per thread.
class TrajectoryReader {
public:
  explicit TrajectoryReader(const Trajectory& traj);
  ~TrajectoryReader();
  TrajectoryReader(const TrajectoryReader&) = delete;
  TrajectoryReader& operator=(const TrajectoryReader&) = delete;

  std::span<const cdouble> kerr_input(std::size_t step, std::size_t component);
  std::vector<Field> fields_at(std::size_t k);

private:
  struct Impl;
  const Trajectory& traj_;
  std::unique_ptr<Impl> impl_;
};

/// Default cap on Trajectory storage.
inline constexpr std::size_t kDefaultTrajectoryBytes = std::size_t{1} << 30;

/// Split-step propagation of the (possibly coupled) NLSE
///   i u_z + u_tt/2 + (sum_d G_cd |u_d|^2) u_c = 0
/// from z = 0 to z_target with step `step` (last step shortened if needed).
Trajectory propagate(std::vector<Field> fields, const GridPtr& grid, const KerrCoupling& coupling,
                     double z_target, double step,
                     std::size_t memory_limit = kDefaultTrajectoryBytes);

Trajectory propagate_scalar(const ComplexEnvelope& field, double z_target, double step,
                            double kerr_coefficient = 1.0);

Trajectory propagate_vector(const ComplexEnvelope& u, const ComplexEnvelope& v, double z_target,
                            double step, const VectorPairSpec& spec);

/// Same integrator without recording; returns only the fields at z_target.
std::vector<Field> propagate_endpoint(std::vector<Field> fields, const GridPtr& grid,
                                      const KerrCoupling& coupling, double z_target, double step);

/// Applies one Kerr rotation of length h in place (exposed for tests).
void kerr_rotation(std::span<Field> fields, const KerrCoupling& coupling, double h);

struct ConservedQuantities {
  double photon_number = 0.0;
  double momentum = 0.0;
  double hamiltonian = 0.0;
};

/// photon number sum_c |u_c|^2 dt, momentum sum_c sum_k omega_k |u_hat|^2 dt/n,
/// Hamiltonian sum_c |d_t u_c|^2/2 - (1/2) sum_cd G_cd |u_c|^2 |u_d|^2.
ConservedQuantities conserved_quantities(const TimeGrid& grid, std::span<const Field> fields,
                                         const KerrCoupling& coupling);

/// The two dominant intensity peaks of a field.
struct PeakPair {
  std::size_t left = 0;
  std::size_t right = 0;
  std::size_t trough = 0;  // intensity minimum between the peaks
  double separation = 0.0;
};

/// Two largest local maxima of |u|^2 (ties broken toward larger |t|).
/// Returns nullopt when the second peak is below `min_ratio` of the first.
std::optional<PeakPair> find_peak_pair(const TimeGrid& grid, std::span<const cdouble> field,
                                       double min_ratio = 0.05);

}  // namespace qsol
