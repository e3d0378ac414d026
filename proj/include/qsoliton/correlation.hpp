#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qsoliton/fluctuations.hpp"

namespace qsol {

/// Field whose photon number is measured. E_x and E_y are the linear
/// polarizations built from the circular components U, V.
enum class MeasuredComponent { U, V, Ex, Ey };

/// Half-open range of sample indices [begin, end).
struct SampleInterval {
  std::size_t begin = 0;
  std::size_t end = 0;

  std::size_t size() const { return end - begin; }
  bool operator==(const SampleInterval&) const = default;
};

/// Interval between two times that must both sit on grid points
/// (t_end may equal t_half_span). Throws ValidationError otherwise.
SampleInterval interval_from_times(const TimeGrid& grid, double t_begin, double t_end);

/// Consecutive slots of nominal width covering [t_begin, t_end). A sample
/// belongs to the slot containing its time, so every slot holds a whole
/// number of samples even when the width is not a multiple of dt.
struct SlotPartition {
  double width = 0.0;
  std::vector<SampleInterval> slots;
  std::vector<double> centers;

  static SlotPartition uniform(const TimeGrid& grid, double t_begin, double t_end, double width);
  std::size_t size() const { return slots.size(); }
};

/// Linearized photon-number fluctuation of `component` over `interval`:
/// plus = E^* 1_interval, minus = E 1_interval, expressed in (dU[, dV]).
DoubledField number_functional(std::span<const Field> fields, SampleInterval interval,
                               MeasuredComponent component = MeasuredComponent::U);
DoubledField number_functional(const Trajectory& traj, double z, SampleInterval interval,
                               MeasuredComponent component = MeasuredComponent::U);

/// Mean photon number sum |E|^2 dt over the interval.
double slot_photon_number(const TimeGrid& grid, std::span<const Field> fields,
                          SampleInterval interval, MeasuredComponent component);

/// Second moment of two functionals at z = 0 under the coherent input state
/// <dU(t) dU^dagger(t')> = delta(t - t') -> delta_kk'/dt:
///   <O_i O_j> = scale * dt * sum_c sum_t p_i(t) conj(p_j(t)),
/// with p = plus part of the back-propagated functional. `covariance`
/// returns the real (symmetrized) part; the imaginary part is half the
/// commutator expectation.
cdouble second_moment(const DoubledField& fi0, const DoubledField& fj0, double dt,
                      double scale = 1.0);
double covariance(const DoubledField& fi0, const DoubledField& fj0, double dt, double scale = 1.0);

struct CorrelationOptions {
  unsigned threads = 1;
  /// Mean photons per unit soliton; multiplies every covariance and shot term.
  double fluctuation_scale = 1.0;
  MeasuredComponent component = MeasuredComponent::U;
};

/// Normally ordered correlation coefficients between slots,
///   C_ij = (cov_ij - delta_ij n_i) / sqrt(cov_ii cov_jj).
struct CorrelationMap {
  double z = 0.0;
  SlotPartition partition;
  Eigen::MatrixXd c;
  Eigen::MatrixXd cov;
  Eigen::MatrixXd cov_imag;
  std::vector<double> shot;
  std::vector<bool> masked;
};

CorrelationMap correlation_map(const Trajectory& traj, double z, const SlotPartition& partition,
                               const CorrelationOptions& options = {});
std::vector<CorrelationMap> correlation_maps(const Trajectory& traj, std::span<const double> zs,
                                             const SlotPartition& partition,
                                             const CorrelationOptions& options = {});

enum class PairSplit {
  /// Everything left of the inter-peak minimum vs everything right of it.
  HalfLine,
  /// Windows of +-window_half_width around each peak (clipped at the minimum).
  FiniteWindow,
};

enum class PolarizationMode {
  /// Whole-window x photon number vs whole-window y photon number.
  Totals,
  /// x over t < 0 vs y over t >= 0.
  PerSoliton,
};

struct PairOptions {
  unsigned threads = 1;
  double fluctuation_scale = 1.0;
  PairSplit split = PairSplit::HalfLine;
  double window_half_width = 3.0;
  PolarizationMode polarization = PolarizationMode::Totals;
};

struct PairCorrelation {
  double z = 0.0;
  double c12 = 0.0;
  /// Time separating the two measured regions.
  double boundary = 0.0;
  /// True when the two pulses could not be resolved and t = 0 was used.
  bool fallback = false;
  double cov11 = 0.0;
  double cov22 = 0.0;
  double cov12 = 0.0;
  double cov12_imag = 0.0;
};

PairCorrelation pair_correlation(const Trajectory& traj, double z, const PairOptions& options = {});
std::vector<PairCorrelation> pair_correlation_curve(const Trajectory& traj,
                                                    std::span<const double> zs,
                                                    const PairOptions& options = {});

PairCorrelation polarization_pair_correlation(const Trajectory& traj, double z,
                                              const PairOptions& options = {});
std::vector<PairCorrelation> polarization_correlation_curve(const Trajectory& traj,
                                                            std::span<const double> zs,
                                                            const PairOptions& options = {});

/// Whole-window correlation between the photon numbers of two components.
PairCorrelation component_correlation(const Trajectory& traj, double z, MeasuredComponent first,
                                      MeasuredComponent second, const PairOptions& options = {});

}  // namespace qsol
