#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "qsoliton/classical.hpp"

namespace qsol {

/// Coefficient pair multiplying (dU, dU^dagger), one pair per field
/// component. Used both for fluctuation states and measurement functionals.
///
/// Pairing convention (bilinear, no conjugation):
///   <f, w> = sum_c sum_t [f.plus_c(t) w.plus_c(t) + f.minus_c(t) w.minus_c(t)] dt.
/// A measurement O = sum_t [f.plus dU(L) + f.minus dU^dagger(L)] dt is then
/// <f, w(L)>, and with w(L) = S w(0) the back-propagated functional is S^T f.
struct DoubledField {
  std::vector<Field> plus;
  std::vector<Field> minus;

  static DoubledField zeros(std::size_t components, std::size_t n);
  /// minus = conj(plus) for every component.
  static DoubledField hermitian(std::vector<Field> plus);

  std::size_t components() const { return plus.size(); }
  std::size_t size() const { return plus.empty() ? 0 : plus[0].size(); }

  /// max |minus - conj(plus)| relative to max |plus| (absolute when plus = 0).
  double hermiticity_defect() const;

  DoubledField& operator+=(const DoubledField& other);
  DoubledField& operator*=(cdouble scale);
};

DoubledField operator+(DoubledField a, const DoubledField& b);
DoubledField operator*(cdouble scale, DoubledField a);

cdouble pairing(const DoubledField& functional, const DoubledField& state, double dt);

/// Tolerance on minus = conj(plus) accepted by backpropagate_functional.
inline constexpr double kHermitianTolerance = 1e-10;

/// Integrates the linearization of the split-step map around `traj` from
/// z = 0 to checkpoint `to_step` (default: end of the trajectory).
///
/// Each Strang step is differentiated exactly: dispersion half-steps act on
/// plus with exp(-i omega^2 h/4) and on minus with its conjugate, and the
/// Kerr substep becomes the pointwise Bogoliubov map
///   du_c' = e^{i phi_c} [du_c + i h u_c sum_d G_cd (u_d^* du_d + u_d du_d^*)]
/// with u the stored Kerr input of the step.
DoubledField forward_linearized(const DoubledField& w0, const Trajectory& traj);
DoubledField forward_linearized(const DoubledField& w0, const Trajectory& traj, std::size_t to_step);
std::vector<DoubledField> forward_linearized_batch(std::span<const DoubledField> w0,
                                                   const Trajectory& traj, std::size_t to_step,
                                                   unsigned threads = 1);

/// Exact transpose of forward_linearized: returns f0 with
/// <f0, w(0)> = <fL, w(L)> for every w. Requires a Hermitian functional.
DoubledField backpropagate_functional(const DoubledField& f_end, const Trajectory& traj);
DoubledField backpropagate_functional(const DoubledField& f_end, const Trajectory& traj,
                                      std::size_t from_step);

/// A functional defined at checkpoint `step`.
struct BackpropRequest {
  std::size_t step = 0;
  DoubledField functional;
};

/// Back-propagates many functionals in one reverse sweep. Results are in
/// request order and do not depend on `threads`.
std::vector<DoubledField> backpropagate_batch(std::span<const BackpropRequest> requests,
                                              const Trajectory& traj, unsigned threads = 1);

/// Dense map w(L) = S w(0) on the stacked vector
/// (dU_0, ..., dU_{m-1}, dU_0^dagger, ..., dU_{m-1}^dagger).
struct GreenMatrix {
  Eigen::MatrixXcd s;
  std::size_t components = 1;
  std::size_t n = 0;

  Eigen::Index half() const { return static_cast<Eigen::Index>(components * n); }
  Eigen::MatrixXcd p() const { return s.topLeftCorner(half(), half()); }
  Eigen::MatrixXcd q() const { return s.topRightCorner(half(), half()); }

  /// max |P P^dagger - Q Q^dagger - I|.
  double unitarity_defect() const;
  /// max |P Q^T - Q P^T|.
  double symmetry_defect() const;
  /// max deviation from the [[P, Q], [Q^*, P^*]] block structure.
  double block_structure_defect() const;

  /// S^T applied to a stacked functional.
  DoubledField transpose_apply(const DoubledField& f) const;
};

inline constexpr std::size_t kGreenMatrixMaxGrid = 512;

/// Columns are forward_linearized of the unit vectors. Refuses grids larger
/// than kGreenMatrixMaxGrid.
GreenMatrix build_green_matrix(const Trajectory& traj);
GreenMatrix build_green_matrix(const Trajectory& traj, std::size_t to_step, unsigned threads = 1);

Eigen::VectorXcd stack(const DoubledField& f);
DoubledField unstack(const Eigen::VectorXcd& v, std::size_t components, std::size_t n);

}  // namespace qsol
