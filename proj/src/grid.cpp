#include "qsoliton/grid.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <mutex>
#include <numbers>

namespace qsol {

namespace {

// The FFTW planner is not reentrant.
std::mutex& planner_mutex() {
  static std::mutex m;
  return m;
}

fftw_complex* as_fftw(std::span<cdouble> data) {
  return reinterpret_cast<fftw_complex*>(data.data());
}

}  // namespace

TimeGrid::TimeGrid(std::size_t n, double t_half_span)
    : n_(n), t_half_span_(t_half_span), dt_(2.0 * t_half_span / static_cast<double>(n)) {
  omega_.resize(n_);
  times_.resize(n_);
  const double base = 2.0 * std::numbers::pi / (static_cast<double>(n_) * dt_);
  for (std::size_t k = 0; k < n_; ++k) {
    const auto signed_k = k < n_ / 2 ? static_cast<double>(k)
                                     : static_cast<double>(k) - static_cast<double>(n_);
    omega_[k] = base * signed_k;
    times_[k] = t(k);
  }
}

std::shared_ptr<const TimeGrid> TimeGrid::make(std::size_t n, double t_half_span) {
  if (n < 64 || !std::has_single_bit(n)) {
    throw ValidationError("grid size must be a power of two >= 64, got " + std::to_string(n));
  }
  if (!(t_half_span > 0.0) || !std::isfinite(t_half_span)) {
    throw ValidationError("grid half span must be finite and positive, got " +
                          std::to_string(t_half_span));
  }
  return std::shared_ptr<const TimeGrid>(new TimeGrid(n, t_half_span));
}

std::size_t TimeGrid::nearest_index(double time) const {
  const double k = std::round((time + t_half_span_) / dt_);
  if (k <= 0.0) return 0;
  if (k >= static_cast<double>(n_ - 1)) return n_ - 1;
  return static_cast<std::size_t>(k);
}

SpectralTransform::SpectralTransform(std::size_t n) : n_(n) {
  Field scratch(n);
  auto* buf = reinterpret_cast<fftw_complex*>(scratch.data());
  const int size = static_cast<int>(n);
  // ESTIMATE keeps the chosen algorithm (and hence the rounding) identical
  // from run to run.
  std::lock_guard lock(planner_mutex());
  forward_plan_ = fftw_plan_dft_1d(size, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE);
  inverse_plan_ = fftw_plan_dft_1d(size, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE);
  forward_unaligned_ =
      fftw_plan_dft_1d(size, buf, buf, FFTW_FORWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
  inverse_unaligned_ =
      fftw_plan_dft_1d(size, buf, buf, FFTW_BACKWARD, FFTW_ESTIMATE | FFTW_UNALIGNED);
}

SpectralTransform::~SpectralTransform() {
  std::lock_guard lock(planner_mutex());
  fftw_destroy_plan(forward_plan_);
  fftw_destroy_plan(inverse_plan_);
  fftw_destroy_plan(forward_unaligned_);
  fftw_destroy_plan(inverse_unaligned_);
}

void SpectralTransform::forward(std::span<cdouble> data) const {
  auto* p = as_fftw(data);
  fftw_execute_dft(fftw_alignment_of(reinterpret_cast<double*>(p)) == 0 ? forward_plan_
                                                                         : forward_unaligned_,
                   p, p);
}

void SpectralTransform::inverse_unscaled(std::span<cdouble> data) const {
  auto* p = as_fftw(data);
  fftw_execute_dft(fftw_alignment_of(reinterpret_cast<double*>(p)) == 0 ? inverse_plan_
                                                                         : inverse_unaligned_,
                   p, p);
}

void SpectralTransform::inverse(std::span<cdouble> data) const {
  inverse_unscaled(data);
  const double scale = 1.0 / static_cast<double>(n_);
  for (auto& v : data) v *= scale;
}

Field second_derivative(const TimeGrid& grid, std::span<const cdouble> field) {
  if (field.size() != grid.size()) throw ValidationError("field does not match grid size");
  Field out(field.begin(), field.end());
  SpectralTransform fft(grid.size());
  fft.forward(out);
  const auto omega = grid.omega();
  for (std::size_t k = 0; k < out.size(); ++k) out[k] *= -omega[k] * omega[k];
  fft.inverse(out);
  return out;
}

double norm_squared(const TimeGrid& grid, std::span<const cdouble> field) {
  double sum = 0.0;
  for (const auto& v : field) sum += std::norm(v);
  return sum * grid.dt();
}

double spectral_norm_squared(const TimeGrid& grid, std::span<const cdouble> spectrum) {
  double sum = 0.0;
  for (const auto& v : spectrum) sum += std::norm(v);
  return sum * grid.dt() / static_cast<double>(grid.size());
}

double boundary_energy_fraction(std::span<const cdouble> field) {
  double peak = 0.0;
  for (const auto& v : field) peak = std::max(peak, std::norm(v));
  if (peak == 0.0) return 0.0;
  const std::size_t n = field.size();
  const double edge = std::max({std::norm(field[0]), std::norm(field[1]), std::norm(field[n - 2]),
                                std::norm(field[n - 1])});
  return edge / peak;
}

}  // namespace qsol
