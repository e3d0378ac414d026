#pragma once

#include <complex>
#include <cstddef>
#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <fftw3.h>

namespace qsol {

using cdouble = std::complex<double>;

/// Allocator returning FFTW-friendly (SIMD aligned) storage.
template <typename T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlignment{64};

  AlignedAllocator() = default;
  template <typename U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t count) {
    return static_cast<T*>(::operator new(count * sizeof(T), kAlignment));
  }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlignment); }

  template <typename U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using Field = std::vector<cdouble, AlignedAllocator<cdouble>>;

/// Raised for any rejected input (bad grid, bad spec, malformed config).
class ValidationError : public std::invalid_argument {
public:
  using std::invalid_argument::invalid_argument;
};

/// Uniform periodic grid on [-t_half_span, t_half_span).
///
/// Transform convention: the forward transform uses the kernel exp(-i*omega*t),
/// so d/dt acts on spectral bin k as multiplication by (+i*omega[k]) and the
/// second derivative as -omega[k]^2. The inverse is normalized by 1/n.
/// Bin k carries omega = 2*pi*k/(n*dt) for k < n/2 and 2*pi*(k-n)/(n*dt)
/// otherwise; the Nyquist bin k = n/2 is the single unpaired negative value.
class TimeGrid {
public:
  static std::shared_ptr<const TimeGrid> make(std::size_t n, double t_half_span);

  std::size_t size() const { return n_; }
  double t_half_span() const { return t_half_span_; }
  double dt() const { return dt_; }
  double t(std::size_t k) const { return -t_half_span_ + static_cast<double>(k) * dt_; }
  std::span<const double> omega() const { return omega_; }
  std::span<const double> times() const { return times_; }

  /// Index of the sample nearest to time t (clamped to the window).
  std::size_t nearest_index(double t) const;

private:
  TimeGrid(std::size_t n, double t_half_span);

  std::size_t n_;
  double t_half_span_;
  double dt_;
  std::vector<double> omega_;
  std::vector<double> times_;
};

using GridPtr = std::shared_ptr<const TimeGrid>;

/// Free-function alias of TimeGrid::make.
inline GridPtr make_grid(std::size_t n, double t_half_span) {
  return TimeGrid::make(n, t_half_span);
}

/// In-place FFT pair bound to one grid size. Each instance owns its plans,
/// so callers on different threads must hold separate instances.
class SpectralTransform {
public:
  explicit SpectralTransform(std::size_t n);
  ~SpectralTransform();
  SpectralTransform(const SpectralTransform&) = delete;
  SpectralTransform& operator=(const SpectralTransform&) = delete;

  std::size_t size() const { return n_; }

  /// Unnormalized forward transform (kernel exp(-i*omega*t)).
  void forward(std::span<cdouble> data) const;
  /// Inverse transform including the 1/n factor.
  void inverse(std::span<cdouble> data) const;
  /// Inverse transform without the 1/n factor (callers fold it elsewhere).
  void inverse_unscaled(std::span<cdouble> data) const;

private:
  std::size_t n_;
  fftw_plan forward_plan_ = nullptr;
  fftw_plan inverse_plan_ = nullptr;
  // Fallbacks for storage that does not share the planning alignment.
  fftw_plan forward_unaligned_ = nullptr;
  fftw_plan inverse_unaligned_ = nullptr;
};

/// Spectral second derivative d^2/dt^2 of a periodic field.
Field second_derivative(const TimeGrid& grid, std::span<const cdouble> field);

/// Sum |u_k|^2 dt.
double norm_squared(const TimeGrid& grid, std::span<const cdouble> field);

/// Spectral-domain counterpart of norm_squared: (dt/n) * sum |u_hat_k|^2.
double spectral_norm_squared(const TimeGrid& grid, std::span<const cdouble> spectrum);

/// Largest |u|^2 among the four outermost samples divided by peak |u|^2.
double boundary_energy_fraction(std::span<const cdouble> field);

/// Threshold above which the boundary check emits a warning.
inline constexpr double kBoundaryEnergyTolerance = 1e-10;

}  // namespace qsol
