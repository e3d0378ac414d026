#include "qsoliton/fluctuations.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <thread>

namespace qsol {

namespace {

constexpr cdouble kI{0.0, 1.0};

// Pointwise Bogoliubov coefficients of one linearized Kerr substep:
//   du_c' = sum_d alpha_cd du_d + beta_cd du_d^dagger.
class KerrTangent {
public:
  KerrTangent(std::size_t m, std::size_t n) : m_(m), n_(n), alpha_(m * m * n), beta_(m * m * n) {}

  void compute(const Trajectory& traj, TrajectoryReader& reader, std::size_t step) {
    if (m_ == 1) {
      compute_impl<1>(traj, reader, step);
    } else {
      compute_impl<2>(traj, reader, step);
    }
  }

  std::size_t components() const { return m_; }
  const cdouble* alpha(std::size_t c, std::size_t d) const { return alpha_.data() + (c * m_ + d) * n_; }
  const cdouble* beta(std::size_t c, std::size_t d) const { return beta_.data() + (c * m_ + d) * n_; }

private:
  template <std::size_t M>
  void compute_impl(const Trajectory& traj, TrajectoryReader& reader, std::size_t step) {
    const auto& g = traj.coupling();
    const double h = traj.step_length(step);
    const cdouble* u[M];
    for (std::size_t c = 0; c < M; ++c) u[c] = reader.kerr_input(step, c).data();
    for (std::size_t k = 0; k < n_; ++k) {
      for (std::size_t c = 0; c < M; ++c) {
        double rate = 0.0;
        for (std::size_t d = 0; d < M; ++d) rate += g(c, d) * std::norm(u[d][k]);
        const cdouble rot = std::polar(1.0, rate * h);
        for (std::size_t d = 0; d < M; ++d) {
          const cdouble ihg = kI * (h * g(c, d));
          const cdouble diag = c == d ? 1.0 : 0.0;
          alpha_[(c * M + d) * n_ + k] = rot * (diag + ihg * u[c][k] * std::conj(u[d][k]));
          beta_[(c * M + d) * n_ + k] = rot * ihg * u[c][k] * u[d][k];
        }
      }
    }
  }

  std::size_t m_;
  std::size_t n_;
  std::vector<cdouble> alpha_;
  std::vector<cdouble> beta_;
};

class DispersionTable {
public:
  explicit DispersionTable(const TimeGrid& grid) : grid_(grid) {}

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

void disperse(const SpectralTransform& fft, Field& field, const std::vector<cdouble>& mult,
              bool conjugate) {
  fft.forward(field);
  if (conjugate) {
    for (std::size_t k = 0; k < field.size(); ++k) field[k] *= std::conj(mult[k]);
  } else {
    for (std::size_t k = 0; k < field.size(); ++k) field[k] *= mult[k];
  }
  fft.inverse_unscaled(field);
}

void check_layout(const DoubledField& f, const Trajectory& traj) {
  if (f.components() != traj.components() || f.minus.size() != f.plus.size()) {
    throw ValidationError("doubled field has the wrong number of components");
  }
  for (std::size_t c = 0; c < f.components(); ++c) {
    if (f.plus[c].size() != traj.grid().size() || f.minus[c].size() != traj.grid().size()) {
      throw ValidationError("doubled field does not match the trajectory grid");
    }
  }
}

template <std::size_t M>
void forward_kerr_impl(const KerrTangent& tangent, DoubledField& w) {
  const std::size_t n = w.size();
  cdouble* a[M];
  cdouble* b[M];
  for (std::size_t c = 0; c < M; ++c) {
    a[c] = w.plus[c].data();
    b[c] = w.minus[c].data();
  }
  for (std::size_t k = 0; k < n; ++k) {
    cdouble a0[M];
    cdouble b0[M];
    for (std::size_t d = 0; d < M; ++d) {
      a0[d] = a[d][k];
      b0[d] = b[d][k];
    }
    for (std::size_t c = 0; c < M; ++c) {
      cdouble na = 0.0;
      cdouble nb = 0.0;
      for (std::size_t d = 0; d < M; ++d) {
        const cdouble al = tangent.alpha(c, d)[k];
        const cdouble be = tangent.beta(c, d)[k];
        na += al * a0[d] + be * b0[d];
        nb += std::conj(be) * a0[d] + std::conj(al) * b0[d];
      }
      a[c][k] = na;
      b[c][k] = nb;
    }
  }
}

void forward_kerr(const KerrTangent& tangent, DoubledField& w) {
  if (tangent.components() == 1) {
    forward_kerr_impl<1>(tangent, w);
  } else {
    forward_kerr_impl<2>(tangent, w);
  }
}

// Transposed Kerr map on the plus part of a Hermitian functional:
//   p_d' = sum_c alpha_cd p_c + conj(beta_cd p_c).
template <std::size_t M>
void transposed_kerr_impl(const KerrTangent& tangent, std::vector<Field>& plus) {
  const std::size_t n = plus[0].size();
  if constexpr (M == 1) {
    const cdouble* al = tangent.alpha(0, 0);
    const cdouble* be = tangent.beta(0, 0);
    cdouble* p = plus[0].data();
    for (std::size_t k = 0; k < n; ++k) {
      const cdouble x = p[k];
      p[k] = al[k] * x + std::conj(be[k] * x);
    }
  } else {
    cdouble* p[M];
    for (std::size_t c = 0; c < M; ++c) p[c] = plus[c].data();
    for (std::size_t k = 0; k < n; ++k) {
      cdouble x[M];
      for (std::size_t c = 0; c < M; ++c) x[c] = p[c][k];
      for (std::size_t d = 0; d < M; ++d) {
        cdouble acc = 0.0;
        for (std::size_t c = 0; c < M; ++c) {
          acc += tangent.alpha(c, d)[k] * x[c] + std::conj(tangent.beta(c, d)[k] * x[c]);
        }
        p[d][k] = acc;
      }
    }
  }
}

void transposed_kerr(const KerrTangent& tangent, std::vector<Field>& plus) {
  if (tangent.components() == 1) {
    transposed_kerr_impl<1>(tangent, plus);
  } else {
    transposed_kerr_impl<2>(tangent, plus);
  }
}

// Splits [0, count) into `threads` contiguous chunks and runs fn(begin, end).
template <typename Fn>
void parallel_chunks(std::size_t count, unsigned threads, Fn&& fn) {
  const std::size_t workers = std::max<std::size_t>(1, std::min<std::size_t>(threads, count));
  if (workers <= 1) {
    fn(std::size_t{0}, count);
    return;
  }
  std::vector<std::jthread> pool;
  const std::size_t base = count / workers;
  const std::size_t extra = count % workers;
  std::size_t begin = 0;
  std::vector<std::exception_ptr> errors(workers);
  for (std::size_t w = 0; w < workers; ++w) {
    const std::size_t end = begin + base + (w < extra ? 1 : 0);
    pool.emplace_back([&, w, begin, end] {
      try {
        fn(begin, end);
      } catch (...) {
        errors[w] = std::current_exception();
      }
    });
    begin = end;
  }
  pool.clear();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

void forward_chunk(std::vector<DoubledField>& states, const Trajectory& traj, std::size_t to_step) {
  const auto& grid = traj.grid();
  SpectralTransform fft(grid.size());
  DispersionTable dispersion(grid);
  KerrTangent tangent(traj.components(), grid.size());
  TrajectoryReader reader(traj);
  for (std::size_t k = 0; k < to_step; ++k) {
    const double pre = k == 0 ? 0.5 * traj.step_length(0)
                              : 0.5 * (traj.step_length(k - 1) + traj.step_length(k));
    const auto& mult = dispersion.get(pre);
    tangent.compute(traj, reader, k);
    for (auto& w : states) {
      for (std::size_t c = 0; c < w.components(); ++c) {
        disperse(fft, w.plus[c], mult, false);
        disperse(fft, w.minus[c], mult, true);
      }
      forward_kerr(tangent, w);
    }
  }
  if (to_step > 0) {
    const auto& mult = dispersion.get(0.5 * traj.step_length(to_step - 1));
    for (auto& w : states) {
      for (std::size_t c = 0; c < w.components(); ++c) {
        disperse(fft, w.plus[c], mult, false);
        disperse(fft, w.minus[c], mult, true);
      }
    }
  }
}

}  // namespace

DoubledField DoubledField::zeros(std::size_t components, std::size_t n) {
  DoubledField f;
  f.plus.assign(components, Field(n));
  f.minus.assign(components, Field(n));
  return f;
}

DoubledField DoubledField::hermitian(std::vector<Field> plus) {
  DoubledField f;
  f.minus.reserve(plus.size());
  for (const auto& p : plus) {
    Field m(p.size());
    std::transform(p.begin(), p.end(), m.begin(), [](cdouble v) { return std::conj(v); });
    f.minus.push_back(std::move(m));
  }
  f.plus = std::move(plus);
  return f;
}

double DoubledField::hermiticity_defect() const {
  double scale = 0.0;
  double defect = 0.0;
  for (std::size_t c = 0; c < components(); ++c) {
    for (std::size_t k = 0; k < plus[c].size(); ++k) {
      scale = std::max(scale, std::abs(plus[c][k]));
      defect = std::max(defect, std::abs(minus[c][k] - std::conj(plus[c][k])));
    }
  }
  return scale > 0.0 ? defect / scale : defect;
}

DoubledField& DoubledField::operator+=(const DoubledField& other) {
  for (std::size_t c = 0; c < components(); ++c) {
    for (std::size_t k = 0; k < plus[c].size(); ++k) {
      plus[c][k] += other.plus[c][k];
      minus[c][k] += other.minus[c][k];
    }
  }
  return *this;
}

DoubledField& DoubledField::operator*=(cdouble scale) {
  for (std::size_t c = 0; c < components(); ++c) {
    for (auto& v : plus[c]) v *= scale;
    for (auto& v : minus[c]) v *= scale;
  }
  return *this;
}

DoubledField operator+(DoubledField a, const DoubledField& b) { return a += b; }
DoubledField operator*(cdouble scale, DoubledField a) { return a *= scale; }

cdouble pairing(const DoubledField& functional, const DoubledField& state, double dt) {
  cdouble sum = 0.0;
  for (std::size_t c = 0; c < functional.components(); ++c) {
    for (std::size_t k = 0; k < functional.plus[c].size(); ++k) {
      sum += functional.plus[c][k] * state.plus[c][k] + functional.minus[c][k] * state.minus[c][k];
    }
  }
  return sum * dt;
}

DoubledField forward_linearized(const DoubledField& w0, const Trajectory& traj) {
  return forward_linearized(w0, traj, traj.num_steps());
}

DoubledField forward_linearized(const DoubledField& w0, const Trajectory& traj, std::size_t to_step) {
  auto out = forward_linearized_batch(std::span(&w0, 1), traj, to_step);
  return std::move(out.front());
}

std::vector<DoubledField> forward_linearized_batch(std::span<const DoubledField> w0,
                                                   const Trajectory& traj, std::size_t to_step,
                                                   unsigned threads) {
  if (to_step > traj.num_steps()) throw ValidationError("target step beyond trajectory");
  for (const auto& w : w0) check_layout(w, traj);
  std::vector<DoubledField> states(w0.begin(), w0.end());
  parallel_chunks(states.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::vector<DoubledField> chunk(std::make_move_iterator(states.begin() + begin),
                                    std::make_move_iterator(states.begin() + end));
    forward_chunk(chunk, traj, to_step);
    std::move(chunk.begin(), chunk.end(), states.begin() + begin);
  });
  return states;
}

DoubledField backpropagate_functional(const DoubledField& f_end, const Trajectory& traj) {
  return backpropagate_functional(f_end, traj, traj.num_steps());
}

DoubledField backpropagate_functional(const DoubledField& f_end, const Trajectory& traj,
                                      std::size_t from_step) {
  BackpropRequest req{from_step, f_end};
  auto out = backpropagate_batch(std::span(&req, 1), traj);
  return std::move(out.front());
}

std::vector<DoubledField> backpropagate_batch(std::span<const BackpropRequest> requests,
                                              const Trajectory& traj, unsigned threads) {
  for (const auto& r : requests) {
    check_layout(r.functional, traj);
    if (r.step > traj.num_steps()) throw ValidationError("functional step beyond trajectory");
    if (r.functional.hermiticity_defect() > kHermitianTolerance) {
      throw ValidationError("back-propagation requires a Hermitian functional (minus = conj(plus))");
    }
  }

  std::vector<std::vector<Field>> plus(requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) plus[i] = requests[i].functional.plus;

  parallel_chunks(requests.size(), threads, [&](std::size_t begin, std::size_t end) {
    std::size_t top = 0;
    for (std::size_t i = begin; i < end; ++i) top = std::max(top, requests[i].step);
    if (top == 0) return;
    const auto& grid = traj.grid();
    SpectralTransform fft(grid.size());
    DispersionTable dispersion(grid);
    KerrTangent tangent(traj.components(), grid.size());
    TrajectoryReader reader(traj);
    for (std::size_t k = top; k-- > 0;) {
      tangent.compute(traj, reader, k);
      for (std::size_t i = begin; i < end; ++i) {
        const std::size_t start = requests[i].step;
        if (start <= k) continue;
        const double pre = start == k + 1 ? 0.5 * traj.step_length(k)
                                          : 0.5 * (traj.step_length(k + 1) + traj.step_length(k));
        const auto& mult = dispersion.get(pre);
        for (auto& p : plus[i]) disperse(fft, p, mult, false);
        transposed_kerr(tangent, plus[i]);
      }
    }
    const auto& mult = dispersion.get(0.5 * traj.step_length(0));
    for (std::size_t i = begin; i < end; ++i) {
      if (requests[i].step == 0) continue;
      for (auto& p : plus[i]) disperse(fft, p, mult, false);
    }
  });

  std::vector<DoubledField> out;
  out.reserve(requests.size());
  for (auto& p : plus) out.push_back(DoubledField::hermitian(std::move(p)));
  return out;
}

Eigen::VectorXcd stack(const DoubledField& f) {
  const std::size_t m = f.components();
  const std::size_t n = f.size();
  Eigen::VectorXcd v(static_cast<Eigen::Index>(2 * m * n));
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t k = 0; k < n; ++k) {
      v(static_cast<Eigen::Index>(c * n + k)) = f.plus[c][k];
      v(static_cast<Eigen::Index>((m + c) * n + k)) = f.minus[c][k];
    }
  }
  return v;
}

DoubledField unstack(const Eigen::VectorXcd& v, std::size_t components, std::size_t n) {
  auto f = DoubledField::zeros(components, n);
  for (std::size_t c = 0; c < components; ++c) {
    for (std::size_t k = 0; k < n; ++k) {
      f.plus[c][k] = v(static_cast<Eigen::Index>(c * n + k));
      f.minus[c][k] = v(static_cast<Eigen::Index>((components + c) * n + k));
    }
  }
  return f;
}

double GreenMatrix::unitarity_defect() const {
  const Eigen::MatrixXcd pp = p();
  const Eigen::MatrixXcd qq = q();
  const Eigen::MatrixXcd r = pp * pp.adjoint() - qq * qq.adjoint() -
                             Eigen::MatrixXcd::Identity(half(), half());
  return r.cwiseAbs().maxCoeff();
}

double GreenMatrix::symmetry_defect() const {
  const Eigen::MatrixXcd pp = p();
  const Eigen::MatrixXcd qq = q();
  const Eigen::MatrixXcd r = pp * qq.transpose() - qq * pp.transpose();
  return r.cwiseAbs().maxCoeff();
}

double GreenMatrix::block_structure_defect() const {
  const auto h = half();
  const double lower_left = (s.bottomLeftCorner(h, h) - q().conjugate()).cwiseAbs().maxCoeff();
  const double lower_right = (s.bottomRightCorner(h, h) - p().conjugate()).cwiseAbs().maxCoeff();
  return std::max(lower_left, lower_right);
}

DoubledField GreenMatrix::transpose_apply(const DoubledField& f) const {
  return unstack(s.transpose() * stack(f), components, n);
}

GreenMatrix build_green_matrix(const Trajectory& traj) {
  return build_green_matrix(traj, traj.num_steps());
}

GreenMatrix build_green_matrix(const Trajectory& traj, std::size_t to_step, unsigned threads) {
  const std::size_t n = traj.grid().size();
  const std::size_t m = traj.components();
  if (n > kGreenMatrixMaxGrid) {
    throw ValidationError("Green matrix limited to n <= " + std::to_string(kGreenMatrixMaxGrid) +
                          " (cost is 2n forward runs); use backpropagate_functional instead");
  }
  const std::size_t dim = 2 * m * n;
  std::vector<DoubledField> basis;
  basis.reserve(dim);
  for (std::size_t j = 0; j < dim; ++j) {
    Eigen::VectorXcd e = Eigen::VectorXcd::Zero(static_cast<Eigen::Index>(dim));
    e(static_cast<Eigen::Index>(j)) = 1.0;
    basis.push_back(unstack(e, m, n));
  }
  const auto columns = forward_linearized_batch(basis, traj, to_step, threads);
  GreenMatrix g;
  g.components = m;
  g.n = n;
  g.s.resize(static_cast<Eigen::Index>(dim), static_cast<Eigen::Index>(dim));
  for (std::size_t j = 0; j < dim; ++j) g.s.col(static_cast<Eigen::Index>(j)) = stack(columns[j]);
  return g;
}

}  // namespace qsol
