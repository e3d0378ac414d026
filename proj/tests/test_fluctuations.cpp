#include <doctest.h>

#include <cmath>
#include <numbers>
#include <random>

#include "qsoliton/fluctuations.hpp"

using namespace qsol;

namespace {

constexpr double kPi = std::numbers::pi;

Trajectory scalar_pair_trajectory(std::size_t n, double z, double step = 1e-2) {
  auto g = make_grid(n, 20.0);
  return propagate_scalar(init_scalar_pair({1.0, kPi / 2, 3.5}, g), z, step);
}

Trajectory vector_pair_trajectory(std::size_t n, double z, double step = 1e-2) {
  auto g = make_grid(n, 20.0);
  const VectorPairSpec spec{2.0, 1.0, 2.0};
  const auto init = init_vector_pair(spec, g);
  return propagate_vector(init.u, init.v, z, step, spec);
}

Field random_field(std::size_t n, std::mt19937_64& rng) {
  std::normal_distribution<double> dist;
  Field f(n);
  for (auto& v : f) v = {dist(rng), dist(rng)};
  return f;
}

DoubledField random_state(std::size_t m, std::size_t n, std::mt19937_64& rng) {
  DoubledField w = DoubledField::zeros(m, n);
  for (std::size_t c = 0; c < m; ++c) {
    w.plus[c] = random_field(n, rng);
    w.minus[c] = random_field(n, rng);
  }
  return w;
}

DoubledField random_hermitian(std::size_t m, std::size_t n, std::mt19937_64& rng) {
  std::vector<Field> plus;
  for (std::size_t c = 0; c < m; ++c) plus.push_back(random_field(n, rng));
  return DoubledField::hermitian(std::move(plus));
}

double max_diff(const DoubledField& a, const DoubledField& b) {
  double err = 0.0;
  for (std::size_t c = 0; c < a.components(); ++c) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      err = std::max({err, std::abs(a.plus[c][k] - b.plus[c][k]),
                      std::abs(a.minus[c][k] - b.minus[c][k])});
    }
  }
  return err;
}

double max_abs(const DoubledField& a) {
  double m = 0.0;
  for (std::size_t c = 0; c < a.components(); ++c) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      m = std::max({m, std::abs(a.plus[c][k]), std::abs(a.minus[c][k])});
    }
  }
  return m;
}

// Bogoliubov-invariant form sum (a+ conj(b+) - a- conj(b-)) dt.
cdouble eta_form(const DoubledField& a, const DoubledField& b, double dt) {
  cdouble s = 0.0;
  for (std::size_t c = 0; c < a.components(); ++c) {
    for (std::size_t k = 0; k < a.size(); ++k) {
      s += a.plus[c][k] * std::conj(b.plus[c][k]) - a.minus[c][k] * std::conj(b.minus[c][k]);
    }
  }
  return s * dt;
}

}  // namespace

TEST_CASE("doubled field arithmetic and hermiticity") {
  std::mt19937_64 rng(1);
  auto h = random_hermitian(2, 64, rng);
  CHECK(h.hermiticity_defect() == 0.0);
  auto w = random_state(2, 64, rng);
  CHECK(w.hermiticity_defect() > 0.1);
  auto sum = h + w;
  CHECK(sum.plus[1][5] == h.plus[1][5] + w.plus[1][5]);
  auto scaled = cdouble(0.0, 2.0) * h;
  CHECK(scaled.minus[0][3] == cdouble(0.0, 2.0) * h.minus[0][3]);
  CHECK(DoubledField::zeros(1, 64).hermiticity_defect() == 0.0);
  cdouble manual = 0.0;
  for (std::size_t c = 0; c < 2; ++c) {
    for (std::size_t k = 0; k < 64; ++k) manual += h.plus[c][k] * w.plus[c][k] + h.minus[c][k] * w.minus[c][k];
  }
  CHECK(std::abs(pairing(h, w, 0.5) - 0.5 * manual) < 1e-12 * std::abs(manual));
}

TEST_CASE("free field evolves by pure dispersion without mixing") {
  auto g = make_grid(128, 20.0);
  const Field zero(g->size());
  const auto traj = propagate_scalar({g, zero}, 2.0, 0.1);
  std::mt19937_64 rng(2);
  DoubledField w = DoubledField::zeros(1, g->size());
  w.plus[0] = random_field(g->size(), rng);
  const auto out = forward_linearized(w, traj);
  for (const auto& v : out.minus[0]) CHECK(v == cdouble(0.0));

  SpectralTransform fft(g->size());
  Field expected = w.plus[0];
  fft.forward(expected);
  const auto mult = dispersion_multiplier(*g, 2.0);
  for (std::size_t k = 0; k < expected.size(); ++k) expected[k] *= mult[k];
  fft.inverse(expected);
  double err = 0.0;
  for (std::size_t k = 0; k < expected.size(); ++k) err = std::max(err, std::abs(out.plus[0][k] - expected[k]));
  CHECK(err < 1e-12);
}

TEST_CASE("global phase direction is carried exactly") {
  // The discrete map commutes with U -> U e^{i eps}; its tangent maps
  // (i U(0), -i U(0)^*) onto (i U(L), -i U(L)^*).
  const auto traj = scalar_pair_trajectory(256, 6.0);
  const auto u0 = traj.fields_at(0);
  const auto uL = traj.fields_at(traj.num_steps());
  Field phase0(u0[0].size());
  for (std::size_t k = 0; k < phase0.size(); ++k) phase0[k] = cdouble(0.0, 1.0) * u0[0][k];
  const auto out = forward_linearized(DoubledField::hermitian({phase0}), traj);
  Field phaseL(uL[0].size());
  for (std::size_t k = 0; k < phaseL.size(); ++k) phaseL[k] = cdouble(0.0, 1.0) * uL[0][k];
  CHECK(max_diff(out, DoubledField::hermitian({phaseL})) < 1e-10);
}

TEST_CASE("linearized map preserves the Bogoliubov form") {
  std::mt19937_64 rng(3);
  for (bool vector : {false, true}) {
    const auto traj = vector ? vector_pair_trajectory(128, 6.0) : scalar_pair_trajectory(128, 6.0);
    const double dt = traj.grid().dt();
    const auto m = traj.components();
    for (int trial = 0; trial < 5; ++trial) {
      const auto a = random_state(m, 128, rng);
      const auto b = random_state(m, 128, rng);
      const auto before = eta_form(a, b, dt);
      const auto after = eta_form(forward_linearized(a, traj), forward_linearized(b, traj), dt);
      CHECK(std::abs(after - before) / std::abs(before) < 1e-10);
    }
  }
}

TEST_CASE("back-propagation is the transpose of forward propagation") {
  std::mt19937_64 rng(4);
  for (bool vector : {false, true}) {
    const auto traj = vector ? vector_pair_trajectory(128, 6.0) : scalar_pair_trajectory(128, 6.0);
    const double dt = traj.grid().dt();
    const auto m = traj.components();
    for (int trial = 0; trial < 10; ++trial) {
      const auto f = random_hermitian(m, 128, rng);
      const auto w = random_state(m, 128, rng);
      const auto lhs = pairing(backpropagate_functional(f, traj), w, dt);
      const auto rhs = pairing(f, forward_linearized(w, traj), dt);
      CHECK(std::abs(lhs - rhs) / std::abs(rhs) < 1e-10);
    }
  }
}

TEST_CASE("intermediate checkpoints and L = 0") {
  std::mt19937_64 rng(5);
  const auto traj = scalar_pair_trajectory(128, 3.0, 0.05);
  const auto f = random_hermitian(1, 128, rng);
  CHECK(max_diff(backpropagate_functional(f, traj, 0), f) < 1e-14);
  const auto w = random_state(1, 128, rng);
  CHECK(max_diff(forward_linearized(w, traj, 0), w) < 1e-14);

  const std::size_t mid = traj.checkpoint_index(1.5);
  const double dt = traj.grid().dt();
  const auto lhs = pairing(backpropagate_functional(f, traj, mid), w, dt);
  const auto rhs = pairing(f, forward_linearized(w, traj, mid), dt);
  CHECK(std::abs(lhs - rhs) / std::abs(rhs) < 1e-11);

  CHECK_THROWS_AS(forward_linearized(w, traj, traj.num_steps() + 1), ValidationError);
  CHECK_THROWS_AS(backpropagate_functional(f, traj, traj.num_steps() + 1), ValidationError);
}

TEST_CASE("non-Hermitian and mismatched functionals are rejected") {
  std::mt19937_64 rng(6);
  const auto traj = scalar_pair_trajectory(128, 1.0, 0.1);
  CHECK_THROWS_AS(backpropagate_functional(random_state(1, 128, rng), traj), ValidationError);
  CHECK_THROWS_AS(backpropagate_functional(random_hermitian(1, 64, rng), traj), ValidationError);
  CHECK_THROWS_AS(backpropagate_functional(random_hermitian(2, 128, rng), traj), ValidationError);
}

TEST_CASE("batched back-propagation matches single sweeps and ignores thread count") {
  std::mt19937_64 rng(7);
  const auto traj = vector_pair_trajectory(128, 2.0, 0.01);
  std::vector<BackpropRequest> requests;
  for (double z : {2.0, 0.5, 1.0, 2.0, 0.0, 1.5}) {
    requests.push_back({traj.checkpoint_index(z), random_hermitian(2, 128, rng)});
  }
  const auto serial = backpropagate_batch(requests, traj, 1);
  const auto threaded = backpropagate_batch(requests, traj, 4);
  REQUIRE(serial.size() == requests.size());
  for (std::size_t i = 0; i < requests.size(); ++i) {
    CHECK(max_diff(serial[i], threaded[i]) == 0.0);
    const auto single = backpropagate_functional(requests[i].functional, traj, requests[i].step);
    CHECK(max_diff(serial[i], single) < 1e-12 * max_abs(single));
  }
}

TEST_CASE("forward batch equals individual runs") {
  std::mt19937_64 rng(8);
  const auto traj = scalar_pair_trajectory(128, 1.0, 0.01);
  std::vector<DoubledField> w;
  for (int i = 0; i < 5; ++i) w.push_back(random_state(1, 128, rng));
  const auto batch = forward_linearized_batch(w, traj, traj.num_steps(), 3);
  for (std::size_t i = 0; i < w.size(); ++i) CHECK(max_diff(batch[i], forward_linearized(w[i], traj)) == 0.0);
}

TEST_CASE("linearity of the fluctuation propagator") {
  std::mt19937_64 rng(9);
  const auto traj = scalar_pair_trajectory(128, 2.0);
  const auto a = random_state(1, 128, rng);
  const auto b = random_state(1, 128, rng);
  const cdouble alpha(0.3, -1.2);
  const cdouble beta(2.0, 0.5);
  const auto lhs = forward_linearized(alpha * a + beta * b, traj);
  const auto rhs = alpha * forward_linearized(a, traj) + beta * forward_linearized(b, traj);
  CHECK(max_diff(lhs, rhs) < 1e-12 * max_abs(rhs));
}

TEST_CASE("Green matrix satisfies the Bogoliubov conditions") {
  for (bool vector : {false, true}) {
    const auto traj = vector ? vector_pair_trajectory(64, 6.0) : scalar_pair_trajectory(128, 6.0);
    for (double z : {1.0, 6.0}) {
      const auto green = build_green_matrix(traj, traj.checkpoint_index(z), 4);
      CHECK(green.unitarity_defect() < 1e-8);
      CHECK(green.symmetry_defect() < 1e-8);
      CHECK(green.block_structure_defect() < 1e-12);
    }
  }
}

TEST_CASE("Green matrix transpose reproduces back-propagation") {
  std::mt19937_64 rng(10);
  const auto traj = scalar_pair_trajectory(128, 6.0);
  const auto green = build_green_matrix(traj);
  for (int trial = 0; trial < 5; ++trial) {
    const auto f = random_hermitian(1, 128, rng);
    const auto via_matrix = green.transpose_apply(f);
    const auto via_sweep = backpropagate_functional(f, traj);
    CHECK(max_diff(via_matrix, via_sweep) < 1e-10 * max_abs(via_sweep));
  }
  const auto w = random_state(1, 128, rng);
  const Eigen::VectorXcd sw = green.s * stack(w);
  CHECK(max_diff(unstack(sw, 1, 128), forward_linearized(w, traj)) < 1e-10 * max_abs(w));
}

TEST_CASE("Green matrix is refused on large grids") {
  auto g = make_grid(1024, 20.0);
  const auto traj = propagate_scalar({g, Field(g->size())}, 0.1, 0.1);
  CHECK_THROWS_AS(build_green_matrix(traj), ValidationError);
}

TEST_CASE("fluctuation propagator converges at second order") {
  // Endpoint of a fixed input fluctuation with steps h, h/2 against h/32.
  std::mt19937_64 rng(11);
  auto g = make_grid(128, 20.0);
  const auto u0 = init_scalar_pair({1.0, kPi / 2, 2.5}, g);
  DoubledField w = DoubledField::zeros(1, 128);
  for (std::size_t k = 0; k < 128; ++k) {
    w.plus[0][k] = std::exp(-std::pow(g->t(k) + 2.5, 2)) * cdouble(1.0, 0.5);
  }
  auto run = [&](double step) { return forward_linearized(w, propagate_scalar(u0, 4.0, step)); };
  const auto ref = run(0.05 / 32.0);
  const double ratio = max_diff(run(0.05), ref) / max_diff(run(0.025), ref);
  MESSAGE("error ratio " << ratio);
  CHECK(ratio > 3.5);
  CHECK(ratio < 4.5);
}
