#include <doctest.h>

#include <cmath>
#include <numbers>

#include <Eigen/Eigenvalues>

#include "qsoliton/correlation.hpp"

using namespace qsol;

namespace {

constexpr double kPi = std::numbers::pi;

double sech(double x) { return 1.0 / std::cosh(x); }

Trajectory pair_trajectory(std::size_t n, double theta, double z, double step) {
  auto g = make_grid(n, 20.0);
  return propagate_scalar(init_scalar_pair({1.0, theta, 3.5}, g), z, step);
}

Trajectory vector_trajectory(std::size_t n, double z, double step, double b_coeff = 2.0) {
  auto g = make_grid(n, 20.0);
  const VectorPairSpec spec{3.5, 1.0, b_coeff};
  const auto init = init_vector_pair(spec, g);
  return propagate_vector(init.u, init.v, z, step, spec);
}

double max_abs(const Eigen::MatrixXd& m) { return m.cwiseAbs().maxCoeff(); }

}  // namespace

TEST_CASE("slot partition membership") {
  auto g = make_grid(1024, 20.0);
  const auto p = SlotPartition::uniform(*g, -8.0, 8.0, 0.1);
  CHECK(p.size() == 160);
  CHECK(p.centers.front() == doctest::Approx(-7.95));
  std::size_t total = 0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const auto& s = p.slots[i];
    CHECK(s.size() >= 2);
    CHECK(s.size() <= 3);
    if (i > 0) CHECK(s.begin == p.slots[i - 1].end);
    for (std::size_t k = s.begin; k < s.end; ++k) {
      CHECK(g->t(k) >= p.centers[i] - 0.05 - 1e-12);
      CHECK(g->t(k) < p.centers[i] + 0.05);
    }
    total += s.size();
  }
  CHECK(total == 409);  // samples k = 308 ... 716

  CHECK_THROWS_AS(SlotPartition::uniform(*g, -8.0, 8.05, 0.1), ValidationError);
  CHECK_THROWS_AS(SlotPartition::uniform(*g, -30.0, 0.0, 1.0), ValidationError);
  CHECK_THROWS_AS(SlotPartition::uniform(*g, -1.0, 1.0, 0.01), ValidationError);
  CHECK_THROWS_AS(interval_from_times(*g, 0.01, 1.0), ValidationError);
  CHECK(interval_from_times(*g, -20.0, 20.0) == SampleInterval{0, 1024});
}

TEST_CASE("number functional examples") {
  auto g = make_grid(256, 20.0);
  const auto u = init_scalar_pair({1.0, kPi / 2, 3.5}, g);
  const std::vector<Field> fields{u.samples};
  const SampleInterval slot{100, 120};
  const auto f = number_functional(fields, slot);
  for (std::size_t k = 0; k < 256; ++k) {
    const bool inside = k >= 100 && k < 120;
    CHECK(f.plus[0][k] == (inside ? std::conj(u.samples[k]) : cdouble(0.0)));
    CHECK(f.minus[0][k] == std::conj(f.plus[0][k]));
  }
  CHECK_THROWS_AS(number_functional(fields, slot, MeasuredComponent::Ex), ValidationError);

  const auto init = init_vector_pair({3.5, 1.0, 2.0}, g);
  const std::vector<Field> vec{init.u.samples, init.v.samples};
  const auto fx = number_functional(vec, {0, 256}, MeasuredComponent::Ex);
  const auto left = g->nearest_index(-3.5);
  const auto right = g->nearest_index(3.5);
  CHECK(std::abs(fx.plus[0][left]) > 0.69);
  CHECK(std::abs(fx.plus[0][right]) < 1e-2);
  CHECK(fx.plus[0][left] == fx.plus[1][left]);
  const auto fy = number_functional(vec, {0, 256}, MeasuredComponent::Ey);
  CHECK(std::abs(fy.plus[0][right]) > 0.69);
  CHECK(fy.plus[0][right] == -fy.plus[1][right]);
}

TEST_CASE("coherent input: shot-noise variance and no correlation") {
  auto g = make_grid(512, 20.0);
  Field s(g->size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = sech(g->t(k));
  const auto traj = propagate_scalar({g, s}, 0.0, 1e-2);
  const auto f = number_functional(traj, 0.0, {0, 512});
  CHECK(covariance(f, f, g->dt()) == doctest::Approx(2.0).epsilon(1e-9));
  CHECK(covariance(f, f, g->dt(), 3.0) == doctest::Approx(6.0).epsilon(1e-9));

  const auto a = number_functional(traj, 0.0, {200, 256});
  const auto b = number_functional(traj, 0.0, {256, 300});
  CHECK(covariance(a, b, g->dt()) == 0.0);
  CHECK(second_moment(a, b, g->dt()) == cdouble(0.0));
}

TEST_CASE("correlations vanish at z = 0") {
  const auto traj = pair_trajectory(512, kPi / 2, 0.0, 1e-2);
  const auto part = SlotPartition::uniform(traj.grid(), -8.0, 8.0, 0.5);
  const auto map = correlation_map(traj, 0.0, part);
  CHECK(max_abs(map.c) < 1e-14);
  for (std::size_t i = 0; i < part.size(); ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    CHECK(map.cov(ii, ii) == doctest::Approx(map.shot[i]).epsilon(1e-12));
  }
  const auto pair = pair_correlation(traj, 0.0);
  CHECK(std::abs(pair.c12) < 1e-14);
  CHECK_FALSE(pair.fallback);
  CHECK(std::abs(pair.boundary) < 0.05);

  const auto vtraj = vector_trajectory(256, 0.0, 1e-2);
  CHECK(std::abs(polarization_pair_correlation(vtraj, 0.0).c12) < 1e-9);
  PairOptions per_soliton;
  per_soliton.polarization = PolarizationMode::PerSoliton;
  CHECK(std::abs(polarization_pair_correlation(vtraj, 0.0, per_soliton).c12) < 1e-9);
}

TEST_CASE("covariances agree with the dense Green-matrix computation") {
  const auto traj = pair_trajectory(128, kPi / 2, 6.0, 1e-2);
  const double dt = traj.grid().dt();
  const auto part = SlotPartition::uniform(traj.grid(), -8.0, 8.0, 1.0);
  const auto map = correlation_map(traj, 6.0, part);
  const auto green = build_green_matrix(traj);
  const auto n = static_cast<Eigen::Index>(traj.grid().size());

  // Sigma0 = <w w^T> of the stacked z = 0 fluctuation: <dU dU^dagger> = 1/dt.
  Eigen::MatrixXcd sigma0 = Eigen::MatrixXcd::Zero(2 * n, 2 * n);
  sigma0.topRightCorner(n, n) = Eigen::MatrixXcd::Identity(n, n) / dt;
  const auto fields = traj.fields_at(traj.num_steps());
  Eigen::MatrixXcd stacked(2 * n, static_cast<Eigen::Index>(part.size()));
  for (std::size_t i = 0; i < part.size(); ++i) {
    stacked.col(static_cast<Eigen::Index>(i)) = stack(number_functional(fields, part.slots[i]));
  }
  const Eigen::MatrixXcd oracle =
      dt * dt * stacked.transpose() * green.s * sigma0 * green.s.transpose() * stacked;
  const double scale = max_abs(map.cov);
  CHECK(max_abs(map.cov - oracle.real()) / scale < 1e-9);
  CHECK(max_abs(map.cov_imag - oracle.imag()) / scale < 1e-9);
}

TEST_CASE("correlation map properties after propagation") {
  const auto traj = pair_trajectory(512, kPi / 2, 6.0, 5e-3);
  const auto part = SlotPartition::uniform(traj.grid(), -8.0, 8.0, 0.25);
  CorrelationOptions options;
  options.threads = 4;
  const auto map = correlation_map(traj, 6.0, part, options);
  const auto m = map.c.rows();
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) {
      CHECK(map.c(i, j) == map.c(j, i));
      CHECK(map.cov(i, j) == map.cov(j, i));
      CHECK(map.cov_imag(i, j) == -map.cov_imag(j, i));
      if (i != j) CHECK(std::abs(map.c(i, j)) <= 1.0 + 1e-9);
    }
  }
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(map.cov);
  CHECK(eig.eigenvalues().minCoeff() > -1e-8 * map.cov.trace());

  // The coherent input is number-squeezed nowhere at z = 0, so any
  // sub-shot-noise diagonal entry is a propagation effect.
  bool any_nonzero = false;
  for (Eigen::Index i = 0; i < m; ++i) {
    for (Eigen::Index j = 0; j < m; ++j) any_nonzero |= i != j && std::abs(map.c(i, j)) > 1e-3;
  }
  CHECK(any_nonzero);

  CorrelationOptions serial = options;
  serial.threads = 1;
  const auto again = correlation_map(traj, 6.0, part, serial);
  CHECK(max_abs(again.c - map.c) == 0.0);
}

TEST_CASE("fluctuation scale leaves the coefficients unchanged") {
  const auto traj = pair_trajectory(256, kPi / 2, 4.0, 1e-2);
  const auto part = SlotPartition::uniform(traj.grid(), -8.0, 8.0, 0.5);
  const auto ref = correlation_map(traj, 4.0, part);
  for (double scale : {0.5, 2.0}) {
    CorrelationOptions o;
    o.fluctuation_scale = scale;
    const auto scaled = correlation_map(traj, 4.0, part, o);
    CHECK(max_abs(scaled.c - ref.c) < 1e-12);
    CHECK(max_abs(scaled.cov - scale * ref.cov) < 1e-12 * max_abs(ref.cov) * scale);
    PairOptions po;
    po.fluctuation_scale = scale;
    CHECK(std::abs(pair_correlation(traj, 4.0, po).c12 - pair_correlation(traj, 4.0).c12) < 1e-12);
  }
}

TEST_CASE("total photon-number variance is invariant along z") {
  const auto traj = pair_trajectory(512, kPi / 2, 10.0, 5e-3);
  const auto& g = traj.grid();
  const double n0 = norm_squared(g, traj.fields_at(0)[0]);
  const SampleInterval all{0, g.size()};
  std::vector<BackpropRequest> req;
  for (double z : {0.0, 2.5, 5.0, 10.0}) {
    req.push_back({traj.checkpoint_index(z), number_functional(traj, z, all)});
  }
  for (const auto& f0 : backpropagate_batch(req, traj, 2)) {
    CHECK(std::abs(covariance(f0, f0, g.dt()) - n0) / n0 < 1e-6);
  }

  const auto vtraj = vector_trajectory(256, 5.0, 1e-2);
  const auto& vg = vtraj.grid();
  const auto v0 = vtraj.fields_at(0);
  const double total0 = norm_squared(vg, v0[0]) + norm_squared(vg, v0[1]);
  const auto fields = vtraj.fields_at(vtraj.num_steps());
  auto f = number_functional(fields, {0, vg.size()}, MeasuredComponent::U) +
           number_functional(fields, {0, vg.size()}, MeasuredComponent::V);
  const auto f0 = backpropagate_functional(f, vtraj);
  CHECK(std::abs(covariance(f0, f0, vg.dt()) - total0) / total0 < 1e-6);
}

TEST_CASE("mirror-symmetric pair gives equal variances on mirrored regions") {
  // theta = 0 is even in t, so sample k and sample n - k see identical
  // statistics for every z.
  const auto traj = pair_trajectory(512, 0.0, 8.0, 5e-3);
  const std::size_t n = traj.grid().size();
  const SampleInterval left{n / 2 - 80, n / 2};
  const SampleInterval right{n / 2 + 1, n / 2 + 81};
  const auto fields = traj.fields_at(traj.num_steps());
  std::vector<BackpropRequest> req{{traj.num_steps(), number_functional(fields, left)},
                                   {traj.num_steps(), number_functional(fields, right)}};
  const auto back = backpropagate_batch(req, traj);
  const double c11 = covariance(back[0], back[0], traj.grid().dt());
  const double c22 = covariance(back[1], back[1], traj.grid().dt());
  CHECK(std::abs(c11 - c22) / c11 < 1e-6);
}

TEST_CASE("vacuum component is uncorrelated with everything") {
  auto g = make_grid(256, 20.0);
  Field s(g->size());
  for (std::size_t k = 0; k < s.size(); ++k) s[k] = sech(g->t(k) + 2.0) + sech(g->t(k) - 2.0);
  const VectorPairSpec spec{3.5, 1.0, 0.0};
  const auto traj = propagate_vector({g, s}, {g, Field(g->size())}, 4.0, 1e-2, spec);
  const auto p = component_correlation(traj, 4.0, MeasuredComponent::U, MeasuredComponent::V);
  CHECK(p.c12 == 0.0);
  CHECK(p.cov22 == 0.0);
  CHECK(p.cov11 > 0.0);
}

TEST_CASE("vector pair becomes anti-correlated between x and y") {
  const auto traj = vector_trajectory(512, 12.0, 5e-3);
  const std::vector<double> zs{0.0, 4.0, 12.0};
  const auto curve = polarization_correlation_curve(traj, zs, {.threads = 2});
  CHECK(std::abs(curve[0].c12) < 1e-9);
  CHECK(curve[2].c12 < -0.3);
  for (const auto& p : curve) CHECK(std::abs(p.c12) <= 1.0 + 1e-9);
  CHECK_THROWS_AS(polarization_pair_correlation(pair_trajectory(256, 0.0, 1.0, 0.1), 1.0),
                  ValidationError);
}

TEST_CASE("finite-window pair split") {
  const auto traj = pair_trajectory(512, kPi / 2, 6.0, 5e-3);
  PairOptions o;
  o.split = PairSplit::FiniteWindow;
  o.window_half_width = 2.0;
  const auto windowed = pair_correlation(traj, 6.0, o);
  const auto half = pair_correlation(traj, 6.0);
  CHECK(std::abs(windowed.c12) <= 1.0);
  CHECK(windowed.c12 != half.c12);
  CHECK(windowed.boundary == half.boundary);

  // Windows wider than the grid reduce to the half-line split.
  o.window_half_width = 50.0;
  const auto wide = pair_correlation(traj, 6.0, o);
  CHECK(wide.c12 == half.c12);
  CHECK(wide.cov11 == half.cov11);
}
