#include "qsoliton/correlation.hpp"

#include <cmath>
#include <numbers>
#include <sstream>

namespace qsol {

namespace {

constexpr cdouble kI{0.0, 1.0};

struct ProbeGroup {
  std::size_t step = 0;
  std::vector<DoubledField> functionals;
};

// Back-propagates every functional in every group in one sweep and returns,
// per group, the complex second-moment matrix <O_i O_j>.
std::vector<Eigen::MatrixXcd> group_moments(const Trajectory& traj, std::vector<ProbeGroup> groups,
                                            unsigned threads, double scale) {
  std::vector<BackpropRequest> requests;
  for (auto& g : groups) {
    for (auto& f : g.functionals) requests.push_back({g.step, std::move(f)});
  }
  const auto back = backpropagate_batch(requests, traj, threads);
  const double dt = traj.grid().dt();
  std::vector<Eigen::MatrixXcd> out;
  std::size_t offset = 0;
  for (const auto& g : groups) {
    const auto count = static_cast<Eigen::Index>(g.functionals.size());
    Eigen::MatrixXcd moments(count, count);
    for (Eigen::Index i = 0; i < count; ++i) {
      for (Eigen::Index j = i; j < count; ++j) {
        const cdouble v = second_moment(back[offset + static_cast<std::size_t>(i)],
                                        back[offset + static_cast<std::size_t>(j)], dt, scale);
        moments(i, j) = v;
        moments(j, i) = std::conj(v);
      }
      moments(i, i) = moments(i, i).real();
    }
    out.push_back(std::move(moments));
    offset += g.functionals.size();
  }
  return out;
}

std::vector<std::size_t> checkpoint_steps(const Trajectory& traj, std::span<const double> zs) {
  std::vector<std::size_t> steps;
  steps.reserve(zs.size());
  for (double z : zs) steps.push_back(traj.checkpoint_index(z));
  return steps;
}

Field component_field(std::span<const Field> fields, MeasuredComponent component) {
  switch (component) {
    case MeasuredComponent::U:
      return fields[0];
    case MeasuredComponent::V:
      if (fields.size() < 2) break;
      return fields[1];
    case MeasuredComponent::Ex:
      if (fields.size() < 2) break;
      return polarization_x(fields[0], fields[1]);
    case MeasuredComponent::Ey:
      if (fields.size() < 2) break;
      return polarization_y(fields[0], fields[1]);
  }
  throw ValidationError("measured component requires a two-component (vector) trajectory");
}

double correlation_coefficient(double cov12, double cov11, double cov22) {
  const double denom = std::sqrt(cov11 * cov22);
  return denom > 0.0 ? cov12 / denom : 0.0;
}

PairCorrelation pair_from_moments(double z, const Eigen::MatrixXcd& m) {
  PairCorrelation p;
  p.z = z;
  p.cov11 = m(0, 0).real();
  p.cov22 = m(1, 1).real();
  p.cov12 = m(0, 1).real();
  p.cov12_imag = m(0, 1).imag();
  p.c12 = correlation_coefficient(p.cov12, p.cov11, p.cov22);
  return p;
}

struct PairRegions {
  SampleInterval first;
  SampleInterval second;
  double boundary = 0.0;
  bool fallback = false;
};

PairRegions split_pair(const TimeGrid& grid, std::span<const cdouble> field,
                       const PairOptions& options) {
  const std::size_t n = grid.size();
  PairRegions r;
  const auto peaks = find_peak_pair(grid, field);
  std::size_t cut = grid.nearest_index(0.0);
  if (peaks) {
    cut = peaks->trough;
  } else {
    r.fallback = true;
  }
  r.boundary = grid.t(cut);
  if (options.split == PairSplit::HalfLine) {
    r.first = {0, cut};
    r.second = {cut, n};
    return r;
  }
  const auto half = static_cast<std::size_t>(std::llround(options.window_half_width / grid.dt()));
  const std::size_t left_peak = peaks ? peaks->left : cut - std::min(cut, half / 2);
  const std::size_t right_peak = peaks ? peaks->right : std::min(n - 1, cut + half / 2);
  r.first = {left_peak - std::min(left_peak, half), std::min(cut, left_peak + half + 1)};
  r.second = {std::max(cut, right_peak - std::min(right_peak, half)), std::min(n, right_peak + half + 1)};
  return r;
}

}  // namespace

SampleInterval interval_from_times(const TimeGrid& grid, double t_begin, double t_end) {
  auto to_index = [&](double t) {
    const double k = (t + grid.t_half_span()) / grid.dt();
    const double rounded = std::round(k);
    if (std::abs(k - rounded) > 1e-9 || rounded < 0.0 || rounded > static_cast<double>(grid.size())) {
      std::ostringstream os;
      os << "time " << t << " is not aligned to the grid (dt = " << grid.dt() << ")";
      throw ValidationError(os.str());
    }
    return static_cast<std::size_t>(rounded);
  };
  const auto b = to_index(t_begin);
  const auto e = to_index(t_end);
  if (e <= b) throw ValidationError("empty or reversed interval");
  return {b, e};
}

SlotPartition SlotPartition::uniform(const TimeGrid& grid, double t_begin, double t_end,
                                     double width) {
  if (!(width > 0.0) || !(t_end > t_begin)) throw ValidationError("invalid slot partition");
  if (t_begin < -grid.t_half_span() - 1e-12 || t_end > grid.t_half_span() + 1e-12) {
    throw ValidationError("slot partition extends beyond the time window");
  }
  const double count_real = (t_end - t_begin) / width;
  const auto count = static_cast<std::size_t>(std::llround(count_real));
  if (count == 0 || std::abs(count_real - static_cast<double>(count)) > 1e-6) {
    throw ValidationError("analysis window is not an integer number of slots");
  }
  // First sample index whose time is >= t (with a small tolerance).
  auto first_at_or_after = [&](double t) {
    const double k = std::ceil((t + grid.t_half_span()) / grid.dt() - 1e-9);
    return static_cast<std::size_t>(std::clamp(k, 0.0, static_cast<double>(grid.size())));
  };
  SlotPartition p;
  p.width = width;
  for (std::size_t i = 0; i < count; ++i) {
    const double lo = t_begin + static_cast<double>(i) * width;
    const double hi = t_begin + static_cast<double>(i + 1) * width;
    SampleInterval s{first_at_or_after(lo), first_at_or_after(hi)};
    if (s.size() == 0) throw ValidationError("slot width is below the grid spacing");
    p.slots.push_back(s);
    p.centers.push_back(0.5 * (lo + hi));
  }
  return p;
}

DoubledField number_functional(std::span<const Field> fields, SampleInterval interval,
                               MeasuredComponent component) {
  const std::size_t m = fields.size();
  const std::size_t n = fields[0].size();
  if (interval.end > n || interval.begin >= interval.end) {
    throw ValidationError("interval outside the grid");
  }
  const Field e = component_field(fields, component);
  auto f = DoubledField::zeros(m, n);
  const double s = 1.0 / std::numbers::sqrt2;
  for (std::size_t k = interval.begin; k < interval.end; ++k) {
    const cdouble ec = std::conj(e[k]);
    switch (component) {
      case MeasuredComponent::U:
        f.plus[0][k] = ec;
        break;
      case MeasuredComponent::V:
        f.plus[1][k] = ec;
        break;
      case MeasuredComponent::Ex:
        // dE_x = (dU + dV)/sqrt2
        f.plus[0][k] = ec * s;
        f.plus[1][k] = ec * s;
        break;
      case MeasuredComponent::Ey:
        // dE_y = (dU - dV)/(i sqrt2)
        f.plus[0][k] = -kI * ec * s;
        f.plus[1][k] = kI * ec * s;
        break;
    }
  }
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t k = interval.begin; k < interval.end; ++k) f.minus[c][k] = std::conj(f.plus[c][k]);
  }
  return f;
}

DoubledField number_functional(const Trajectory& traj, double z, SampleInterval interval,
                               MeasuredComponent component) {
  const auto fields = traj.fields_at(traj.checkpoint_index(z));
  return number_functional(fields, interval, component);
}

double slot_photon_number(const TimeGrid& grid, std::span<const Field> fields,
                          SampleInterval interval, MeasuredComponent component) {
  const Field e = component_field(fields, component);
  double sum = 0.0;
  for (std::size_t k = interval.begin; k < interval.end; ++k) sum += std::norm(e[k]);
  return sum * grid.dt();
}

cdouble second_moment(const DoubledField& fi0, const DoubledField& fj0, double dt, double scale) {
  cdouble sum = 0.0;
  for (std::size_t c = 0; c < fi0.components(); ++c) {
    const auto& a = fi0.plus[c];
    const auto& b = fj0.plus[c];
    for (std::size_t k = 0; k < a.size(); ++k) sum += a[k] * std::conj(b[k]);
  }
  return sum * (dt * scale);
}

double covariance(const DoubledField& fi0, const DoubledField& fj0, double dt, double scale) {
  return second_moment(fi0, fj0, dt, scale).real();
}

CorrelationMap correlation_map(const Trajectory& traj, double z, const SlotPartition& partition,
                               const CorrelationOptions& options) {
  auto maps = correlation_maps(traj, std::span(&z, 1), partition, options);
  return std::move(maps.front());
}

std::vector<CorrelationMap> correlation_maps(const Trajectory& traj, std::span<const double> zs,
                                             const SlotPartition& partition,
                                             const CorrelationOptions& options) {
  const auto steps = checkpoint_steps(traj, zs);
  const auto& grid = traj.grid();
  std::vector<ProbeGroup> groups;
  std::vector<std::vector<double>> shots;
  for (std::size_t step : steps) {
    const auto fields = traj.fields_at(step);
    ProbeGroup g{step, {}};
    std::vector<double> shot;
    for (const auto& slot : partition.slots) {
      g.functionals.push_back(number_functional(fields, slot, options.component));
      shot.push_back(options.fluctuation_scale *
                     slot_photon_number(grid, fields, slot, options.component));
    }
    groups.push_back(std::move(g));
    shots.push_back(std::move(shot));
  }
  const auto moments = group_moments(traj, std::move(groups), options.threads,
                                     options.fluctuation_scale);

  std::vector<CorrelationMap> maps;
  for (std::size_t g = 0; g < moments.size(); ++g) {
    const auto& mom = moments[g];
    const auto count = mom.rows();
    CorrelationMap map;
    map.z = zs[g];
    map.partition = partition;
    map.cov = mom.real();
    map.cov_imag = mom.imag();
    map.shot = shots[g];
    map.masked.assign(static_cast<std::size_t>(count), false);
    map.c = Eigen::MatrixXd::Zero(count, count);
    for (Eigen::Index i = 0; i < count; ++i) {
      const auto ui = static_cast<std::size_t>(i);
      map.masked[ui] = !(map.shot[ui] > 0.0) || !(map.cov(i, i) > 0.0);
    }
    for (Eigen::Index i = 0; i < count; ++i) {
      for (Eigen::Index j = i; j < count; ++j) {
        if (map.masked[static_cast<std::size_t>(i)] || map.masked[static_cast<std::size_t>(j)]) continue;
        const double numer = map.cov(i, j) - (i == j ? map.shot[static_cast<std::size_t>(i)] : 0.0);
        const double value = numer / std::sqrt(map.cov(i, i) * map.cov(j, j));
        map.c(i, j) = value;
        map.c(j, i) = value;
      }
    }
    maps.push_back(std::move(map));
  }
  return maps;
}

PairCorrelation pair_correlation(const Trajectory& traj, double z, const PairOptions& options) {
  return pair_correlation_curve(traj, std::span(&z, 1), options).front();
}

std::vector<PairCorrelation> pair_correlation_curve(const Trajectory& traj,
                                                    std::span<const double> zs,
                                                    const PairOptions& options) {
  const auto steps = checkpoint_steps(traj, zs);
  std::vector<ProbeGroup> groups;
  std::vector<PairRegions> regions;
  for (std::size_t step : steps) {
    const auto fields = traj.fields_at(step);
    auto r = split_pair(traj.grid(), fields[0], options);
    groups.push_back({step,
                      {number_functional(fields, r.first), number_functional(fields, r.second)}});
    regions.push_back(r);
  }
  const auto moments = group_moments(traj, std::move(groups), options.threads,
                                     options.fluctuation_scale);
  std::vector<PairCorrelation> out;
  for (std::size_t i = 0; i < moments.size(); ++i) {
    auto p = pair_from_moments(zs[i], moments[i]);
    p.boundary = regions[i].boundary;
    p.fallback = regions[i].fallback;
    out.push_back(p);
  }
  return out;
}

PairCorrelation polarization_pair_correlation(const Trajectory& traj, double z,
                                              const PairOptions& options) {
  return polarization_correlation_curve(traj, std::span(&z, 1), options).front();
}

std::vector<PairCorrelation> polarization_correlation_curve(const Trajectory& traj,
                                                            std::span<const double> zs,
                                                            const PairOptions& options) {
  if (traj.components() != 2) {
    throw ValidationError("polarization correlation requires a vector trajectory");
  }
  const auto steps = checkpoint_steps(traj, zs);
  const std::size_t n = traj.grid().size();
  const std::size_t mid = traj.grid().nearest_index(0.0);
  SampleInterval x_region{0, n};
  SampleInterval y_region{0, n};
  if (options.polarization == PolarizationMode::PerSoliton) {
    x_region = {0, mid};
    y_region = {mid, n};
  }
  std::vector<ProbeGroup> groups;
  for (std::size_t step : steps) {
    const auto fields = traj.fields_at(step);
    groups.push_back({step,
                      {number_functional(fields, x_region, MeasuredComponent::Ex),
                       number_functional(fields, y_region, MeasuredComponent::Ey)}});
  }
  const auto moments = group_moments(traj, std::move(groups), options.threads,
                                     options.fluctuation_scale);
  std::vector<PairCorrelation> out;
  for (std::size_t i = 0; i < moments.size(); ++i) {
    auto p = pair_from_moments(zs[i], moments[i]);
    p.boundary = options.polarization == PolarizationMode::PerSoliton ? traj.grid().t(mid) : 0.0;
    out.push_back(p);
  }
  return out;
}

PairCorrelation component_correlation(const Trajectory& traj, double z, MeasuredComponent first,
                                      MeasuredComponent second, const PairOptions& options) {
  const std::size_t step = traj.checkpoint_index(z);
  const auto fields = traj.fields_at(step);
  const SampleInterval all{0, traj.grid().size()};
  std::vector<ProbeGroup> groups{
      {step, {number_functional(fields, all, first), number_functional(fields, all, second)}}};
  const auto moments = group_moments(traj, std::move(groups), options.threads,
                                     options.fluctuation_scale);
  return pair_from_moments(z, moments.front());
}

}  // namespace qsol
