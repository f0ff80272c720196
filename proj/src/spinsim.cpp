#include "srspin/spinsim.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace srspin::spin {

namespace {

using cd = std::complex<double>;

// exp(-i H t) applied to `v`, with H = V diag(lambda) V^dagger.
CVector apply_spectral(const Eigen::SelfAdjointEigenSolver<CMatrix>& es, double t, const CVector& v) {
  CVector coeff = es.eigenvectors().adjoint() * v;
  for (Eigen::Index k = 0; k < coeff.size(); ++k) {
    const double phase = -es.eigenvalues()[k] * t;
    coeff[k] *= cd(std::cos(phase), std::sin(phase));
  }
  return es.eigenvectors() * coeff;
}

void require_unit(const Vec3& axis, const char* what) {
  if (!axis.allFinite() || axis.norm() < 1e-12) {
    throw std::invalid_argument(std::string(what) + " must be a non-zero finite vector");
  }
}

}  // namespace

SpinOperators make_spin_operators(HalfInt F) {
  if (F.twice < 1) throw std::invalid_argument("spin F must be positive (2F+1 >= 2)");
  const int n = F.twice + 1;
  const double f = F.value();
  SpinOperators ops{F, CMatrix::Zero(n, n), CMatrix::Zero(n, n), CMatrix::Zero(n, n)};
  // f_+ |m> = sqrt(F(F+1) - m(m+1)) |m+1>; index i-1 holds m+1.
  CMatrix raise = CMatrix::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double m = ops.m_at(i).value();
    ops.fz(i, i) = m;
    if (i > 0) raise(i - 1, i) = std::sqrt(f * (f + 1.0) - m * (m + 1.0));
  }
  const CMatrix lower = raise.adjoint();
  ops.fx = 0.5 * (raise + lower);
  ops.fy = cd(0.0, -0.5) * (raise - lower);
  return ops;
}

SpinOperators make_spin_operators(double F) { return make_spin_operators(HalfInt::from_double(F)); }

Eigen::Matrix3d canonical_rotation(const Vec3& axis) {
  require_unit(axis, "axis");
  const Vec3 n = axis.normalized();
  const Vec3 z = Vec3::UnitZ();
  const Vec3 k = z.cross(n);
  const double s = k.norm();
  const double c = std::clamp(z.dot(n), -1.0, 1.0);
  if (s < 1e-15) {
    if (c > 0) return Eigen::Matrix3d::Identity();
    return Eigen::AngleAxisd(constants::pi, Vec3::UnitX()).toRotationMatrix();
  }
  return Eigen::AngleAxisd(std::atan2(s, c), k / s).toRotationMatrix();
}

CMatrix rotation_operator(const SpinOperators& ops, const Vec3& axis, double angle) {
  require_unit(axis, "rotation axis");
  const Vec3 k = axis.normalized();
  const CMatrix gen = k.x() * ops.fx + k.y() * ops.fy + k.z() * ops.fz;
  Eigen::SelfAdjointEigenSolver<CMatrix> es(gen);
  CMatrix phases = CMatrix::Zero(ops.dim(), ops.dim());
  for (int i = 0; i < ops.dim(); ++i) {
    const double p = -angle * es.eigenvalues()[i];
    phases(i, i) = cd(std::cos(p), std::sin(p));
  }
  return es.eigenvectors() * phases * es.eigenvectors().adjoint();
}

CMatrix basis_rotation(const SpinOperators& ops, const Vec3& axis) {
  const Eigen::AngleAxisd aa(canonical_rotation(axis));
  if (std::abs(aa.angle()) < 1e-300) return CMatrix::Identity(ops.dim(), ops.dim());
  return rotation_operator(ops, aa.axis(), aa.angle());
}

SpinVector to_basis(const SpinOperators& ops, const SpinVector& state, const Vec3& axis) {
  require_unit(axis, "basis axis");
  // amplitudes along n: D(R_n)^dagger psi_z, psi_z = D(R_basis) psi_basis
  const CVector in_z = basis_rotation(ops, state.basis_axis) * state.amps;
  return SpinVector{basis_rotation(ops, axis).adjoint() * in_z, axis.normalized()};
}

SpinVector basis_state(const SpinOperators& ops, HalfInt m, const Vec3& axis) {
  require_unit(axis, "axis");
  if (m.abs() > ops.F || (ops.F.twice - m.twice) % 2 != 0) {
    throw std::invalid_argument("m = " + m.str() + " is not a level of F = " + ops.F.str());
  }
  SpinVector s{CVector::Zero(ops.dim()), axis.normalized()};
  s.amps[ops.index_of(m)] = 1.0;
  return s;
}

CMatrix zeeman_hamiltonian(const SpinOperators& ops, const Vec3& b_gauss, double g_hz_per_gauss,
                           const Vec3& basis_axis) {
  if (!b_gauss.allFinite() || !std::isfinite(g_hz_per_gauss)) {
    throw std::invalid_argument("zeeman_hamiltonian: non-finite field or coupling");
  }
  const Vec3 b = canonical_rotation(basis_axis).transpose() * b_gauss;
  return (constants::two_pi * g_hz_per_gauss) * (b.x() * ops.fx + b.y() * ops.fy + b.z() * ops.fz);
}

Vec3 FieldSchedule::field(double t) const {
  const double ramp = -std::expm1(-t / rise_time_tau);
  return b_guide + b_quench_amplitude * ramp * quench_axis.normalized();
}

double FieldSchedule::max_field_magnitude() const { return b_guide.norm() + std::abs(b_quench_amplitude); }

Vec3 FieldSchedule::guide_axis() const {
  if (b_guide.norm() == 0.0) throw std::invalid_argument("guide field is zero; no quantization axis");
  return b_guide.normalized();
}

Vec3 FieldSchedule::detection_axis() const {
  const Vec3 g = guide_axis();
  Vec3 q = quench_axis.normalized();
  Vec3 perp = q - q.dot(g) * g;
  if (perp.norm() < 1e-12) {
    // quench parallel to the guide: any perpendicular direction defines the tilt plane
    perp = g.unitOrthogonal();
  }
  perp.normalize();
  perp = std::cos(detection_axis_azimuth) * perp + std::sin(detection_axis_azimuth) * g.cross(perp);
  return std::cos(detection_axis_angle) * g + std::sin(detection_axis_angle) * perp;
}

void FieldSchedule::validate() const {
  if (!(rise_time_tau > 0.0) || !std::isfinite(rise_time_tau)) {
    throw std::invalid_argument("rise_time_tau must be positive");
  }
  if (!b_guide.allFinite() || !std::isfinite(b_quench_amplitude) || !std::isfinite(detection_axis_angle) ||
      !std::isfinite(detection_axis_azimuth)) {
    throw std::invalid_argument("field schedule has non-finite entries");
  }
  if (b_quench_amplitude != 0.0) require_unit(quench_axis, "quench_axis");
}

FieldSchedule FieldSchedule::constant(const Vec3& b_gauss) {
  FieldSchedule s;
  s.b_guide = b_gauss;
  s.b_quench_amplitude = 0.0;
  return s;
}

SpinVector evolve(const SpinVector& state, const FieldSchedule& schedule, const SpinOperators& ops,
                  double duration, const EvolveOptions& opt, double t_start) {
  schedule.validate();
  if (state.amps.size() != ops.dim()) throw std::invalid_argument("state dimension does not match operators");
  if (std::abs(state.norm() - 1.0) > 1e-10) throw std::invalid_argument("evolve: input state is not normalized");
  if (!(opt.dt > 0.0)) throw std::invalid_argument("evolve: dt must be positive");
  if (duration < 0.0) throw std::invalid_argument("evolve: negative duration");
  const double f_max = std::abs(opt.g_hz_per_gauss) * schedule.max_field_magnitude();
  if (f_max > 0.0 && opt.dt > 1.0 / (50.0 * f_max)) {
    throw std::invalid_argument("evolve: dt exceeds 1/(50 f_Larmor,max)");
  }
  if (schedule.b_quench_amplitude != 0.0 && opt.dt > schedule.rise_time_tau / 30.0) {
    throw std::invalid_argument("evolve: dt exceeds rise_time_tau/30");
  }
  if (duration == 0.0) return state;

  const auto steps = std::max(1LL, static_cast<long long>(std::ceil(duration / opt.dt - 1e-9)));
  const double h = duration / static_cast<double>(steps);
  SpinVector out = state;

  CMatrix h_run;
  long long run_length = 0;
  auto flush = [&] {
    if (run_length == 0) return;
    Eigen::SelfAdjointEigenSolver<CMatrix> es(h_run);
    out.amps = apply_spectral(es, h * static_cast<double>(run_length), out.amps);
    run_length = 0;
  };
  for (long long k = 0; k < steps; ++k) {
    const double t_mid = t_start + (static_cast<double>(k) + 0.5) * h;
    CMatrix hk = zeeman_hamiltonian(ops, schedule.field(t_mid), opt.g_hz_per_gauss, state.basis_axis);
    if (run_length > 0 && hk != h_run) flush();
    if (run_length == 0) h_run = std::move(hk);
    ++run_length;
  }
  flush();
  return out;
}

std::vector<double> fold_abs(const SpinOperators& ops, std::span<const double> p_m) {
  const int n_abs = (ops.F.twice + 2) / 2;  // number of distinct |m|
  std::vector<double> bins(n_abs, 0.0);
  for (int i = 0; i < ops.dim(); ++i) {
    const HalfInt a = ops.m_at(i).abs();
    bins[(ops.F.twice - a.twice) / 2] += p_m[i];
  }
  if (bins.size() >= 3) {
    bins[bins.size() - 2] += bins.back();
    bins.pop_back();
  }
  return bins;
}

PopulationRecord measure_populations(const SpinOperators& ops, const SpinVector& state, const Vec3& detection_axis) {
  if (!detection_axis.allFinite() || detection_axis.norm() < 1e-12) {
    throw std::invalid_argument("measure_populations: zero-length detection axis");
  }
  if (std::abs(state.norm() - 1.0) > 1e-10) throw std::invalid_argument("measure_populations: state not normalized");
  const SpinVector d = to_basis(ops, state, detection_axis);
  PopulationRecord rec;
  rec.p_m.resize(ops.dim());
  for (int i = 0; i < ops.dim(); ++i) rec.p_m[i] = std::norm(d.amps[i]);
  rec.p_abs = fold_abs(ops, rec.p_m);
  return rec;
}

std::vector<PopulationRecord> quench_experiment(const FieldSchedule& schedule, std::span<const double> times,
                                                const QuenchOptions& opt) {
  if (times.empty()) return {};
  if (!(opt.p_prep >= 0.0 && opt.p_prep <= 1.0)) throw std::invalid_argument("p_prep must lie in [0, 1]");
  for (double t : times) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw std::invalid_argument("hold times must be finite and >= 0");
  }
  const SpinOperators ops = make_spin_operators(kSr87Spin);
  const Vec3 guide = schedule.guide_axis();
  const Vec3 detect = schedule.detection_axis();

  std::vector<std::size_t> order(times.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return times[a] < times[b]; });

  struct Branch {
    double weight;
    SpinVector state;
  };
  std::vector<Branch> branches;
  branches.push_back({opt.p_prep, to_basis(ops, basis_state(ops, ops.F, guide), Vec3::UnitZ())});
  if (opt.p_prep < 1.0) {
    branches.push_back(
        {1.0 - opt.p_prep, to_basis(ops, basis_state(ops, HalfInt(ops.F.twice - 2), guide), Vec3::UnitZ())});
  }

  std::vector<PopulationRecord> out(times.size());
  double t_now = 0.0;
  for (std::size_t idx : order) {
    const double t = times[idx];
    PopulationRecord rec;
    rec.time = t;
    rec.p_m.assign(ops.dim(), 0.0);
    for (auto& br : branches) {
      br.state = evolve(br.state, schedule, ops, t - t_now, opt.evolve, t_now);
      const PopulationRecord part = measure_populations(ops, br.state, detect);
      for (int i = 0; i < ops.dim(); ++i) rec.p_m[i] += br.weight * part.p_m[i];
    }
    rec.p_abs = fold_abs(ops, rec.p_m);
    t_now = t;
    out[idx] = std::move(rec);
  }
  return out;
}

namespace {
std::string abs_column(const SpinOperators& ops, std::size_t bin, std::size_t n_bins) {
  if (n_bins >= 2 && bin + 1 == n_bins && (ops.F.twice + 2) / 2 >= 3) return "p_merged";
  const int twice = ops.F.twice - 2 * static_cast<int>(bin);
  if (twice % 2 == 0) return "p_" + std::to_string(twice / 2);
  return "p_" + std::to_string(twice) + "half";
}
}  // namespace

void write_population_csv(std::ostream& os, const SpinOperators& ops, std::span<const PopulationRecord> records) {
  const std::size_t n_bins = static_cast<std::size_t>(ops.F.twice + 2) / 2 - ((ops.F.twice + 2) / 2 >= 3 ? 1 : 0);
  os << "t_s";
  for (std::size_t b = 0; b < n_bins; ++b) os << ',' << abs_column(ops, b, n_bins);
  for (int i = 0; i < ops.dim(); ++i) {
    const HalfInt m = ops.m_at(i);
    os << ",p_m" << (m.twice >= 0 ? "+" : "") << m.str();
  }
  os << '\n';
  char buf[64];
  for (const auto& r : records) {
    std::snprintf(buf, sizeof buf, "%.9e", r.time);
    os << buf;
    for (double p : r.p_abs) {
      std::snprintf(buf, sizeof buf, ",%.12e", p);
      os << buf;
    }
    for (double p : r.p_m) {
      std::snprintf(buf, sizeof buf, ",%.12e", p);
      os << buf;
    }
    os << '\n';
  }
}

}  // namespace srspin::spin
