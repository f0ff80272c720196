#include "srspin/montecarlo.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>
#include <numeric>
#include <ostream>
#include <stdexcept>

namespace srspin::mc {

namespace {

using optics::evaluate;

// RK4 stepping over a fixed field set, without the per-call validation.
class Propagator {
 public:
  Propagator(std::span<const PotentialField> fields, double mass, double max_dt)
      : fields_(fields), inv_mass_(1.0 / mass), max_dt_(max_dt) {}

  void advance(AtomSample& a, double t) const {
    if (t <= 0.0) return;
    if (fields_.empty()) {
      a.position += a.velocity * t;
      return;
    }
    const auto n = std::max(1L, static_cast<long>(std::ceil(t / max_dt_ - 1e-9)));
    const double h = t / static_cast<double>(n);
    for (long k = 0; k < n; ++k) step(a, h);
  }

  Vec3 accel(const Vec3& r, HalfInt m) const {
    Vec3 f = Vec3::Zero();
    for (const auto& fld : fields_) f += evaluate(fld, r, m).force;
    return f * inv_mass_;
  }

 private:
  void step(AtomSample& a, double h) const {
    const Vec3 r = a.position;
    const Vec3 v = a.velocity;
    const Vec3 k1r = v;
    const Vec3 k1v = accel(r, a.m_f);
    const Vec3 k2r = v + 0.5 * h * k1v;
    const Vec3 k2v = accel(r + 0.5 * h * k1r, a.m_f);
    const Vec3 k3r = v + 0.5 * h * k2v;
    const Vec3 k3v = accel(r + 0.5 * h * k2r, a.m_f);
    const Vec3 k4r = v + h * k3v;
    const Vec3 k4v = accel(r + h * k3r, a.m_f);
    a.position = r + (h / 6.0) * (k1r + 2.0 * k2r + 2.0 * k3r + k4r);
    a.velocity = v + (h / 6.0) * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
  }

  std::span<const PotentialField> fields_;
  double inv_mass_;
  double max_dt_;
};

double omega_max(std::span<const PotentialField> fields, HalfInt m, double mass) {
  double w = 0.0;
  for (const auto& f : fields) w = std::max(w, optics::max_angular_frequency(f, m, mass));
  return w;
}

void check_step(std::span<const PotentialField> fields, HalfInt m, double mass, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("time step must be positive");
  const double w = omega_max(fields, m, mass);
  if (w > 0.0 && dt > (1.0 + 1e-12) / (100.0 * w)) {
    throw std::invalid_argument("time step exceeds 1/(100 omega_max) for the fields present");
  }
}

Vec3 isotropic_direction(Engine& rng) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::uniform_real_distribution<double> phi(0.0, constants::two_pi);
  const double c = u(rng);
  const double s = std::sqrt(std::max(0.0, 1.0 - c * c));
  const double p = phi(rng);
  return {s * std::cos(p), s * std::sin(p), c};
}

Vec3 emission_direction(EmissionPattern pattern, const Vec3& dipole_axis, Engine& rng) {
  if (pattern == EmissionPattern::Isotropic) return isotropic_direction(rng);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Vec3 d = dipole_axis.normalized();
  while (true) {
    const Vec3 n = isotropic_direction(rng);
    const double c = n.dot(d);
    if (u(rng) <= 1.0 - c * c) return n;
  }
}

}  // namespace

std::vector<AtomSample> sample_atoms(const ThermalSource& source, std::size_t n, std::uint64_t seed) {
  if (n < 1) throw std::invalid_argument("sample_atoms: n must be >= 1");
  if (source.mode == SamplingMode::ClassicalBoltzmann && !(source.temperature > 0.0)) {
    throw std::invalid_argument("sample_atoms: classical sampling needs T > 0 (use ground-state-wigner for T = 0)");
  }
  source.trap.beam.validate();
  const auto freq = optics::trap_frequencies(source.trap, source.mass);
  const Vec3 s_hat = source.trap.beam.axis.normalized();
  const Vec3 u_hat = source.trap.beam.u_axis.normalized();
  const Vec3 v_hat = s_hat.cross(u_hat);
  const std::array<Vec3, 3> axes{u_hat, v_hat, s_hat};
  const std::array<double, 3> omega{freq.u, freq.v, freq.axial};

  std::array<double, 3> sx{}, sv{};
  for (int k = 0; k < 3; ++k) {
    if (!(omega[k] > 0.0)) throw std::invalid_argument("sample_atoms: trap has no confinement along one axis");
    if (source.mode == SamplingMode::ClassicalBoltzmann) {
      sv[k] = std::sqrt(constants::boltzmann * source.temperature / source.mass);
      sx[k] = sv[k] / omega[k];
    } else {
      sx[k] = std::sqrt(constants::hbar / (2.0 * source.mass * omega[k]));
      sv[k] = std::sqrt(constants::hbar * omega[k] / (2.0 * source.mass));
    }
  }

  const optics::PotentialField trap_field = source.trap;
  std::vector<AtomSample> atoms(n);
  for (std::size_t i = 0; i < n; ++i) {
    Engine rng = make_engine(seed, i);
    std::normal_distribution<double> g(0.0, 1.0);
    for (int attempt = 0;; ++attempt) {
      AtomSample a;
      a.position = source.trap.beam.center;
      for (int k = 0; k < 3; ++k) a.position += axes[k] * (sx[k] * g(rng));
      for (int k = 0; k < 3; ++k) a.velocity += axes[k] * (sv[k] * g(rng));
      if (!source.crop_unbound || total_energy(a, std::span(&trap_field, 1), source.mass) < 0.0) {
        atoms[i] = a;
        break;
      }
      if (attempt > 10000) throw std::runtime_error("sample_atoms: temperature too high for the trap depth");
    }
  }
  return atoms;
}

void assign_spins(std::span<AtomSample> atoms, std::span<const double> weights, std::uint64_t seed, HalfInt F) {
  if (static_cast<int>(weights.size()) != F.twice + 1) throw std::invalid_argument("assign_spins: need 2F+1 weights");
  std::discrete_distribution<int> pick(weights.begin(), weights.end());
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    Engine rng = make_engine(seed, i, 1);
    atoms[i].m_f = HalfInt(F.twice - 2 * pick(rng));
  }
}

double total_energy(const AtomSample& atom, std::span<const PotentialField> fields, double mass) {
  double e = 0.5 * mass * atom.velocity.squaredNorm();
  for (const auto& f : fields) e += evaluate(f, atom.position, atom.m_f).energy;
  return e;
}

AtomSample integrate_trajectory(const AtomSample& atom, std::span<const PotentialField> fields, double t, double dt,
                                double mass) {
  check_step(fields, atom.m_f, mass, dt);
  if (t < 0.0) throw std::invalid_argument("integrate_trajectory: negative duration");
  AtomSample out = atom;
  Propagator(fields, mass, dt).advance(out, t);
  return out;
}

AtomSample osg_sequence_one(const AtomSample& atom, const OsgSequenceConfig& cfg, std::size_t index) {
  AtomSample a = atom;
  const std::array<PotentialField, 2> pulse_fields{cfg.osg, cfg.light_sheet};
  const std::array<PotentialField, 1> expansion_fields{cfg.light_sheet};
  if (cfg.pulse_time > 0.0) {
    const Propagator prop(pulse_fields, cfg.mass, cfg.dt_pulse);
    if (cfg.pulse_scattering_rate > 0.0) {
      Engine rng = make_engine(cfg.seed, index, 7);
      std::exponential_distribution<double> wait(cfg.pulse_scattering_rate);
      const double vr = constants::planck / (cfg.mass * cfg.pulse_wavelength);
      const Vec3 beam_dir = cfg.osg.beam.axis.normalized();
      double t = 0.0;
      while (true) {
        const double next = t + wait(rng);
        if (next >= cfg.pulse_time) break;
        prop.advance(a, next - t);
        a.velocity += recoil_kick(beam_dir, vr, EmissionPattern::Isotropic, Vec3::UnitZ(), rng);
        t = next;
      }
      prop.advance(a, cfg.pulse_time - t);
    } else {
      prop.advance(a, cfg.pulse_time);
    }
  }
  Propagator(expansion_fields, cfg.mass, cfg.dt_expansion).advance(a, cfg.expansion_time);
  return a;
}

namespace {
void check_osg_config(const OsgSequenceConfig& cfg) {
  cfg.osg.beam.validate();
  cfg.light_sheet.beam.validate();
  if (cfg.pulse_time < 0.0 || cfg.expansion_time < 0.0) throw std::invalid_argument("osg_sequence: negative time");
  const std::array<PotentialField, 2> pulse_fields{cfg.osg, cfg.light_sheet};
  const std::array<PotentialField, 1> expansion_fields{cfg.light_sheet};
  for (int tw = -cfg.osg.pol.F.twice; tw <= cfg.osg.pol.F.twice; tw += 2) {
    check_step(pulse_fields, HalfInt(tw), cfg.mass, cfg.dt_pulse);
  }
  check_step(expansion_fields, cfg.osg.pol.F, cfg.mass, cfg.dt_expansion);
}
}  // namespace

std::vector<AtomSample> osg_sequence(std::span<const AtomSample> atoms, const OsgSequenceConfig& cfg) {
  check_osg_config(cfg);
  std::vector<AtomSample> out(atoms.size());
  const auto n = static_cast<long>(atoms.size());
#pragma omp parallel for schedule(dynamic, 16)
  for (long i = 0; i < n; ++i) out[i] = osg_sequence_one(atoms[i], cfg, static_cast<std::size_t>(i));
  return out;
}

std::vector<AtomSample> osg_sequence_serial(std::span<const AtomSample> atoms, const OsgSequenceConfig& cfg) {
  check_osg_config(cfg);
  std::vector<AtomSample> out;
  out.reserve(atoms.size());
  for (std::size_t i = 0; i < atoms.size(); ++i) out.push_back(osg_sequence_one(atoms[i], cfg, i));
  return out;
}

Vec3 emission_geometry_factor(EmissionPattern pattern, const Vec3& dipole_axis) {
  if (pattern == EmissionPattern::Isotropic) return Vec3::Constant(1.0 / 3.0);
  const Vec3 d = dipole_axis.normalized();
  return Vec3::Constant(0.4) - 0.2 * d.cwiseProduct(d);
}

double collection_efficiency(double numerical_aperture, double transmission, double quantum_efficiency) {
  if (!(numerical_aperture > 0.0 && numerical_aperture < 1.0)) throw std::invalid_argument("NA must lie in (0, 1)");
  const double solid_angle_fraction = 0.5 * (1.0 - std::cos(std::asin(numerical_aperture)));
  return solid_angle_fraction * transmission * quantum_efficiency;
}

Vec3 recoil_kick(const Vec3& beam_dir, double v_recoil, EmissionPattern pattern, const Vec3& dipole_axis,
                 Engine& rng) {
  return v_recoil * (beam_dir - emission_direction(pattern, dipole_axis, rng));
}

FluorescenceTrace fluorescence_walk(const AtomSample& atom, const ImagingParams& imaging, std::uint64_t seed) {
  if (!(imaging.duration > 0.0)) throw std::invalid_argument("fluorescence_walk: imaging duration must be positive");
  if (!(imaging.alternation_period > 0.0)) throw std::invalid_argument("fluorescence_walk: alternation period must be positive");
  check_step(imaging.fields, atom.m_f, imaging.mass, imaging.max_dt);

  Engine rng(splitmix64(seed));
  std::exponential_distribution<double> wait(imaging.scattering_rate());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const Propagator prop(imaging.fields, imaging.mass, imaging.max_dt);
  const double vr = imaging.recoil_velocity();
  const Vec3 beam = imaging.beam_axis.normalized();

  FluorescenceTrace trace;
  trace.final_state = atom;
  AtomSample& a = trace.final_state;
  trace.events.reserve(static_cast<std::size_t>(imaging.scattering_rate() * imaging.duration * 1.1) + 16);
  double t = 0.0;
  while (true) {
    const double next = t + wait(rng);
    if (next >= imaging.duration) {
      prop.advance(a, imaging.duration - t);
      break;
    }
    prop.advance(a, next - t);
    t = next;
    if (u(rng) < imaging.dark_branching) {
      a.alive = false;
      trace.survived = false;
      prop.advance(a, imaging.duration - t);
      break;
    }
    const bool forward = static_cast<long>(std::floor(t / imaging.alternation_period)) % 2 == 0;
    a.velocity += recoil_kick(forward ? beam : Vec3(-beam), vr, imaging.pattern, imaging.dipole_axis, rng);
    ++trace.scattered;
    trace.events.push_back({t, a.position.head<2>(), u(rng) < imaging.collection_efficiency, a.position.z()});
  }
  return trace;
}

std::vector<RecapturePoint> release_recapture(const ThermalSource& source, std::span<const double> hold_times,
                                              std::size_t n, std::uint64_t seed, const RecaptureOptions& opt) {
  ThermalSource cropped = source;
  cropped.crop_unbound = true;
  const auto atoms = sample_atoms(cropped, n, seed);
  const PotentialField trap = source.trap;
  const Vec3 g = opt.gravity ? Vec3(constants::standard_gravity * opt.gravity_direction.normalized()) : Vec3::Zero();

  std::vector<RecapturePoint> out;
  out.reserve(hold_times.size());
  for (double t : hold_times) {
    if (!(t >= 0.0)) throw std::invalid_argument("release_recapture: hold times must be >= 0");
    std::size_t kept = 0;
    for (const auto& a0 : atoms) {
      AtomSample a = a0;
      a.position += a0.velocity * t + 0.5 * g * t * t;
      a.velocity += g * t;
      if (total_energy(a, std::span(&trap, 1), source.mass) < 0.0) ++kept;
    }
    const double p = static_cast<double>(kept) / static_cast<double>(n);
    out.push_back({t, p, std::sqrt(p * (1.0 - p) / static_cast<double>(n))});
  }
  return out;
}

TemperatureFit fit_recapture_temperature(std::span<const RecapturePoint> data, const ThermalSource& model,
                                         std::size_t n, std::uint64_t seed, double t_lo, double t_hi,
                                         const RecaptureOptions& opt) {
  if (data.empty()) throw std::invalid_argument("fit_recapture_temperature: no data");
  if (!(t_lo > 0.0 && t_hi > t_lo)) throw std::invalid_argument("fit_recapture_temperature: bad temperature bracket");
  std::vector<double> times;
  for (const auto& p : data) times.push_back(p.time);

  TemperatureFit fit;
  double best_x = 0.0;
  double best_chi2 = std::numeric_limits<double>::infinity();
  auto chi2 = [&](double log_t) {
    ThermalSource s = model;
    s.temperature = std::exp(log_t);
    const auto curve = release_recapture(s, times, n, seed, opt);
    double acc = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double d = data[i].probability - curve[i].probability;
      acc += d * d;
    }
    ++fit.evaluations;
    if (acc < best_chi2) {
      best_chi2 = acc;
      best_x = log_t;
    }
    return acc;
  };

  // coarse log grid, then golden section inside the bracket around the best node
  constexpr int grid = 25;
  const double a0 = std::log(t_lo), b0 = std::log(t_hi);
  int best = 0;
  double best_val = 0.0;
  std::vector<double> xs(grid);
  for (int i = 0; i < grid; ++i) {
    xs[i] = a0 + (b0 - a0) * i / (grid - 1);
    const double v = chi2(xs[i]);
    if (i == 0 || v < best_val) {
      best_val = v;
      best = i;
    }
  }
  double a = xs[std::max(0, best - 1)];
  double b = xs[std::min(grid - 1, best + 1)];
  const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
  double c = b - phi * (b - a), d = a + phi * (b - a);
  double fc = chi2(c), fd = chi2(d);
  for (int it = 0; it < 30; ++it) {
    if (fc <= fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - phi * (b - a);
      fc = chi2(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + phi * (b - a);
      fd = chi2(d);
    }
  }
  fit.chi2 = best_chi2;
  fit.temperature = std::exp(best_x);
  return fit;
}

namespace {
void put(std::ostream& os, const char* fmt, double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, fmt, v);
  os << buf;
}
}  // namespace

void write_atoms_csv(std::ostream& os, std::span<const AtomSample> atoms) {
  os << "# schema_version=1\n";
  os << "index,m_f,alive,x_m,y_m,z_m,vx_mps,vy_mps,vz_mps\n";
  for (std::size_t i = 0; i < atoms.size(); ++i) {
    const auto& a = atoms[i];
    os << i << ',' << a.m_f.str() << ',' << (a.alive ? 1 : 0);
    for (int k = 0; k < 3; ++k) put(os, ",%.10e", a.position[k]);
    for (int k = 0; k < 3; ++k) put(os, ",%.10e", a.velocity[k]);
    os << '\n';
  }
}

void write_events_csv(std::ostream& os, std::span<const EmissionEvent> events) {
  os << "# schema_version=1\n";
  os << "time_s,x_m,y_m,z_m,collected\n";
  for (const auto& e : events) {
    put(os, "%.10e", e.time);
    put(os, ",%.10e", e.position.x());
    put(os, ",%.10e", e.position.y());
    put(os, ",%.10e", e.z);
    os << ',' << (e.collected ? 1 : 0) << '\n';
  }
}

void write_recapture_csv(std::ostream& os, std::span<const RecapturePoint> points) {
  os << "# schema_version=1\n";
  os << "t_s,recapture_probability,stderr\n";
  for (const auto& p : points) {
    put(os, "%.9e", p.time);
    put(os, ",%.9e", p.probability);
    put(os, ",%.9e", p.stderr_binomial);
    os << '\n';
  }
}

}  // namespace srspin::mc
