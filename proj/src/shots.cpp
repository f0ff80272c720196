#include "srspin/shots.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <ostream>
#include <random>

#include "srspin/constants.hpp"
#include "srspin/rng.hpp"

namespace srspin::shots {

namespace {

constexpr std::uint64_t kFillStream = 0;
constexpr std::uint64_t kAtomStream = 1;
constexpr std::uint64_t kSpinStream = 2;
constexpr std::uint64_t kWalkStream = 3;
constexpr std::uint64_t kFrameStream = 4;
constexpr std::uint64_t kSequenceStream = 5;

bool draw_fill(double p, std::uint64_t seed, std::size_t index) {
  Engine rng = make_engine(seed, index, kFillStream);
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p;
}

mc::AtomSample draw_atom(const mc::ThermalSource& src, std::uint64_t seed, std::size_t index) {
  return mc::sample_atoms(src, 1, stream_seed(seed, index, kAtomStream)).front();
}

void finish_shot(Shot& shot, const mc::AtomSample& at_imaging, const mc::ImagingParams& imaging,
                 const camera::CameraParams& cam, std::uint64_t seed, std::size_t index) {
  shot.start = at_imaging.position.head<2>();
  std::vector<mc::EmissionEvent> events;
  if (shot.atom) {
    auto trace = mc::fluorescence_walk(at_imaging, imaging, stream_seed(seed, index, kWalkStream));
    shot.survived = trace.survived;
    shot.scattered = trace.scattered;
    shot.emission_center = shot.start;
    if (!trace.events.empty()) {
      Vec2 c = Vec2::Zero();
      for (const auto& e : trace.events) c += e.position;
      shot.emission_center = c / static_cast<double>(trace.events.size());
    }
    for (const auto& e : trace.events) {
      if (!e.collected) continue;
      ++shot.collected;
      shot.spot.add(e.position - shot.start, std::pow(cam.psf_at(e.z), 2));
    }
    events = std::move(trace.events);
  }
  shot.frame = camera::render_frame(events, cam, stream_seed(seed, index, kFrameStream));
  if (shot.atom) shot.frame.truth.push_back({true, shot.start, shot.m_f});
}

}  // namespace

Apparatus default_apparatus() {
  Apparatus a;
  auto& tw = a.tweezer.beam;
  tw.power = 1.0;
  tw.waist_u = tw.waist_v = 1.35e-6;
  tw.axis = Vec3::UnitZ();
  tw.u_axis = Vec3::UnitX();
  tw.wavelength = 813e-9;
  a.tweezer.depth = constants::boltzmann * 3.6e-6;

  auto& ls = a.light_sheet.beam;
  ls.power = 1.0;
  ls.axis = Vec3::UnitX();
  ls.u_axis = Vec3::UnitZ();
  ls.waist_u = 20e-6;
  ls.waist_v = 200e-6;
  ls.wavelength = 1040e-9;
  a.light_sheet.depth = constants::boltzmann * 6e-6;

  auto& ob = a.osg.beam;
  ob.power = 2.8e-3;
  ob.waist_u = ob.waist_v = 4.0e-6;
  ob.axis = Vec3::UnitZ();
  ob.u_axis = Vec3::UnitX();
  ob.wavelength = 689e-9;
  ob.center = Vec3(0.0, -2.0e-6, 0.0);
  ob.divergence = false;
  return a;
}

FreeSpaceConfig default_free_space(const Apparatus& app) {
  FreeSpaceConfig c;
  c.source.trap = app.tweezer;
  c.light_sheet = app.light_sheet;
  c.imaging.fields = {app.light_sheet};
  return c;
}

OsgShotConfig default_osg_shot(const Apparatus& app) {
  OsgShotConfig c;
  c.source.trap = app.tweezer;
  c.sequence.osg = app.osg;
  c.sequence.light_sheet = app.light_sheet;
  c.imaging.fields = {app.light_sheet};
  c.camera.rows = 128;
  c.camera.cols = 96;
  c.camera.center = Vec2(0.0, 5e-6);
  return c;
}

void SpotMoments::add(const Vec2& d, double psf_variance) {
  n += 1.0;
  sum += d;
  sum_sq += d * d.transpose();
  psf_var += psf_variance;
}

void SpotMoments::merge(const SpotMoments& o) {
  n += o.n;
  sum += o.sum;
  sum_sq += o.sum_sq;
  psf_var += o.psf_var;
}

Eigen::Matrix2d SpotMoments::covariance() const {
  if (n < 2.0) return Eigen::Matrix2d::Zero();
  const Vec2 mean = sum / n;
  return sum_sq / n - mean * mean.transpose() + Eigen::Matrix2d::Identity() * (psf_var / n);
}

Shot simulate_free_space_shot(const FreeSpaceConfig& cfg, std::uint64_t seed, std::size_t index) {
  Shot shot;
  shot.atom = draw_fill(cfg.fill_probability, seed, index);
  mc::AtomSample a;
  if (shot.atom) {
    a = draw_atom(cfg.source, seed, index);
    const std::array<optics::PotentialField, 1> fields{cfg.light_sheet};
    a = mc::integrate_trajectory(a, fields, cfg.time_of_flight, cfg.imaging.max_dt, cfg.source.mass);
  }
  finish_shot(shot, a, cfg.imaging, cfg.camera, seed, index);
  return shot;
}

Shot simulate_osg_shot(const OsgShotConfig& cfg, std::uint64_t seed, std::size_t index) {
  Shot shot;
  shot.atom = draw_fill(cfg.fill_probability, seed, index);
  mc::AtomSample a;
  if (shot.atom) {
    a = draw_atom(cfg.source, seed, index);
    Engine rng = make_engine(seed, index, kSpinStream);
    std::discrete_distribution<int> pick(cfg.spin_weights.begin(), cfg.spin_weights.end());
    a.m_f = HalfInt(kSr87Spin.twice - 2 * pick(rng));
    shot.m_f = a.m_f;
    mc::OsgSequenceConfig seq = cfg.sequence;
    seq.seed = stream_seed(seed, index, kSequenceStream);
    a = mc::osg_sequence_one(a, seq, 0);
  }
  finish_shot(shot, a, cfg.imaging, cfg.camera, seed, index);
  return shot;
}

std::vector<ShotSummary> run_shots(std::size_t n, const std::function<Shot(std::size_t)>& simulate,
                                   const pipeline::AnalysisConfig& analysis, SpotMoments* spot,
                                   const std::function<void(std::size_t, const Shot&)>& keep) {
  std::vector<ShotSummary> out(n);
  std::vector<SpotMoments> spots(n);
  const auto count = static_cast<long>(n);
  // saving frames needs the shots in order; render in blocks so memory stays bounded
  const long block = keep ? 256 : count;
  for (long b0 = 0; b0 < count; b0 += block) {
    const long b1 = std::min(count, b0 + block);
    std::vector<Shot> kept(keep ? static_cast<std::size_t>(b1 - b0) : 0);
#pragma omp parallel for schedule(dynamic, 4)
    for (long i = b0; i < b1; ++i) {
      Shot s = simulate(static_cast<std::size_t>(i));
      auto& r = out[static_cast<std::size_t>(i)];
      r.atom = s.atom;
      r.survived = s.survived;
      r.m_f = s.m_f;
      r.start = s.start;
      r.emission_center = s.emission_center;
      r.scattered = s.scattered;
      r.collected = s.collected;
      r.loc = pipeline::analyze_frame(s.frame, analysis);
      spots[static_cast<std::size_t>(i)] = s.spot;
      if (keep) kept[static_cast<std::size_t>(i - b0)] = std::move(s);
    }
    if (keep) {
      for (long i = b0; i < b1; ++i) keep(static_cast<std::size_t>(i), kept[static_cast<std::size_t>(i - b0)]);
    }
  }
  if (spot) {
    for (const auto& s : spots) spot->merge(s);  // fixed order keeps the sum reproducible
  }
  return out;
}

std::vector<ScanRow> imaging_time_scan(std::span<const double> times, std::size_t shots_per_time,
                                       const FreeSpaceConfig& cfg, const pipeline::AnalysisConfig& analysis,
                                       std::uint64_t seed) {
  std::vector<ScanRow> rows;
  for (std::size_t ti = 0; ti < times.size(); ++ti) {
    FreeSpaceConfig c = cfg;
    c.imaging.duration = times[ti];
    const std::uint64_t s = stream_seed(seed, ti);
    SpotMoments spot;
    const auto shots = run_shots(
        shots_per_time, [&](std::size_t i) { return simulate_free_space_shot(c, s, i); }, analysis, &spot);

    ScanRow row;
    row.time = times[ti];
    row.shots = shots.size();
    std::vector<double> peaks;
    peaks.reserve(shots.size());
    double scattered = 0.0, collected = 0.0, survived = 0.0;
    for (const auto& sh : shots) {
      peaks.push_back(sh.loc.peak_value);
      if (!sh.atom) continue;
      ++row.atom_shots;
      scattered += static_cast<double>(sh.scattered);
      collected += static_cast<double>(sh.collected);
      survived += sh.survived ? 1.0 : 0.0;
    }
    const double na = std::max<double>(1.0, static_cast<double>(row.atom_shots));
    row.mean_scattered = scattered / na;
    row.mean_collected = collected / na;
    row.survival = survived / na;

    pipeline::AnalysisConfig a = analysis;
    a.seed = stream_seed(analysis.seed, ti);
    try {
      row.fit = pipeline::fit_detection_histogram(peaks, a);
    } catch (const pipeline::FitError& e) {
      row.fit_error = e.what();
      row.fit.threshold = row.fit.fidelity = std::numeric_limits<double>::quiet_NaN();
    }
    row.infidelity = 1.0 - row.fit.fidelity;

    std::size_t correct = 0, located = 0;
    double sq = 0.0, drift = 0.0;
    const Vec2 beam = c.imaging.beam_axis.head<2>().normalized();
    for (const auto& sh : shots) {
      const bool says_atom = sh.loc.peak_value > row.fit.threshold;
      if (says_atom == sh.atom) ++correct;
      if (says_atom && sh.atom) {
        sq += (sh.loc.object - sh.emission_center).squaredNorm();
        drift += (sh.emission_center - sh.start).dot(beam);
        ++located;
      }
    }
    row.drift = located ? drift / static_cast<double>(located) : 0.0;
    row.truth_accuracy = row.fit_error.empty() ? static_cast<double>(correct) / static_cast<double>(shots.size())
                                               : std::numeric_limits<double>::quiet_NaN();
    row.localization_rms = located ? std::sqrt(sq / static_cast<double>(located)) : 0.0;

    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> es(spot.covariance());
    row.sigma_minor = std::sqrt(std::max(0.0, es.eigenvalues()[0]));
    row.sigma_major = std::sqrt(std::max(0.0, es.eigenvalues()[1]));
    rows.push_back(std::move(row));
  }
  return rows;
}

void write_scan_csv(std::ostream& os, std::span<const ScanRow> rows) {
  os << "# schema_version=1\n"
        "t_s,shots,atom_shots,mean_scattered,mean_collected,survival,threshold,fidelity,infidelity,"
        "truth_accuracy,sigma_major_m,sigma_minor_m,localization_rms_m,drift_m,fit_ok\n";
  char buf[512];
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof buf, "%.9e,%zu,%zu,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%.9e,%d\n", r.time,
                  r.shots, r.atom_shots, r.mean_scattered, r.mean_collected, r.survival, r.fit.threshold,
                  r.fit.fidelity, r.infidelity, r.truth_accuracy, r.sigma_major, r.sigma_minor, r.localization_rms, r.drift,
                  r.fit_error.empty() ? 1 : 0);
    os << buf;
  }
}

}  // namespace srspin::shots
