#include <doctest.h>

#include <numeric>
#include <sstream>

#include "srspin/montecarlo.hpp"
#include "srspin/shots.hpp"

using namespace srspin;
using namespace srspin::mc;

namespace {
ThermalSource tweezer_source(double T = 750e-9) {
  ThermalSource s;
  s.trap = shots::default_apparatus().tweezer;
  s.temperature = T;
  return s;
}

OsgSequenceConfig osg_config() {
  const auto a = shots::default_apparatus();
  OsgSequenceConfig c;
  c.osg = a.osg;
  c.light_sheet = a.light_sheet;
  return c;
}

double variance(const std::vector<double>& v) {
  const double m = std::accumulate(v.begin(), v.end(), 0.0) / v.size();
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / (v.size() - 1);
}
}  // namespace

TEST_CASE("thermal sampling reproduces equipartition") {
  const auto src = tweezer_source();
  const auto atoms = sample_atoms(src, 20000, 5);
  const auto f = optics::trap_frequencies(src.trap, src.mass);
  std::vector<double> x, vx, z;
  for (const auto& a : atoms) {
    x.push_back(a.position.x());
    vx.push_back(a.velocity.x());
    z.push_back(a.position.z());
  }
  const double kT_m = constants::boltzmann * src.temperature / src.mass;
  // 20000 samples: relative error of a variance ~ sqrt(2/N) = 1%
  CHECK(variance(vx) == doctest::Approx(kT_m).epsilon(0.04));
  CHECK(variance(x) == doctest::Approx(kT_m / (f.u * f.u)).epsilon(0.04));
  CHECK(variance(z) == doctest::Approx(kT_m / (f.axial * f.axial)).epsilon(0.04));

  // same seed, same atoms; atom i does not depend on n
  const auto again = sample_atoms(src, 10, 5);
  CHECK(again[3].position == atoms[3].position);
}

TEST_CASE("ground-state sampling has zero-point widths") {
  auto src = tweezer_source();
  src.mode = SamplingMode::GroundStateWigner;
  const auto atoms = sample_atoms(src, 20000, 9);
  const auto f = optics::trap_frequencies(src.trap, src.mass);
  std::vector<double> x;
  for (const auto& a : atoms) x.push_back(a.position.x());
  CHECK(variance(x) == doctest::Approx(constants::hbar / (2 * src.mass * f.u)).epsilon(0.04));
}

TEST_CASE("cropping keeps only bound atoms") {
  auto src = tweezer_source(2e-6);
  src.crop_unbound = true;
  const std::array<PotentialField, 1> trap{src.trap};
  for (const auto& a : sample_atoms(src, 2000, 1)) CHECK(total_energy(a, trap, src.mass) < 0.0);
}

TEST_CASE("spin assignment follows the weights") {
  auto atoms = sample_atoms(tweezer_source(), 5000, 2);
  std::vector<double> w(10, 0.0);
  w[0] = 1.0;
  w[9] = 3.0;
  assign_spins(atoms, w, 4);
  const auto n_low = std::count_if(atoms.begin(), atoms.end(), [](const AtomSample& a) { return a.m_f == HalfInt(-9); });
  CHECK(n_low / 5000.0 == doctest::Approx(0.75).epsilon(0.05));
  CHECK_THROWS(assign_spins(atoms, std::vector<double>(3, 1.0), 4));
}

TEST_CASE("trajectories conserve energy and respect the step bound") {
  const auto src = tweezer_source();
  const std::array<PotentialField, 1> trap{src.trap};
  const auto a0 = sample_atoms(src, 1, 3)[0];
  const auto f = optics::trap_frequencies(src.trap, src.mass);
  const double dt = 1.0 / (100.0 * f.u);
  const auto a1 = integrate_trajectory(a0, trap, 200e-6, dt, src.mass);
  CHECK(total_energy(a1, trap, src.mass) ==
        doctest::Approx(total_energy(a0, trap, src.mass)).epsilon(1e-6));
  CHECK_THROWS_AS(integrate_trajectory(a0, trap, 1e-6, 20 * dt, src.mass), std::invalid_argument);
  // free flight
  const auto b = integrate_trajectory(a0, {}, 10e-6, 1e-6, src.mass);
  CHECK((b.position - (a0.position + 10e-6 * a0.velocity)).norm() < 1e-15);
}

TEST_CASE("OSG sequence: region geometry from rest") {
  const auto cfg = osg_config();
  std::vector<AtomSample> atoms(5);
  for (int k = 0; k < 5; ++k) atoms[k].m_f = HalfInt(9 - 2 * k);
  const auto out = osg_sequence(atoms, cfg);
  const double y9 = out[0].position.y(), y5 = out[2].position.y(), y1 = out[4].position.y();
  // ordering top to bottom 9/2, 7/2, 5/2, 3/2, 1/2
  for (int k = 0; k < 4; ++k) CHECK(out[k].position.y() > out[k + 1].position.y());
  CHECK(y9 - y1 == doctest::Approx(25e-6).epsilon(0.2));
  CHECK(std::abs(y5) < 0.05 * std::abs(y9));
  // sign of m does not matter
  AtomSample neg;
  neg.m_f = HalfInt(-9);
  CHECK(osg_sequence_one(neg, cfg, 0).position.y() == doctest::Approx(y9));
}

TEST_CASE("OSG sequence: parallel equals serial, lensing makes clouds anisotropic") {
  auto src = tweezer_source();
  auto atoms = sample_atoms(src, 400, 8);
  for (auto& a : atoms) a.m_f = HalfInt(9);
  const auto cfg = osg_config();
  const auto par = osg_sequence(atoms, cfg);
  const auto ser = osg_sequence_serial(atoms, cfg);
  for (std::size_t i = 0; i < atoms.size(); ++i) CHECK(par[i].position == ser[i].position);
  std::vector<double> x, y;
  for (const auto& a : par) {
    x.push_back(a.position.x());
    y.push_back(a.position.y());
  }
  const double ratio = std::sqrt(variance(y) / variance(x));
  CHECK((ratio > 1.2 || ratio < 1 / 1.2));
}

TEST_CASE("pulse scattering is optional and seeded") {
  auto cfg = osg_config();
  AtomSample a;
  a.m_f = HalfInt(5);
  const auto quiet = osg_sequence_one(a, cfg, 0);
  cfg.pulse_scattering_rate = 2e6;
  cfg.seed = 3;
  const auto kicked = osg_sequence_one(a, cfg, 0);
  CHECK(kicked.position != quiet.position);
  CHECK(osg_sequence_one(a, cfg, 0).position == kicked.position);
}

TEST_CASE("emission geometry and collection") {
  CHECK(emission_geometry_factor(EmissionPattern::Isotropic, Vec3::UnitY()).sum() == doctest::Approx(1.0));
  const Vec3 d = emission_geometry_factor(EmissionPattern::Dipole, Vec3::UnitY());
  CHECK(d.sum() == doctest::Approx(1.0));
  CHECK(d.y() == doctest::Approx(0.2));  // sin^2 pattern: <n_d^2> = 1/5
  // NA 0.55: solid angle fraction (1 - cos asin 0.55) / 2
  CHECK(collection_efficiency(0.55, 1.0, 1.0) == doctest::Approx(0.5 * (1 - std::sqrt(1 - 0.55 * 0.55))));
  CHECK_THROWS(collection_efficiency(1.2, 1, 1));

  // empirical second moments of the emission directions
  Engine rng(11);
  Vec3 acc = Vec3::Zero();
  double worst = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    const Vec3 k = recoil_kick(Vec3::Zero(), 1.0, EmissionPattern::Dipole, Vec3::UnitY(), rng);
    worst = std::max(worst, std::abs(k.norm() - 1.0));
    acc += k.cwiseProduct(k);
  }
  acc /= n;
  CHECK(worst < 1e-12);
  CHECK(acc.y() == doctest::Approx(0.2).epsilon(0.02));
  CHECK(acc.x() == doctest::Approx(0.4).epsilon(0.02));
}

TEST_CASE("fluorescence walk: photon budget, dark-state loss") {
  ImagingParams im;
  im.dark_branching = 0.0;
  AtomSample a;
  double total = 0.0;
  const int n = 300;
  for (int i = 0; i < n; ++i) total += fluorescence_walk(a, im, i).scattered;
  const double expected = im.scattering_rate() * im.duration;
  CHECK(total / n == doctest::Approx(expected).epsilon(0.02));

  im.dark_branching = 1e-3;
  int survived = 0;
  for (int i = 0; i < n; ++i) survived += fluorescence_walk(a, im, 1000 + i).survived;
  // survival = exp(-b R t) for Poisson scattering with thinning
  const double p = std::exp(-im.dark_branching * expected);
  CHECK(survived / double(n) == doctest::Approx(p).epsilon(4 * std::sqrt(p * (1 - p) / n) / p));

  const auto tr = fluorescence_walk(a, im, 7);
  CHECK(tr.events.size() == tr.scattered);
  for (std::size_t i = 1; i < tr.events.size(); ++i) CHECK(tr.events[i].time > tr.events[i - 1].time);
}

TEST_CASE("release-recapture: starts at one and decreases") {
  const auto src = tweezer_source();
  std::vector<double> t;
  for (int i = 0; i <= 10; ++i) t.push_back(i * 10e-6);
  const auto pts = release_recapture(src, t, 4000, 2);
  CHECK(pts[0].probability == 1.0);
  for (std::size_t i = 1; i < pts.size(); ++i) CHECK(pts[i].probability <= pts[i - 1].probability);
  // hotter atoms escape faster
  const auto hot = release_recapture(tweezer_source(1.5e-6), t, 4000, 2);
  CHECK(hot.back().probability < pts.back().probability);
  std::ostringstream os;
  write_recapture_csv(os, pts);
  CHECK(os.str().find("t_s,recapture_probability,stderr") != std::string::npos);
}
