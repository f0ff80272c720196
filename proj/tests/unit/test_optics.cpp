#include <doctest.h>

#include "srspin/optics.hpp"
#include "srspin/shots.hpp"

using namespace srspin;
using namespace srspin::optics;

namespace {
GaussianBeam elliptic() {
  GaussianBeam b;
  b.power = 0.5;
  b.waist_u = 3e-6;
  b.waist_v = 5e-6;
  b.axis = Vec3(1, 1, 0).normalized();
  b.u_axis = Vec3::UnitZ();
  b.center = Vec3(1e-6, -2e-6, 0.5e-6);
  b.wavelength = 800e-9;
  return b;
}
}  // namespace

TEST_CASE("Gaussian beam profile and analytic gradient") {
  const auto b = elliptic();
  CHECK(b.profile(b.center) == doctest::Approx(1.0));
  // one waist out along u: e^-2
  CHECK(b.profile(b.center + 3e-6 * Vec3::UnitZ()) == doctest::Approx(std::exp(-2.0)));
  // one Rayleigh range (u) along the axis: amplitude 1/sqrt(2 * qv)
  const double zu = b.rayleigh_u(), zv = b.rayleigh_v();
  const double qv = 1 + (zu / zv) * (zu / zv);
  CHECK(b.profile(b.center + zu * b.axis) == doctest::Approx(1.0 / std::sqrt(2.0 * qv)));

  const Vec3 r = b.center + Vec3(1.3e-6, 0.4e-6, -2.1e-6);
  Vec3 grad;
  b.profile(r, grad);
  const double h = 1e-10;
  for (int i = 0; i < 3; ++i) {
    Vec3 e = Vec3::Zero();
    e[i] = h;
    const double fd = (b.profile(r + e) - b.profile(r - e)) / (2 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
  CHECK(b.peak_intensity() == doctest::Approx(2 * 0.5 / (constants::pi * 15e-12)));
}

TEST_CASE("beam validation") {
  auto b = elliptic();
  b.u_axis = b.axis;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
  b = elliptic();
  b.waist_u = 0;
  CHECK_THROWS_AS(b.validate(), std::invalid_argument);
}

TEST_CASE("tensor weights and effective polarizabilities") {
  const HalfInt F = kSr87Spin;
  CHECK(tensor_weight(F, F) == doctest::Approx(1.0));
  double sum = 0.0;
  for (int tm = -9; tm <= 9; tm += 2) sum += tensor_weight(HalfInt(tm), F);
  CHECK(sum == doctest::Approx(0.0).scale(1.0));  // rank-2 part is traceless
  CHECK(tensor_weight(HalfInt(3), F) == tensor_weight(HalfInt(-3), F));
  CHECK_THROWS(tensor_weight(HalfInt(11), F));

  Polarizability p;  // 7.2e3 scalar, 42.5e3 tensor
  // (3 m^2 - F(F+1)) / (F(2F-1)) with F = 9/2: 1, 1/3, -1/6, -1/2, -2/3
  const double expect[] = {7200 + 42500.0, 7200 + 42500.0 / 3, 7200 - 42500.0 / 6, 7200 - 42500.0 / 2,
                           7200 - 42500.0 * 2 / 3};
  for (int k = 0; k < 5; ++k) CHECK(p.effective_au(HalfInt(9 - 2 * k)) == doctest::Approx(expect[k]));
  // |m| = 5/2 is nearly unshifted
  CHECK(std::abs(p.effective_au(HalfInt(5))) < 0.01 * p.effective_au(HalfInt(9)));
}

TEST_CASE("OSG light shift magnitude and sign") {
  const auto a = shots::default_apparatus();
  const auto& osg = a.osg;
  const double I0 = 2 * 2.8e-3 / (constants::pi * 16e-12);
  const double alpha = 49700 * constants::polarizability_au;
  const double U = alpha * I0 / (2 * constants::vacuum_permittivity * constants::speed_of_light);
  CHECK(osg.peak_shift(HalfInt(9)) == doctest::Approx(U).epsilon(1e-9));
  CHECK(U / constants::boltzmann == doctest::Approx(1.245e-3).epsilon(2e-3));
  // positive shift repels: the force on 9/2 points away from the beam axis
  const Vec3 r(0, 0, 0);  // tweezer, 2 um above the beam center along y
  const auto s9 = evaluate(osg, r, HalfInt(9));
  const auto s1 = evaluate(osg, r, HalfInt(1));
  CHECK(s9.force.y() > 0);
  CHECK(s1.force.y() < 0);
  auto flipped = osg;
  flipped.light_shift_sign = -1;
  CHECK(evaluate(flipped, r, HalfInt(9)).force.y() < 0);
}

TEST_CASE("forces are minus the potential gradient") {
  const auto a = shots::default_apparatus();
  const std::vector<PotentialField> fields{a.tweezer, a.light_sheet, a.osg,
                                           HarmonicTrap{Vec3(1e-6, 0, 0), Vec3(1e3, 2e3, 3e3)}};
  const Vec3 r(0.4e-6, -0.7e-6, 0.9e-6);
  for (const auto& f : fields) {
    const auto s = evaluate(f, r, HalfInt(7));
    for (int i = 0; i < 3; ++i) {
      Vec3 e = Vec3::Zero();
      e[i] = 1e-10;
      const double fd = -(evaluate(f, r + e, HalfInt(7)).energy - evaluate(f, r - e, HalfInt(7)).energy) / 2e-10;
      CHECK(s.force[i] == doctest::Approx(fd).epsilon(1e-5).scale(1e-30));
    }
  }
}

TEST_CASE("trap frequencies of a Gaussian trap") {
  const auto tw = shots::default_apparatus().tweezer;
  const auto f = trap_frequencies(tw, constants::sr87::mass);
  const double m = constants::sr87::mass;
  const double w0 = tw.beam.waist_u;
  CHECK(f.u == doctest::Approx(std::sqrt(4 * tw.depth / (m * w0 * w0))));
  const double zr = tw.beam.rayleigh_u();
  CHECK(f.axial == doctest::Approx(std::sqrt(2 * tw.depth / (m * zr * zr))));
  CHECK(max_angular_frequency(PotentialField(tw), HalfInt(9), m) >= f.u * (1 - 1e-12));
  // potential helpers agree with the profile
  CHECK(tweezer_potential(tw.beam, tw.depth, Vec3::Zero()) == doctest::Approx(-tw.depth));
}
