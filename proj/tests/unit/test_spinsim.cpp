#include <doctest.h>

#include <random>
#include <sstream>

#include "oracles.hpp"
#include "srspin/spinsim.hpp"

using namespace srspin;
using namespace srspin::spin;

namespace {
const SpinOperators& ops9() {
  static const SpinOperators o = make_spin_operators(kSr87Spin);
  return o;
}
}  // namespace

TEST_CASE("spin operators obey the angular momentum algebra") {
  for (double F : {0.5, 1.0, 4.5}) {
    const auto o = make_spin_operators(F);
    const std::complex<double> i(0, 1);
    CHECK((o.fx * o.fy - o.fy * o.fx - i * o.fz).norm() < 1e-12);
    CHECK((o.fy * o.fz - o.fz * o.fy - i * o.fx).norm() < 1e-12);
    const CMatrix f2 = o.fx * o.fx + o.fy * o.fy + o.fz * o.fz;
    CHECK((f2 - F * (F + 1) * CMatrix::Identity(o.dim(), o.dim())).norm() < 1e-11);
    CHECK(o.fz(0, 0).real() == doctest::Approx(F));
  }
  CHECK_THROWS_AS(make_spin_operators(1.3), std::invalid_argument);
}

TEST_CASE("half-integer labels") {
  CHECK(HalfInt::from_double(-3.5).twice == -7);
  CHECK(HalfInt(9).str() == "9/2");
  CHECK(HalfInt(-4).str() == "-2");
  CHECK_THROWS(HalfInt::from_double(0.3));
  CHECK(ops9().index_of(HalfInt(-9)) == 9);
  CHECK(ops9().m_at(1) == HalfInt(7));
}

TEST_CASE("constant-field evolution matches the Wigner d-matrix") {
  const auto& o = ops9();
  std::mt19937_64 rng(42);
  std::normal_distribution<double> g(0.0, 1.0);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  EvolveOptions opt;
  opt.dt = 2e-6;
  for (int trial = 0; trial < 20; ++trial) {
    Vec3 axis(g(rng), g(rng), g(rng));
    axis.normalize();
    const double b = 0.05 + 0.5 * u(rng);  // gauss
    const double duration = 1e-3 + 4e-3 * u(rng);
    const int tm = 9 - 2 * static_cast<int>(u(rng) * 10);

    const auto s = FieldSchedule::constant(b * axis);
    const auto psi0 = basis_state(o, HalfInt(tm), Vec3::UnitZ());
    const auto psi = evolve(psi0, s, o, duration, opt);
    const auto pop = measure_populations(o, psi, Vec3::UnitZ());

    const double angle = constants::two_pi * opt.g_hz_per_gauss * b * duration;
    const Eigen::Matrix3d R = Eigen::AngleAxisd(angle, axis).toRotationMatrix();
    const double beta = std::acos(std::clamp((R * Vec3::UnitZ()).z(), -1.0, 1.0));
    const auto ref = oracle::rotated_populations(9, tm, beta);
    for (int k = 0; k < 10; ++k) CHECK(std::abs(pop.p_m[k] - ref[k]) < 1e-8);
  }
}

TEST_CASE("a pi rotation about x flips the stretched state") {
  const auto& o = ops9();
  const double b = 0.1;
  const double t = 0.5 / (constants::sr87::larmor_coefficient_hz_per_gauss * b);
  const auto psi = evolve(basis_state(o, HalfInt(9), Vec3::UnitZ()), FieldSchedule::constant({b, 0, 0}), o, t, {});
  const auto pop = measure_populations(o, psi, Vec3::UnitZ());
  CHECK(pop.p_m[9] == doctest::Approx(1.0).epsilon(1e-8));
}

TEST_CASE("basis changes are unitary and consistent") {
  const auto& o = ops9();
  const Vec3 n = Vec3(1, 2, -0.5).normalized();
  const auto a = basis_state(o, HalfInt(5), n);
  CHECK(a.norm() == doctest::Approx(1.0));
  const auto z = to_basis(o, a, Vec3::UnitZ());
  const auto back = to_basis(o, z, n);
  CHECK(std::norm(back.amps[o.index_of(HalfInt(5))]) == doctest::Approx(1.0).epsilon(1e-12));
  const CMatrix U = rotation_operator(o, n, 0.7);
  CHECK((U.adjoint() * U - CMatrix::Identity(10, 10)).norm() < 1e-12);
}

TEST_CASE("quench propagation: norm, step convergence, ordering") {
  FieldSchedule s;  // defaults: 80 mG guide, 1.158 G quench, 0.3 ms, 5 degrees
  const auto& o = ops9();
  const auto psi0 = to_basis(o, basis_state(o, HalfInt(9), s.guide_axis()), Vec3::UnitZ());

  EvolveOptions fine, coarse;
  fine.dt = 0.5e-6;
  coarse.dt = 1e-6;
  const auto a = evolve(psi0, s, o, 2e-3, coarse);
  const auto b = evolve(psi0, s, o, 2e-3, fine);
  CHECK(a.norm() == doctest::Approx(1.0).epsilon(1e-12));
  const auto pa = measure_populations(o, a, s.detection_axis()).p_m;
  const auto pb = measure_populations(o, b, s.detection_axis()).p_m;
  for (int k = 0; k < 10; ++k) CHECK(std::abs(pa[k] - pb[k]) < 1e-6);

  // out-of-order times give the same records as sorted ones
  const std::vector<double> t1{0.0, 1e-3, 3e-3}, t2{3e-3, 0.0, 1e-3};
  const auto r1 = quench_experiment(s, t1);
  const auto r2 = quench_experiment(s, t2);
  CHECK(r2[0].p_m == r1[2].p_m);
  CHECK(r2[1].p_m == r1[0].p_m);

  // with no detection tilt the prepared state reads out as pure 9/2
  FieldSchedule s0 = s;
  s0.detection_axis_angle = 0.0;
  const std::vector<double> zero{0.0};
  CHECK(quench_experiment(s0, zero)[0].p_abs[0] == doctest::Approx(1.0).epsilon(1e-12));
  // the tilt alone rotates by 5 degrees: d^{9/2}_{9/2,9/2} = cos^9(2.5 deg)
  CHECK(quench_experiment(s, zero)[0].p_m[0] == doctest::Approx(std::pow(std::cos(s.detection_axis_angle / 2), 18)));
}

TEST_CASE("detection tilt azimuth") {
  FieldSchedule s;
  const Vec3 toward = s.detection_axis();
  CHECK(toward.z() > 0.0);
  CHECK(std::abs(toward.y()) < 1e-15);
  s.detection_axis_azimuth = constants::pi / 2;
  const Vec3 side = s.detection_axis();
  CHECK(side.dot(s.guide_axis()) == doctest::Approx(std::cos(s.detection_axis_angle)));
  CHECK(std::abs(side.y()) == doctest::Approx(std::sin(s.detection_axis_angle)));
  CHECK(std::abs(side.z()) < 1e-15);
}

TEST_CASE("the sign of the g-factor does not change the populations") {
  // fields in the xz plane: flipping g conjugates the state, measured along a real axis
  const FieldSchedule s;
  std::vector<double> t;
  for (int i = 0; i < 40; ++i) t.push_back(i * 0.37e-3);
  QuenchOptions pos, neg;
  neg.evolve.g_hz_per_gauss = -pos.evolve.g_hz_per_gauss;
  const auto a = quench_experiment(s, t, pos);
  const auto b = quench_experiment(s, t, neg);
  double worst = 0.0;
  for (std::size_t i = 0; i < t.size(); ++i)
    for (std::size_t k = 0; k < a[i].p_abs.size(); ++k) worst = std::max(worst, std::abs(a[i].p_abs[k] - b[i].p_abs[k]));
  CHECK(worst < 1e-10);
}

TEST_CASE("fold_abs merges the two lowest |m| bins") {
  const auto& o = ops9();
  std::vector<double> p(10);
  for (int i = 0; i < 10; ++i) p[i] = i + 1;
  const auto f = fold_abs(o, p);
  REQUIRE(f.size() == 4);
  CHECK(f[0] == 11);       // +-9/2
  CHECK(f[1] == 11);       // +-7/2
  CHECK(f[2] == 11);       // +-5/2
  CHECK(f[3] == 11 + 11);  // +-3/2 and +-1/2
}

TEST_CASE("input validation") {
  const auto& o = ops9();
  FieldSchedule s;
  auto psi = basis_state(o, HalfInt(9), Vec3::UnitZ());
  EvolveOptions big;
  big.dt = 1e-4;
  CHECK_THROWS_AS(evolve(psi, s, o, 1e-3, big), std::invalid_argument);
  psi.amps *= 2.0;
  CHECK_THROWS_AS(evolve(psi, s, o, 1e-3, {}), std::invalid_argument);
  FieldSchedule bad;
  bad.b_guide = Vec3::Zero();
  const std::vector<double> t{0.0};
  CHECK_THROWS(quench_experiment(bad, t));
  CHECK(quench_experiment(s, std::vector<double>{}).empty());
}

TEST_CASE("population CSV header") {
  std::ostringstream os;
  const std::vector<double> t{0.0};
  write_population_csv(os, ops9(), quench_experiment(FieldSchedule{}, t));
  CHECK(os.str().rfind("t_s,p_9half,p_7half,p_5half,p_merged,p_m+9/2", 0) == 0);
}
