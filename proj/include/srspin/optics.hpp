#pragma once

#include <Eigen/Dense>

#include <variant>

#include "srspin/constants.hpp"
#include "srspin/half_int.hpp"

// Gaussian beam intensity profiles and the dipole potentials built on them.
namespace srspin::optics {

using Vec3 = Eigen::Vector3d;

/// Elliptical Gaussian beam. `u_axis` is the transverse axis carrying
/// `waist_u`; the second transverse axis is axis x u_axis.
struct GaussianBeam {
  double power = 1.0;  // W
  double waist_u = 1e-6;
  double waist_v = 1e-6;
  Vec3 center = Vec3::Zero();
  Vec3 axis = Vec3::UnitZ();
  Vec3 u_axis = Vec3::UnitX();
  double wavelength = 1e-6;
  bool divergence = true;  // include axial waist growth

  double peak_intensity() const;
  double rayleigh_u() const;
  double rayleigh_v() const;

  /// I / I0 and its gradient (1/m).
  double profile(const Vec3& r) const;
  double profile(const Vec3& r, Vec3& grad) const;
  double intensity(const Vec3& r) const { return peak_intensity() * profile(r); }

  void validate() const;
};

struct Polarizability {
  double alpha_scalar_au = 7.2e3;
  double alpha_tensor_au = 42.5e3;
  HalfInt F = kSr87Spin;
  double au_to_si = constants::polarizability_au;

  double effective_au(HalfInt m) const;
  double effective_si(HalfInt m) const { return effective_au(m) * au_to_si; }
};

/// Rank-2 light-shift weight (3m^2 - F(F+1)) / (F(2F-1)); 1 for the stretched state.
double tensor_weight(HalfInt m, HalfInt F);

/// Spin-dependent dipole potential of the OSG beam. With light_shift_sign = +1
/// a positive effective polarizability is repelled from the intensity maximum.
struct OsgField {
  GaussianBeam beam;
  Polarizability pol;
  double light_shift_sign = 1.0;

  /// Light shift per unit profile, J.
  double peak_shift(HalfInt m) const;
};

/// Spin-independent trap U = -depth * profile (tweezer, light sheet).
struct DipoleTrap {
  GaussianBeam beam;
  double depth = 0.0;  // J
};

struct HarmonicTrap {
  Vec3 center = Vec3::Zero();
  Vec3 omega = Vec3::Ones();  // rad/s per axis
  double mass = constants::sr87::mass;
};

using PotentialField = std::variant<OsgField, DipoleTrap, HarmonicTrap>;

struct FieldSample {
  double energy = 0.0;          // J
  Vec3 force = Vec3::Zero();    // N
};

FieldSample evaluate(const PotentialField& field, const Vec3& r, HalfInt m);

/// Largest small-oscillation angular frequency the field can produce for `m`.
double max_angular_frequency(const PotentialField& field, HalfInt m, double mass);

double osg_potential(const GaussianBeam& beam, const Polarizability& pol, const Vec3& r, HalfInt m,
                     double light_shift_sign = 1.0);
double tweezer_potential(const GaussianBeam& beam, double depth, const Vec3& r);
double lightsheet_potential(const GaussianBeam& beam, double depth, const Vec3& r);

/// Radial and axial harmonic frequencies of a dipole trap at its focus.
struct TrapFrequencies {
  double u, v, axial;
};
TrapFrequencies trap_frequencies(const DipoleTrap& trap, double mass);

}  // namespace srspin::optics
