#pragma once

#include <Eigen/Dense>

#include <complex>
#include <iosfwd>
#include <span>
#include <vector>

#include "srspin/constants.hpp"
#include "srspin/half_int.hpp"

// Spin-F operator algebra and coherent evolution in a time-dependent magnetic
// field. Amplitude index 0 is m = +F and the index runs down to m = -F.
namespace srspin::spin {

using CMatrix = Eigen::MatrixXcd;
using CVector = Eigen::VectorXcd;
using Vec3 = Eigen::Vector3d;

struct SpinOperators {
  HalfInt F;
  CMatrix fx, fy, fz;

  int dim() const { return F.twice + 1; }
  HalfInt m_at(int index) const { return HalfInt(F.twice - 2 * index); }
  int index_of(HalfInt m) const { return (F.twice - m.twice) / 2; }
};

SpinOperators make_spin_operators(HalfInt F);
SpinOperators make_spin_operators(double F);

/// Amplitudes over m quantized along basis_axis.
struct SpinVector {
  CVector amps;
  Vec3 basis_axis = Vec3::UnitZ();

  double norm() const { return amps.norm(); }
};

/// Rotation taking z onto `axis`: about z x axis by the polar angle. This fixes
/// the transverse frame attached to every quantization axis.
Eigen::Matrix3d canonical_rotation(const Vec3& axis);

/// Spin representation of a rotation by `angle` about unit `axis`:
/// exp(-i angle axis.F).
CMatrix rotation_operator(const SpinOperators& ops, const Vec3& axis, double angle);

/// Spin representation of the canonical rotation onto `axis`.
CMatrix basis_rotation(const SpinOperators& ops, const Vec3& axis);

/// Re-expresses the state in the basis quantized along `axis`.
SpinVector to_basis(const SpinOperators& ops, const SpinVector& state, const Vec3& axis);

/// |F, m> quantized along `axis` (amplitudes in that basis).
SpinVector basis_state(const SpinOperators& ops, HalfInt m, const Vec3& axis);

/// Zeeman Hamiltonian in rad/s for field `b` (gauss) expressed in the basis
/// quantized along `basis_axis`: 2 pi g (b . F).
CMatrix zeeman_hamiltonian(const SpinOperators& ops, const Vec3& b_gauss, double g_hz_per_gauss,
                           const Vec3& basis_axis = Vec3::UnitZ());

/// Guide field plus an exponentially rising quench along quench_axis.
struct FieldSchedule {
  Vec3 b_guide{0.08, 0.0, 0.0};
  double b_quench_amplitude = 1.158;
  Vec3 quench_axis = Vec3::UnitZ();
  double rise_time_tau = 0.3e-3;
  // Polar tilt of the detection axis away from the guide direction, toward the
  // quench axis.
  double detection_axis_angle = 5.0 * constants::pi / 180.0;
  // Rotation of the tilt direction about the guide axis; 0 tilts toward the quench axis.
  double detection_axis_azimuth = 0.0;

  Vec3 field(double t) const;
  double max_field_magnitude() const;
  Vec3 guide_axis() const;
  Vec3 detection_axis() const;
  void validate() const;

  static FieldSchedule constant(const Vec3& b_gauss);
};

struct EvolveOptions {
  double g_hz_per_gauss = constants::sr87::larmor_coefficient_hz_per_gauss;
  double dt = 1e-6;
};

/// Piecewise-constant propagation from t_start to t_start + duration. Each
/// step applies exp(-i H(t_mid) h) from the spectral decomposition of H.
/// Consecutive steps with bit-identical H are applied as one exponential.
SpinVector evolve(const SpinVector& state, const FieldSchedule& schedule, const SpinOperators& ops,
                  double duration, const EvolveOptions& opt, double t_start = 0.0);

struct PopulationRecord {
  double time = 0.0;
  std::vector<double> p_m;    // m = +F ... -F
  std::vector<double> p_abs;  // |m| = F, F-1, ..., lowest two merged
};

/// |m| fold with the two smallest |m| bins merged.
std::vector<double> fold_abs(const SpinOperators& ops, std::span<const double> p_m);

PopulationRecord measure_populations(const SpinOperators& ops, const SpinVector& state,
                                     const Vec3& detection_axis);

struct QuenchOptions {
  EvolveOptions evolve;
  // Fraction of the population prepared in +F; the rest sits in +F-1.
  double p_prep = 1.0;
};

/// Stretched +F along the guide axis, evolved to each hold time and measured
/// along the detection axis. Times are propagated in ascending order, each
/// segment continuing from the previous one; output order follows input order.
std::vector<PopulationRecord> quench_experiment(const FieldSchedule& schedule,
                                                std::span<const double> times,
                                                const QuenchOptions& opt = {});

void write_population_csv(std::ostream& os, const SpinOperators& ops,
                          std::span<const PopulationRecord> records);

}  // namespace srspin::spin
