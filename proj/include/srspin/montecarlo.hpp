#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <iosfwd>
#include <span>
#include <vector>

#include "srspin/constants.hpp"
#include "srspin/half_int.hpp"
#include "srspin/optics.hpp"
#include "srspin/rng.hpp"

// Classical atom ensembles: thermal sampling, trajectories, the OSG sequence,
// fluorescence recoil walks and release-recapture thermometry.
namespace srspin::mc {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using optics::PotentialField;

struct AtomSample {
  Vec3 position = Vec3::Zero();
  Vec3 velocity = Vec3::Zero();
  HalfInt m_f = kSr87Spin;
  bool alive = true;
};

enum class SamplingMode { ClassicalBoltzmann, GroundStateWigner };

struct ThermalSource {
  double temperature = 750e-9;  // K
  optics::DipoleTrap trap;      // the tweezer the atoms are held in
  double mass = constants::sr87::mass;
  SamplingMode mode = SamplingMode::ClassicalBoltzmann;
  // Reject samples whose energy in the full Gaussian trap is >= 0.
  bool crop_unbound = false;
};

/// Harmonic sampling around the trap center using the trap's small-oscillation
/// frequencies. Atom i draws from stream i of `seed`; m_f is set to +F.
std::vector<AtomSample> sample_atoms(const ThermalSource& source, std::size_t n, std::uint64_t seed);

/// Draws m_f for each atom from `weights` over m = +F ... -F.
void assign_spins(std::span<AtomSample> atoms, std::span<const double> weights, std::uint64_t seed,
                  HalfInt F = kSr87Spin);

double total_energy(const AtomSample& atom, std::span<const PotentialField> fields, double mass);

/// Classical RK4 under the summed m_f-dependent forces. Requires
/// dt <= 1 / (100 omega_max) for the fields present.
AtomSample integrate_trajectory(const AtomSample& atom, std::span<const PotentialField> fields, double t,
                                double dt, double mass = constants::sr87::mass);

struct OsgSequenceConfig {
  optics::OsgField osg;
  optics::DipoleTrap light_sheet;
  double pulse_time = 5e-6;
  double expansion_time = 94e-6;
  double dt_pulse = 10e-9;
  double dt_expansion = 100e-9;
  double mass = constants::sr87::mass;
  // Optional off-resonant scattering during the pulse (events/s); 0 disables.
  double pulse_scattering_rate = 0.0;
  double pulse_wavelength = 689e-9;
  std::uint64_t seed = 0;
};

/// Tweezer released at t = 0, OSG pulse in the light sheet, then in-plane
/// expansion in the light sheet alone.
std::vector<AtomSample> osg_sequence(std::span<const AtomSample> atoms, const OsgSequenceConfig& cfg);
std::vector<AtomSample> osg_sequence_serial(std::span<const AtomSample> atoms, const OsgSequenceConfig& cfg);
AtomSample osg_sequence_one(const AtomSample& atom, const OsgSequenceConfig& cfg, std::size_t index);

enum class EmissionPattern { Isotropic, Dipole };

/// Mean squared projection of a unit emission direction onto each axis; the
/// per-event velocity variance from emission is (hbar k / m)^2 times this.
Vec3 emission_geometry_factor(EmissionPattern pattern, const Vec3& dipole_axis);

struct ImagingParams {
  double duration = 15e-6;
  double linewidth = constants::sr87::blue_linewidth;  // rad/s
  double saturation = 20.0;
  double wavelength = constants::sr87::blue_wavelength;
  Vec3 beam_axis = Vec3::UnitX();
  double alternation_period = 500e-9;  // each beam is on for this long
  double dark_branching = 5e-5;
  double collection_efficiency = 0.033;
  EmissionPattern pattern = EmissionPattern::Isotropic;
  Vec3 dipole_axis = Vec3::UnitY();
  std::vector<PotentialField> fields;  // potentials present during imaging
  double mass = constants::sr87::mass;
  double max_dt = 1e-6;

  double scattering_rate() const { return 0.5 * linewidth * saturation / (1.0 + saturation); }
  double recoil_velocity() const { return constants::planck / (mass * wavelength); }
};

/// Objective solid-angle fraction times transmission times detector QE.
double collection_efficiency(double numerical_aperture, double transmission, double quantum_efficiency);

struct EmissionEvent {
  double time = 0.0;
  Vec2 position = Vec2::Zero();  // object plane (x, y), m
  bool collected = false;
  double z = 0.0;  // distance from the focal plane, m
};

struct FluorescenceTrace {
  std::vector<EmissionEvent> events;
  bool survived = true;
  std::size_t scattered = 0;
  AtomSample final_state;
};

/// One absorption along `beam_dir` and one spontaneous emission; returns the
/// velocity change.
Vec3 recoil_kick(const Vec3& beam_dir, double v_recoil, EmissionPattern pattern, const Vec3& dipole_axis,
                 Engine& rng);

/// Poisson scattering with alternating counter-propagating beams. An
/// excitation ends in the dark state with probability dark_branching, which
/// stops the walk without a blue photon.
FluorescenceTrace fluorescence_walk(const AtomSample& atom, const ImagingParams& imaging, std::uint64_t seed);

struct RecapturePoint {
  double time = 0.0;
  double probability = 0.0;
  double stderr_binomial = 0.0;
};

struct RecaptureOptions {
  bool gravity = false;
  Vec3 gravity_direction = -Vec3::UnitZ();
};

/// Free flight for each hold time, then recaptured iff the energy in the
/// restored trap is negative. The same cropped sample is reused for all hold
/// times.
std::vector<RecapturePoint> release_recapture(const ThermalSource& source, std::span<const double> hold_times,
                                              std::size_t n, std::uint64_t seed, const RecaptureOptions& opt = {});

struct TemperatureFit {
  double temperature = 0.0;
  double chi2 = 0.0;
  int evaluations = 0;
};

/// Least-squares temperature from a measured recapture curve, by golden-section
/// search over simulated curves that share one random stream.
TemperatureFit fit_recapture_temperature(std::span<const RecapturePoint> data, const ThermalSource& model,
                                         std::size_t n, std::uint64_t seed, double t_lo, double t_hi,
                                         const RecaptureOptions& opt = {});

void write_atoms_csv(std::ostream& os, std::span<const AtomSample> atoms);
void write_events_csv(std::ostream& os, std::span<const EmissionEvent> events);
void write_recapture_csv(std::ostream& os, std::span<const RecapturePoint> points);

}  // namespace srspin::mc
