#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "srspin/camera.hpp"
#include "srspin/montecarlo.hpp"
#include "srspin/optics.hpp"
#include "srspin/pipeline.hpp"

// Single-shot synthesis (atom, imaging, camera) for the free-space and
// spin-resolved experiments, and the imaging-time scan built on it.
namespace srspin::shots {

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;

struct Apparatus {
  optics::DipoleTrap tweezer;
  optics::DipoleTrap light_sheet;
  optics::OsgField osg;
};

/// Tweezer along z at the origin, light sheet along x (thin along z), OSG
/// beam along z displaced by -offset along y so the separation axis is +y.
Apparatus default_apparatus();

struct FreeSpaceConfig {
  mc::ThermalSource source;
  optics::DipoleTrap light_sheet;
  double time_of_flight = 5e-6;
  mc::ImagingParams imaging;  // `fields` is filled with the light sheet
  camera::CameraParams camera;
  double fill_probability = 0.5;
};

struct OsgShotConfig {
  mc::ThermalSource source;
  mc::OsgSequenceConfig sequence;
  mc::ImagingParams imaging;
  camera::CameraParams camera;
  double fill_probability = 0.5;
  std::array<double, 10> spin_weights{1, 1, 1, 1, 1, 1, 1, 1, 1, 1};  // m = +9/2 ... -9/2
};

FreeSpaceConfig default_free_space(const Apparatus& app);
OsgShotConfig default_osg_shot(const Apparatus& app);

/// Second moments of the collected emission positions relative to the atom
/// position at the start of imaging.
struct SpotMoments {
  double n = 0.0;
  Vec2 sum = Vec2::Zero();
  Eigen::Matrix2d sum_sq = Eigen::Matrix2d::Zero();
  double psf_var = 0.0;  // summed per-event PSF variance (per axis)
  void add(const Vec2& d, double psf_variance);
  void merge(const SpotMoments& o);
  /// Covariance of the landing positions: emission spread plus mean PSF variance.
  Eigen::Matrix2d covariance() const;
};

struct Shot {
  camera::Frame frame;
  bool atom = false;
  bool survived = true;
  HalfInt m_f = kSr87Spin;
  Vec2 start = Vec2::Zero();  // object plane, at the start of imaging
  // Mean position over all scattering events (collected or not): where the
  // fluorescence came from. Differs from `start` by the beam-alternation drift.
  Vec2 emission_center = Vec2::Zero();
  std::size_t scattered = 0;
  std::size_t collected = 0;
  SpotMoments spot;
};

/// Shot `index` draws only from streams (seed, index, *).
Shot simulate_free_space_shot(const FreeSpaceConfig& cfg, std::uint64_t seed, std::size_t index);
Shot simulate_osg_shot(const OsgShotConfig& cfg, std::uint64_t seed, std::size_t index);

struct ShotSummary {
  bool atom = false;
  bool survived = true;
  HalfInt m_f = kSr87Spin;
  Vec2 start = Vec2::Zero();
  Vec2 emission_center = Vec2::Zero();
  std::size_t scattered = 0;
  std::size_t collected = 0;
  pipeline::Localization loc;
};

/// Simulates and analyzes shots [0, n) in parallel. `keep` (may be empty)
/// is called serially in index order with each rendered shot, e.g. to save frames.
std::vector<ShotSummary> run_shots(std::size_t n, const std::function<Shot(std::size_t)>& simulate,
                                   const pipeline::AnalysisConfig& analysis, SpotMoments* spot = nullptr,
                                   const std::function<void(std::size_t, const Shot&)>& keep = {});

struct ScanRow {
  double time = 0.0;
  std::size_t shots = 0;
  std::size_t atom_shots = 0;
  double mean_scattered = 0.0;
  double mean_collected = 0.0;
  double survival = 0.0;
  pipeline::DetectionFit fit;
  double infidelity = 0.0;
  double truth_accuracy = 0.0;  // classification rate with the fitted threshold
  double sigma_major = 0.0;     // m, object plane
  double sigma_minor = 0.0;
  double localization_rms = 0.0;  // m, detected atom shots, vs the emission center
  double drift = 0.0;             // m, mean (emission center - start) along the imaging beam
  std::string fit_error;          // empty when the histogram fit succeeded
};

/// For each imaging time: render shots, analyze, fit the histogram and the
/// spot covariance. Scan point i uses stream seed stream_seed(seed, i). A
/// failed histogram fit is reported in that row (NaN fidelity, fit_error set)
/// instead of aborting the scan.
std::vector<ScanRow> imaging_time_scan(std::span<const double> times, std::size_t shots_per_time,
                                       const FreeSpaceConfig& cfg, const pipeline::AnalysisConfig& analysis,
                                       std::uint64_t seed);

void write_scan_csv(std::ostream& os, std::span<const ScanRow> rows);

}  // namespace srspin::shots
