#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "srspin/camera.hpp"

// Image analysis: binarization, elliptical Gaussian low-pass, peak
// localization and the two-component detection histogram fit.
namespace srspin::pipeline {

using Vec2 = Eigen::Vector2d;

struct AnalysisConfig {
  double binarize_k = 6.5;     // threshold in units of readout sigma
  double sigma_major = 10.4;   // px
  double sigma_minor = 8.0;    // px
  double kernel_angle = 0.0;   // major axis from the column (x) axis, rad
  double kernel_truncate = 3.0;  // half-width = floor(truncate * sigma_major)
  int border_band = -1;        // excluded from the peak search; -1 = round(sigma_minor)
  int histogram_bins = 100;
  int min_shots = 500;
  int bootstrap = 0;           // resamples for the fidelity standard error
  std::uint64_t seed = 1;

  void validate() const;
  int effective_border() const;
};

struct BinaryImage {
  int rows = 0, cols = 0;
  std::vector<std::uint8_t> data;
  std::uint8_t at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

struct Image {
  int rows = 0, cols = 0;
  std::vector<double> data;
  double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
};

/// pixel = 1 iff bias-corrected counts > k * readout_sigma.
BinaryImage binarize(const camera::Frame& frame, const AnalysisConfig& cfg);

/// Normalized elliptical Gaussian kernel, (2R+1)^2 row-major with R the half-width.
struct Kernel {
  int half_width = 0;
  std::vector<double> weights;
  double at(int dr, int dc) const {
    const int w = 2 * half_width + 1;
    return weights[static_cast<std::size_t>(dr + half_width) * w + (dc + half_width)];
  }
};
Kernel make_kernel(const AnalysisConfig& cfg);

/// Zero-padded convolution with the kernel. Scatters only the set pixels,
/// parallel over output rows.
Image lowpass(const BinaryImage& in, const AnalysisConfig& cfg);
/// Dense gather form, serial; kept as the reference for lowpass().
Image lowpass_reference(const BinaryImage& in, const AnalysisConfig& cfg);

struct Localization {
  Vec2 pixel = Vec2::Zero();   // (column, row)
  Vec2 object = Vec2::Zero();  // object plane, m
  double peak_value = 0.0;
  bool is_atom = false;
};

/// Global maximum outside a border band; ties go to the lowest row-major index.
Localization localize(const Image& filtered, int border_band);

/// Bias correction (recorded bias), binarization, low-pass and localization.
Localization analyze_frame(const camera::Frame& raw, const AnalysisConfig& cfg);
std::vector<Localization> analyze_frames(std::span<const camera::Frame> frames, const AnalysisConfig& cfg);
std::vector<Localization> analyze_frames_serial(std::span<const camera::Frame> frames, const AnalysisConfig& cfg);

/// Azzalini skew-normal, scaled by `amplitude`.
struct SkewNormal {
  double location = 0.0;
  double scale = 1.0;
  double shape = 0.0;
  double amplitude = 1.0;

  double pdf(double x) const;
  double density(double x) const { return amplitude * pdf(x); }
  double mean() const;
  double mode() const;
};

struct DetectionFit {
  SkewNormal zero;  // empty-shot peak
  SkewNormal one;   // one-atom peak
  double offset = 0.0;  // plateau height between the two peaks (dark-state loss)
  double threshold = 0.0;
  double fidelity = 0.0;
  double fidelity_stderr = std::numeric_limits<double>::quiet_NaN();
  double reduced_chi2 = 0.0;
  int evaluations = 0;
  bool converged = false;
  std::vector<double> bin_edges;
  std::vector<double> bin_density;

  double zero_density(double x) const { return zero.density(x); }
  double one_density(double x) const;
};

class FitError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Least-squares fit of skew-normal (empty) + skew-normal with plateau
/// (atom) to the histogram density. The threshold is where the two component
/// densities cross; fidelity is one minus the misassigned mass of both.
DetectionFit fit_detection_histogram(std::span<const double> peak_values, const AnalysisConfig& cfg);

/// Threshold and fidelity for given component densities (used by the fit).
void finalize_detection(DetectionFit& fit, double lo, double hi);

}  // namespace srspin::pipeline
