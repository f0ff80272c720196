#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

#include "srspin/half_int.hpp"
#include "srspin/montecarlo.hpp"

// EMCCD frame synthesis from collected emission events.
namespace srspin::camera {

using Vec2 = Eigen::Vector2d;

struct CameraParams {
  double gain_over_readout = 35.0;
  double readout_sigma = 20.0;  // counts
  double cic_rate = 0.02;       // probability per pixel per frame
  double bias = 500.0;          // counts
  double pixel_pitch = 16e-6;
  double magnification = 47.8;
  double quantum_efficiency = 0.8;
  double psf_sigma = 176e-9;  // object plane
  // Extra blur per unit distance from the focal plane: the geometric blur
  // disk of radius |z| tan(asin NA) has rms width |z| tan(asin NA) / 2 per axis.
  double defocus_slope = 0.0;
  int rows = 64;
  int cols = 64;
  Vec2 center = Vec2::Zero();  // object-plane point imaged onto the frame center

  double em_gain() const { return gain_over_readout * readout_sigma; }
  double object_pixel() const { return pixel_pitch / magnification; }
  /// PSF rms width per axis for an emitter at distance z from focus.
  double psf_at(double z) const { return std::sqrt(psf_sigma * psf_sigma + defocus_slope * defocus_slope * z * z); }
  void validate() const;
  std::vector<std::string> warnings() const;

  /// Object plane (m) to continuous pixel coordinates (x = column, y = row).
  Vec2 to_pixel(const Vec2& object) const;
  /// Center of pixel (col, row) in the object plane.
  Vec2 to_object(const Vec2& pixel) const;
};

struct TruthLabel {
  bool atom_present = false;
  Vec2 position = Vec2::Zero();  // object plane at the start of imaging
  HalfInt m_f = kSr87Spin;
};

enum class BiasMethod { None, Recorded, MarginEstimate };

struct Frame {
  int rows = 0;
  int cols = 0;
  std::vector<std::int32_t> counts;  // row-major
  CameraParams params;
  std::vector<TruthLabel> truth;
  std::uint64_t seed = 0;
  std::size_t dropped_events = 0;
  std::size_t clamped_pixels = 0;
  BiasMethod bias_method = BiasMethod::None;
  double bias_value = 0.0;

  std::int32_t at(int row, int col) const { return counts[static_cast<std::size_t>(row) * cols + col]; }
  bool bias_corrected() const { return bias_method != BiasMethod::None; }
};

/// PSF-jittered placement of collected events, CIC, Gamma EM register,
/// Gaussian readout and bias; counts are rounded and clamped to 16 bits.
Frame render_frame(std::span<const mc::EmissionEvent> events, const CameraParams& params, std::uint64_t seed);

/// Subtracts the recorded bias, or a sigma-clipped estimate from
/// `margin_rows` rows at the top and bottom of the frame. Already corrected
/// frames are returned unchanged.
Frame bias_correct(const Frame& frame, BiasMethod method = BiasMethod::Recorded, int margin_rows = 8);

double estimate_margin_bias(const Frame& frame, int margin_rows);

nlohmann::json to_json(const CameraParams& p);
CameraParams camera_params_from_json(const nlohmann::json& j);

/// Writes <stem>.pgm (16-bit binary graymap, raw counts) and <stem>.json.
void save_frame(const std::filesystem::path& stem, const Frame& frame, const nlohmann::json& metadata = {});

struct LoadedFrame {
  Frame frame;
  nlohmann::json sidecar;
};
/// Loads a frame from its sidecar path; the image path is taken from the sidecar.
LoadedFrame load_frame(const std::filesystem::path& sidecar_path);

void write_pgm16(const std::filesystem::path& path, int rows, int cols, std::span<const std::int32_t> counts);
std::vector<std::int32_t> read_pgm16(const std::filesystem::path& path, int& rows, int& cols);

}  // namespace srspin::camera
