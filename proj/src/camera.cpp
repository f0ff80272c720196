#include "srspin/camera.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <random>
#include <sstream>
#include <stdexcept>

#include "srspin/rng.hpp"

namespace srspin::camera {

void CameraParams::validate() const {
  if (!(gain_over_readout > 0.0 && readout_sigma >= 0.0)) throw std::invalid_argument("camera: gain and readout must be >= 0");
  if (!(cic_rate >= 0.0 && cic_rate <= 1.0)) throw std::invalid_argument("camera: cic_rate must lie in [0, 1]");
  if (!(quantum_efficiency >= 0.0 && quantum_efficiency <= 1.0)) throw std::invalid_argument("camera: QE must lie in [0, 1]");
  if (!(pixel_pitch > 0.0 && magnification > 0.0 && psf_sigma >= 0.0 && defocus_slope >= 0.0)) throw std::invalid_argument("camera: bad optics");
  if (rows < 1 || cols < 1) throw std::invalid_argument("camera: empty frame shape");
}

std::vector<std::string> CameraParams::warnings() const {
  std::vector<std::string> w;
  if (object_pixel() > 2.0 * psf_sigma) {
    w.push_back("object-plane pixel (" + std::to_string(object_pixel() * 1e9) +
                " nm) undersamples the PSF (Nyquist needs <= 2 sigma_psf)");
  }
  return w;
}

Vec2 CameraParams::to_pixel(const Vec2& object) const {
  return (object - center) / object_pixel() + Vec2(0.5 * cols, 0.5 * rows);
}

Vec2 CameraParams::to_object(const Vec2& pixel) const {
  return center + (pixel + Vec2(0.5, 0.5) - Vec2(0.5 * cols, 0.5 * rows)) * object_pixel();
}

Frame render_frame(std::span<const mc::EmissionEvent> events, const CameraParams& params, std::uint64_t seed) {
  params.validate();
  Engine rng(splitmix64(seed ^ 0x5bd1e995ULL));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uni(0.0, 1.0);

  Frame f;
  f.rows = params.rows;
  f.cols = params.cols;
  f.params = params;
  f.seed = seed;
  const std::size_t n_pix = static_cast<std::size_t>(f.rows) * f.cols;
  std::vector<int> electrons(n_pix, 0);

  for (const auto& e : events) {
    if (!e.collected) continue;
    const Vec2 obj = e.position + params.psf_at(e.z) * Vec2(gauss(rng), gauss(rng));
    const Vec2 px = params.to_pixel(obj);
    const double c = std::floor(px.x());
    const double r = std::floor(px.y());
    if (c < 0 || r < 0 || c >= f.cols || r >= f.rows) {
      ++f.dropped_events;
      continue;
    }
    ++electrons[static_cast<std::size_t>(r) * f.cols + static_cast<std::size_t>(c)];
  }

  const double g = params.em_gain();
  f.counts.resize(n_pix);
  for (std::size_t i = 0; i < n_pix; ++i) {
    int n = electrons[i];
    if (params.cic_rate > 0.0 && uni(rng) < params.cic_rate) ++n;
    double value = params.bias;
    if (n > 0) value += std::gamma_distribution<double>(static_cast<double>(n), g)(rng);
    if (params.readout_sigma > 0.0) value += params.readout_sigma * gauss(rng);
    const double rounded = std::nearbyint(value);
    if (rounded < 0.0 || rounded > 65535.0) ++f.clamped_pixels;
    f.counts[i] = static_cast<std::int32_t>(std::clamp(rounded, 0.0, 65535.0));
  }
  return f;
}

double estimate_margin_bias(const Frame& frame, int margin_rows) {
  if (margin_rows < 1 || 2 * margin_rows > frame.rows) {
    throw std::invalid_argument("bias estimate: frame has fewer rows than the requested margins");
  }
  std::vector<double> v;
  v.reserve(static_cast<std::size_t>(2 * margin_rows) * frame.cols);
  for (int r = 0; r < frame.rows; ++r) {
    if (r >= margin_rows && r < frame.rows - margin_rows) continue;
    for (int c = 0; c < frame.cols; ++c) v.push_back(frame.at(r, c));
  }
  // sigma-clipped mean around the median; CIC and photon pixels sit far above
  std::vector<double> tmp = v;
  std::nth_element(tmp.begin(), tmp.begin() + tmp.size() / 2, tmp.end());
  double center = tmp[tmp.size() / 2];
  const double clip = 5.0 * std::max(frame.params.readout_sigma, 1.0);
  for (int it = 0; it < 3; ++it) {
    double s = 0.0;
    std::size_t n = 0;
    for (double x : v) {
      if (std::abs(x - center) <= clip) {
        s += x;
        ++n;
      }
    }
    if (n == 0) break;
    center = s / static_cast<double>(n);
  }
  return center;
}

Frame bias_correct(const Frame& frame, BiasMethod method, int margin_rows) {
  if (frame.bias_corrected() || method == BiasMethod::None) return frame;
  Frame out = frame;
  out.bias_value = method == BiasMethod::Recorded ? frame.params.bias : estimate_margin_bias(frame, margin_rows);
  const auto offset = static_cast<std::int32_t>(std::nearbyint(out.bias_value));
  for (auto& c : out.counts) c -= offset;
  out.bias_method = method;
  return out;
}

nlohmann::json to_json(const CameraParams& p) {
  return {{"gain_over_readout", p.gain_over_readout},
          {"readout_sigma", p.readout_sigma},
          {"em_gain", p.em_gain()},
          {"cic_rate", p.cic_rate},
          {"bias", p.bias},
          {"pixel_pitch", p.pixel_pitch},
          {"magnification", p.magnification},
          {"quantum_efficiency", p.quantum_efficiency},
          {"psf_sigma", p.psf_sigma},
          {"defocus_slope", p.defocus_slope},
          {"rows", p.rows},
          {"cols", p.cols},
          {"center", {p.center.x(), p.center.y()}}};
}

CameraParams camera_params_from_json(const nlohmann::json& j) {
  CameraParams p;
  p.gain_over_readout = j.at("gain_over_readout").get<double>();
  p.readout_sigma = j.at("readout_sigma").get<double>();
  p.cic_rate = j.at("cic_rate").get<double>();
  p.bias = j.at("bias").get<double>();
  p.pixel_pitch = j.at("pixel_pitch").get<double>();
  p.magnification = j.at("magnification").get<double>();
  p.quantum_efficiency = j.at("quantum_efficiency").get<double>();
  p.psf_sigma = j.at("psf_sigma").get<double>();
  p.defocus_slope = j.value("defocus_slope", p.defocus_slope);
  p.rows = j.at("rows").get<int>();
  p.cols = j.at("cols").get<int>();
  p.center = Vec2(j.at("center").at(0).get<double>(), j.at("center").at(1).get<double>());
  return p;
}

void write_pgm16(const std::filesystem::path& path, int rows, int cols, std::span<const std::int32_t> counts) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << "P5\n" << cols << ' ' << rows << "\n65535\n";
  std::vector<unsigned char> buf(counts.size() * 2);
  for (std::size_t i = 0; i < counts.size(); ++i) {
    const auto v = static_cast<std::uint16_t>(std::clamp<std::int32_t>(counts[i], 0, 65535));
    buf[2 * i] = static_cast<unsigned char>(v >> 8);
    buf[2 * i + 1] = static_cast<unsigned char>(v & 0xff);
  }
  os.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
}

std::vector<std::int32_t> read_pgm16(const std::filesystem::path& path, int& rows, int& cols) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot read " + path.string());
  std::string magic;
  int maxval = 0;
  is >> magic >> cols >> rows >> maxval;
  if (magic != "P5" || maxval != 65535 || rows < 1 || cols < 1) {
    throw std::runtime_error(path.string() + ": not a 16-bit binary PGM");
  }
  is.get();  // single whitespace before the raster
  std::vector<unsigned char> buf(static_cast<std::size_t>(rows) * cols * 2);
  is.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
  if (is.gcount() != static_cast<std::streamsize>(buf.size())) throw std::runtime_error(path.string() + ": truncated raster");
  std::vector<std::int32_t> counts(static_cast<std::size_t>(rows) * cols);
  for (std::size_t i = 0; i < counts.size(); ++i) counts[i] = (buf[2 * i] << 8) | buf[2 * i + 1];
  return counts;
}

void save_frame(const std::filesystem::path& stem, const Frame& frame, const nlohmann::json& metadata) {
  if (frame.bias_corrected()) throw std::invalid_argument("save_frame: store raw frames, not bias-corrected ones");
  const auto image = std::filesystem::path(stem.string() + ".pgm");
  write_pgm16(image, frame.rows, frame.cols, frame.counts);
  nlohmann::json truth = nlohmann::json::array();
  for (const auto& t : frame.truth) {
    truth.push_back({{"atom_present", t.atom_present},
                     {"x_m", t.position.x()},
                     {"y_m", t.position.y()},
                     {"m_f_twice", t.m_f.twice}});
  }
  nlohmann::json side = {{"schema_version", 1},
                         {"image", image.filename().string()},
                         {"seed", frame.seed},
                         {"params", to_json(frame.params)},
                         {"truth", truth},
                         {"dropped_events", frame.dropped_events},
                         {"clamped_pixels", frame.clamped_pixels},
                         {"metadata", metadata.is_null() ? nlohmann::json::object() : metadata}};
  std::ofstream os(stem.string() + ".json");
  if (!os) throw std::runtime_error("cannot write sidecar for " + stem.string());
  os << side.dump(1) << '\n';
}

LoadedFrame load_frame(const std::filesystem::path& sidecar_path) {
  std::ifstream is(sidecar_path);
  if (!is) throw std::runtime_error("cannot read " + sidecar_path.string());
  LoadedFrame out;
  out.sidecar = nlohmann::json::parse(is);
  if (out.sidecar.value("schema_version", 0) != 1) throw std::runtime_error("unsupported sidecar schema");
  Frame& f = out.frame;
  f.params = camera_params_from_json(out.sidecar.at("params"));
  f.seed = out.sidecar.at("seed").get<std::uint64_t>();
  f.dropped_events = out.sidecar.value("dropped_events", std::size_t{0});
  f.clamped_pixels = out.sidecar.value("clamped_pixels", std::size_t{0});
  for (const auto& t : out.sidecar.at("truth")) {
    f.truth.push_back({t.at("atom_present").get<bool>(), Vec2(t.at("x_m").get<double>(), t.at("y_m").get<double>()),
                       HalfInt(t.at("m_f_twice").get<int>())});
  }
  const auto image = sidecar_path.parent_path() / out.sidecar.at("image").get<std::string>();
  f.counts = read_pgm16(image, f.rows, f.cols);
  if (f.rows != f.params.rows || f.cols != f.params.cols) throw std::runtime_error("image shape disagrees with sidecar");
  return out;
}

}  // namespace srspin::camera
