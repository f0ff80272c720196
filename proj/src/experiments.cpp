#include "srspin/experiments.hpp"

#include <algorithm>
#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "srspin/camera.hpp"
#include "srspin/constants.hpp"
#include "srspin/rng.hpp"

namespace srspin::app {

namespace fs = std::filesystem;

namespace {

json range(double lo, double hi, double step) {
  json a = json::array();
  const int n = static_cast<int>(std::floor((hi - lo) / step + 1e-9));
  for (int i = 0; i <= n; ++i) a.push_back(lo + step * i);
  return a;
}

json::json_pointer pointer(const std::string& dotted) {
  std::string p;
  std::stringstream ss(dotted);
  std::string part;
  while (std::getline(ss, part, '.')) p += "/" + part;
  return json::json_pointer(p);
}

std::vector<Param> build_registry() {
  const std::string app = "apparatus";
  const std::string lit = "literature value";
  const std::string cal = "calibrated within the documented range";
  const std::string conv = "convention";
  const std::string num = "numerics";
  const std::string run = "run control";
  return {
      {"seed", 1, "", run},

      {"tweezer.waist_um", 1.35, "um", app + ": tweezer waist 1.35(8) um"},
      {"tweezer.wavelength_nm", 813.0, "nm", app + ": 813 nm tweezer"},
      {"tweezer.depth_uK", 3.6, "uK", app + ": 1.8 mK loading depth lowered 10x for pumping, then 50x"},

      {"light_sheet.waist_z_um", 20.0, "um", app + ": light sheet waist along z"},
      {"light_sheet.waist_y_um", 200.0, "um", app + ": light sheet waist along y"},
      {"light_sheet.wavelength_nm", 1040.0, "nm", app + ": 1040 nm light sheet"},
      {"light_sheet.depth_uK", 6.0, "uK", app + ": depth during detection"},

      {"source.temperature_nK", 750.0, "nK", app + ": release-recapture temperature"},
      {"source.mode", "classical", "", conv + ": classical | ground_state"},
      {"source.crop_unbound", false, "", conv},

      {"osg.power_mW", 2.8, "mW", app + ": OSG beam power"},
      {"osg.waist_um", 4.0, "um", app + ": OSG waist 4.0(2) um"},
      {"osg.offset_um", 2.0, "um", app + ": OSG focus displaced from the tweezer"},
      {"osg.wavelength_nm", 689.0, "nm", app + ": intercombination line"},
      {"osg.alpha_scalar_au", 7.2e3, "a.u.", lit + " at +790 MHz detuning"},
      {"osg.alpha_tensor_au", 42.5e3, "a.u.", lit + " at +790 MHz detuning"},
      {"osg.light_shift_sign", 1.0, "", conv + ": +1 repels positive effective polarizability"},
      {"osg.pulse_us", 5.0, "us", app + ": OSG pulse length"},
      {"osg.expansion_us", 94.0, "us", app + ": in-plane expansion"},
      {"osg.pulse_scattering_rate", 0.0, "1/s", conv + ": pulse scattering neglected"},
      {"osg.dt_pulse_ns", 10.0, "ns", num},
      {"osg.dt_expansion_ns", 100.0, "ns", num},

      {"imaging.duration_us", 15.0, "us", app + ": optimum exposure"},
      {"imaging.saturation", 20.0, "", app},
      {"imaging.dark_branching", 5e-5, "", cal + " (1/50000 .. 1/20000)"},
      {"imaging.collection_efficiency", 0.033, "", app},
      {"imaging.alternation_ns", 500.0, "ns", app},
      {"imaging.pattern", "isotropic", "", conv + ": isotropic | dipole"},
      {"imaging.max_dt_us", 1.0, "us", num},
      {"imaging.time_of_flight_us", 5.0, "us", app + ": release before free-space imaging"},

      {"camera.gain_over_readout", 35.0, "", app},
      {"camera.readout_sigma", 20.0, "counts", app},
      {"camera.cic_rate", 0.02, "1/pixel", app},
      {"camera.bias", 500.0, "counts", conv},
      {"camera.pixel_pitch_um", 16.0, "um", app},
      {"camera.magnification", 47.8, "", app},
      {"camera.quantum_efficiency", 0.8, "", app},
      {"camera.psf_sigma_nm", 176.0, "nm", app},
      {"camera.defocus_slope", 0.0, "", conv + ": 0 disables defocus blur"},
      {"camera.rows", 64, "px", conv},
      {"camera.cols", 64, "px", conv},
      {"camera.osg_rows", 128, "px", conv},
      {"camera.osg_cols", 96, "px", conv},
      {"camera.osg_center_y_um", 5.0, "um", conv},

      {"analysis.binarize_k", 6.5, "readout sigma", app + ": single photon threshold"},
      {"analysis.sigma_major_px", 10.4, "px", app + ": low-pass kernel"},
      {"analysis.sigma_minor_px", 8.0, "px", app + ": low-pass kernel"},
      {"analysis.kernel_angle_deg", 0.0, "deg", conv},
      {"analysis.kernel_truncate", 3.0, "sigma", num},
      {"analysis.border_band_px", -1, "px", conv + ": -1 = round(sigma_minor)"},
      {"analysis.histogram_bins", 100, "", conv},
      {"analysis.min_shots", 500, "", conv},
      {"analysis.bootstrap", 0, "", run},

      {"imaging_scan.times_us", range(5.0, 25.0, 2.5), "us", run},
      {"imaging_scan.shots", 2000, "", run},
      {"imaging_scan.fill_probability", 0.5, "", conv},
      {"imaging_scan.save_frames", false, "", run},

      {"osg_map.shots", 4000, "", run},
      {"osg_map.fill_probability", 0.5, "", conv},
      {"osg_map.spin_weights", json::array({1, 1, 1, 1, 1, 1, 1, 1, 1, 1}), "", conv + ": unpumped, m = +9/2 .. -9/2"},
      {"osg_map.components", 4, "", app + ": four resolved regions"},
      {"osg_map.restarts", 10, "", num},
      {"osg_map.bootstrap", 0, "", run},
      {"osg_map.fidelity_min_samples", 1000000, "", num},
      {"osg_map.fidelity_target_stderr", 1e-4, "", num},
      {"osg_map.save_frames", false, "", run},

      {"quench.b_guide_G", 0.08, "G", app + ": guide field"},
      {"quench.b_quench_G", 1.158, "G", app + ": quench field"},
      {"quench.rise_time_ms", 0.3, "ms", app + ": 1/e rise time"},
      {"quench.detection_angle_deg", 5.0, "deg", app + ": detection axis tilt"},
      {"quench.detection_azimuth_deg", 0.0, "deg", conv + ": tilt toward the quench axis"},
      {"quench.times_ms", range(0.0, 500.0, 1.0), "ms", run},
      {"quench.dt_us", 1.0, "us", num},
      {"quench.p_prep", 1.0, "", conv + ": stretched-state preparation"},

      {"release_recapture.times_us", range(0.0, 150.0, 10.0), "us", run},
      {"release_recapture.atoms", 10000, "", run},
      {"release_recapture.gravity", false, "", conv},
      {"release_recapture.fit_lo_nK", 200.0, "nK", num},
      {"release_recapture.fit_hi_nK", 3000.0, "nK", num},

      {"analyze.frames_dir", "", "", run},
  };
}

bool same_kind(const json& a, const json& b) {
  if (a.is_number() && b.is_number()) {
    // integers stay integers; floats accept integers
    return !(a.is_number_integer() && b.is_number_float() && b.get<double>() != std::floor(b.get<double>()));
  }
  return a.type() == b.type();
}

void check_leaves(const json& overrides, const json& base, const std::string& prefix) {
  for (auto it = overrides.begin(); it != overrides.end(); ++it) {
    const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
    if (prefix.empty() && it.key() == "experiment") continue;
    if (!base.contains(it.key())) throw ConfigError(path, "unknown key");
    const json& b = base.at(it.key());
    if (b.is_object()) {
      if (!it.value().is_object()) throw ConfigError(path, "expected an object");
      check_leaves(it.value(), b, path);
    } else if (!same_kind(b, it.value())) {
      throw ConfigError(path, "expected " + std::string(b.type_name()) + ", got " + it.value().type_name());
    }
  }
}

double num(const json& c, const char* block, const char* key) { return c.at(block).at(key).get<double>(); }
int integer(const json& c, const char* block, const char* key) {
  return static_cast<int>(std::llround(c.at(block).at(key).get<double>()));
}

void require(bool ok, const std::string& path, const std::string& what) {
  if (!ok) throw ConfigError(path, what);
}

std::vector<double> scaled(const json& a, double unit) {
  std::vector<double> v;
  for (const auto& x : a) v.push_back(x.get<double>() * unit);
  return v;
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

void write_text(const fs::path& p, const std::string& s) {
  std::ofstream os(p, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + p.string());
  os << s;
}

std::string read_text(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

json detection_json(const pipeline::DetectionFit& f) {
  auto sn = [](const pipeline::SkewNormal& s) {
    return json{{"location", s.location}, {"scale", s.scale}, {"shape", s.shape}, {"amplitude", s.amplitude}};
  };
  return {{"zero", sn(f.zero)},
          {"one", sn(f.one)},
          {"offset", f.offset},
          {"threshold", f.threshold},
          {"fidelity", f.fidelity},
          {"fidelity_stderr", std::isfinite(f.fidelity_stderr) ? json(f.fidelity_stderr) : json()},
          {"reduced_chi2", f.reduced_chi2},
          {"converged", f.converged}};
}

classify::GmmOptions gmm_options(const json& c) {
  classify::GmmOptions o;
  o.n_init = integer(c, "osg_map", "restarts");
  return o;
}

classify::FidelityOptions fidelity_options(const json& c) {
  classify::FidelityOptions o;
  o.min_samples = static_cast<std::size_t>(integer(c, "osg_map", "fidelity_min_samples"));
  o.max_samples = std::max(o.min_samples, o.max_samples);
  o.target_stderr = num(c, "osg_map", "fidelity_target_stderr");
  return o;
}

void classify_points(const json& c, const std::vector<classify::Vec2>& pts, classify::MixtureModel& model,
                     classify::FidelityReport& report, Timings* t) {
  const auto seed = c.at("seed").get<std::uint64_t>();
  auto t0 = std::chrono::steady_clock::now();
  const auto gopt = gmm_options(c);
  model = classify::fit_gmm(pts, integer(c, "osg_map", "components"), stream_seed(seed, 20), gopt);
  if (t) t->add("gmm", t0);
  t0 = std::chrono::steady_clock::now();
  report = classify::fidelity(model, stream_seed(seed, 21), fidelity_options(c));
  if (t) t->add("fidelity", t0);
  const int nb = integer(c, "osg_map", "bootstrap");
  if (nb > 0) {
    t0 = std::chrono::steady_clock::now();
    const auto bs = classify::bootstrap_errors(pts, model, nb, stream_seed(seed, 22), gopt);
    for (std::size_t k = 0; k < report.regions.size(); ++k) report.regions[k].bootstrap_stderr = bs.stderr_fidelity[k];
    if (t) t->add("bootstrap", t0);
  }
}

std::string regions_csv(const std::string& hash, const classify::FidelityReport& r) {
  std::ostringstream os;
  os << "# schema_version=1\n# config_hash=" << hash << "\n"
     << "region,weight,center_x_m,center_y_m,distance_m,projection_m,sigma_major_m,sigma_minor_m,fidelity,"
        "mc_stderr,bootstrap_stderr,false_positive,missed\n";
  for (const auto& g : r.regions) {
    os << g.name;
    for (double v : {g.weight, g.center.x(), g.center.y(), g.distance, g.projection, g.sigma_major, g.sigma_minor,
                     g.fidelity, g.mc_stderr, g.bootstrap_stderr, g.false_positive, g.missed}) {
      os << ',' << fmt("%.9e", v);
    }
    os << '\n';
  }
  return os.str();
}

std::string locations_csv(const std::string& hash, const OsgMapResult& r) {
  std::ostringstream os;
  os << "# schema_version=1\n# config_hash=" << hash << "\nx_m,y_m,m_f,region\n";
  for (std::size_t i = 0; i < r.points.size(); ++i) {
    os << fmt("%.9e", r.points[i].x()) << ',' << fmt("%.9e", r.points[i].y()) << ',' << r.truth_m[i].str() << ','
       << r.model.labels[static_cast<std::size_t>(r.model.assign(r.points[i]))].name() << '\n';
  }
  return os.str();
}

void keep_frame(const fs::path& dir, const std::string& experiment, std::size_t i, const shots::Shot& s) {
  char name[32];
  std::snprintf(name, sizeof name, "shot_%06zu", i);
  camera::save_frame(dir / name, s.frame, {{"experiment", experiment}, {"index", i}});
}

}  // namespace

const std::vector<Param>& parameter_registry() {
  static const std::vector<Param> reg = build_registry();
  return reg;
}

json default_config() {
  json c = json::object();
  for (const auto& p : parameter_registry()) c[pointer(p.path)] = p.value;
  return c;
}

json merge_config(const json& base, const json& overrides) {
  if (!overrides.is_object()) throw ConfigError("", "config must be a JSON object");
  check_leaves(overrides, default_config(), "");
  json out = base;
  out.merge_patch(overrides);
  return out;
}

json apply_set(const json& config, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("", "expected key=value, got '" + assignment + "'");
  const std::string key = assignment.substr(0, eq);
  const std::string text = assignment.substr(eq + 1);
  json value = json::parse(text, nullptr, false);
  if (value.is_discarded()) value = text;
  json patch = json::object();
  if (key == "experiment") {
    patch["experiment"] = value;
  } else {
    patch[pointer(key)] = value;
  }
  return merge_config(config, patch);
}

void validate_config(const json& c) {
  check_leaves(c, default_config(), "");
  const json d = default_config();
  for (const auto& p : parameter_registry()) {
    if (!c.contains(pointer(p.path))) throw ConfigError(p.path, "missing");
  }
  if (c.contains("experiment")) {
    const auto& e = c.at("experiment");
    require(e.is_string() && std::find(kExperiments.begin(), kExperiments.end(), e.get<std::string>()) != kExperiments.end(),
            "experiment", "must be one of imaging-scan, osg-map, quench, release-recapture, analyze");
  }
  require(c.at("seed").get<double>() >= 0, "seed", "must be >= 0");
  for (const char* k : {"waist_um", "wavelength_nm", "depth_uK"}) require(num(c, "tweezer", k) > 0, std::string("tweezer.") + k, "must be > 0");
  for (const char* k : {"waist_z_um", "waist_y_um", "wavelength_nm", "depth_uK"})
    require(num(c, "light_sheet", k) > 0, std::string("light_sheet.") + k, "must be > 0");
  require(num(c, "source", "temperature_nK") > 0, "source.temperature_nK", "must be > 0");
  const auto mode = c.at("source").at("mode").get<std::string>();
  require(mode == "classical" || mode == "ground_state", "source.mode", "must be classical or ground_state");
  for (const char* k : {"power_mW", "waist_um", "wavelength_nm", "pulse_us", "dt_pulse_ns", "dt_expansion_ns"})
    require(num(c, "osg", k) > 0, std::string("osg.") + k, "must be > 0");
  require(num(c, "osg", "expansion_us") >= 0, "osg.expansion_us", "must be >= 0");
  require(std::abs(num(c, "osg", "light_shift_sign")) == 1.0, "osg.light_shift_sign", "must be +1 or -1");
  require(num(c, "osg", "pulse_scattering_rate") >= 0, "osg.pulse_scattering_rate", "must be >= 0");
  require(num(c, "imaging", "duration_us") > 0, "imaging.duration_us", "must be > 0");
  const double b = num(c, "imaging", "dark_branching");
  require(b >= 0 && b < 1, "imaging.dark_branching", "must lie in [0, 1)");
  const double ce = num(c, "imaging", "collection_efficiency");
  require(ce > 0 && ce <= 1, "imaging.collection_efficiency", "must lie in (0, 1]");
  const auto pat = c.at("imaging").at("pattern").get<std::string>();
  require(pat == "isotropic" || pat == "dipole", "imaging.pattern", "must be isotropic or dipole");
  for (const char* k : {"rows", "cols", "osg_rows", "osg_cols"}) require(integer(c, "camera", k) >= 16, std::string("camera.") + k, "must be >= 16");
  for (const char* k : {"imaging_scan", "osg_map"}) {
    const double p = num(c, k, "fill_probability");
    require(p > 0 && p < 1, std::string(k) + ".fill_probability", "must lie in (0, 1)");
  }
  const auto& times = c.at("imaging_scan").at("times_us");
  require(!times.empty(), "imaging_scan.times_us", "must not be empty");
  for (const auto& t : times) require(t.is_number() && t.get<double>() > 0, "imaging_scan.times_us", "times must be > 0");
  const auto& w = c.at("osg_map").at("spin_weights");
  require(w.size() == 10, "osg_map.spin_weights", "needs 10 weights (m = +9/2 .. -9/2)");
  double ws = 0.0;
  for (const auto& x : w) {
    require(x.is_number() && x.get<double>() >= 0, "osg_map.spin_weights", "weights must be >= 0");
    ws += x.get<double>();
  }
  require(ws > 0, "osg_map.spin_weights", "weights must not all be zero");
  const int k = integer(c, "osg_map", "components");
  require(k >= 1 && k <= 5, "osg_map.components", "must lie in [1, 5]");
  require(integer(c, "osg_map", "shots") >= 1, "osg_map.shots", "must be >= 1");
  require(integer(c, "imaging_scan", "shots") >= 1, "imaging_scan.shots", "must be >= 1");
  const int nb = integer(c, "osg_map", "bootstrap");
  require(nb == 0 || nb >= 100, "osg_map.bootstrap", "must be 0 or >= 100");
  for (const auto& t : c.at("quench").at("times_ms"))
    require(t.is_number() && t.get<double>() >= 0, "quench.times_ms", "times must be >= 0");
  require(num(c, "quench", "dt_us") > 0, "quench.dt_us", "must be > 0");
  for (const auto& t : c.at("release_recapture").at("times_us"))
    require(t.is_number() && t.get<double>() >= 0, "release_recapture.times_us", "times must be >= 0");
  require(integer(c, "release_recapture", "atoms") >= 1, "release_recapture.atoms", "must be >= 1");
  require(num(c, "release_recapture", "fit_lo_nK") > 0 && num(c, "release_recapture", "fit_hi_nK") > num(c, "release_recapture", "fit_lo_nK"),
          "release_recapture.fit_hi_nK", "needs 0 < fit_lo_nK < fit_hi_nK");
  try {
    analysis_from(c).validate();
    free_space_from(c).camera.validate();
    osg_shot_from(c).camera.validate();
  } catch (const std::invalid_argument& e) {
    throw ConfigError("", e.what());
  }
}

std::uint64_t fnv1a(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : bytes) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string config_hash(const json& config) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(fnv1a(config.dump())));
  return buf;
}

shots::Apparatus apparatus_from(const json& c) {
  auto a = shots::default_apparatus();
  auto& tw = a.tweezer;
  tw.beam.waist_u = tw.beam.waist_v = num(c, "tweezer", "waist_um") * 1e-6;
  tw.beam.wavelength = num(c, "tweezer", "wavelength_nm") * 1e-9;
  tw.depth = constants::boltzmann * num(c, "tweezer", "depth_uK") * 1e-6;

  auto& ls = a.light_sheet;
  ls.beam.waist_u = num(c, "light_sheet", "waist_z_um") * 1e-6;
  ls.beam.waist_v = num(c, "light_sheet", "waist_y_um") * 1e-6;
  ls.beam.wavelength = num(c, "light_sheet", "wavelength_nm") * 1e-9;
  ls.depth = constants::boltzmann * num(c, "light_sheet", "depth_uK") * 1e-6;

  auto& o = a.osg;
  o.beam.power = num(c, "osg", "power_mW") * 1e-3;
  o.beam.waist_u = o.beam.waist_v = num(c, "osg", "waist_um") * 1e-6;
  o.beam.center = Eigen::Vector3d(0.0, -num(c, "osg", "offset_um") * 1e-6, 0.0);
  o.beam.wavelength = num(c, "osg", "wavelength_nm") * 1e-9;
  o.pol.alpha_scalar_au = num(c, "osg", "alpha_scalar_au");
  o.pol.alpha_tensor_au = num(c, "osg", "alpha_tensor_au");
  o.light_shift_sign = num(c, "osg", "light_shift_sign");
  return a;
}

mc::ThermalSource source_from(const json& c) {
  mc::ThermalSource s;
  s.trap = apparatus_from(c).tweezer;
  s.temperature = num(c, "source", "temperature_nK") * 1e-9;
  s.mode = c.at("source").at("mode").get<std::string>() == "ground_state" ? mc::SamplingMode::GroundStateWigner
                                                                          : mc::SamplingMode::ClassicalBoltzmann;
  s.crop_unbound = c.at("source").at("crop_unbound").get<bool>();
  return s;
}

namespace {

void fill_imaging(mc::ImagingParams& im, const json& c) {
  im.duration = num(c, "imaging", "duration_us") * 1e-6;
  im.saturation = num(c, "imaging", "saturation");
  im.dark_branching = num(c, "imaging", "dark_branching");
  im.collection_efficiency = num(c, "imaging", "collection_efficiency");
  im.alternation_period = num(c, "imaging", "alternation_ns") * 1e-9;
  im.pattern = c.at("imaging").at("pattern").get<std::string>() == "dipole" ? mc::EmissionPattern::Dipole
                                                                           : mc::EmissionPattern::Isotropic;
  im.max_dt = num(c, "imaging", "max_dt_us") * 1e-6;
}

void fill_camera(camera::CameraParams& cam, const json& c) {
  cam.gain_over_readout = num(c, "camera", "gain_over_readout");
  cam.readout_sigma = num(c, "camera", "readout_sigma");
  cam.cic_rate = num(c, "camera", "cic_rate");
  cam.bias = num(c, "camera", "bias");
  cam.pixel_pitch = num(c, "camera", "pixel_pitch_um") * 1e-6;
  cam.magnification = num(c, "camera", "magnification");
  cam.quantum_efficiency = num(c, "camera", "quantum_efficiency");
  cam.psf_sigma = num(c, "camera", "psf_sigma_nm") * 1e-9;
  cam.defocus_slope = num(c, "camera", "defocus_slope");
}

}  // namespace

shots::FreeSpaceConfig free_space_from(const json& c) {
  auto cfg = shots::default_free_space(apparatus_from(c));
  cfg.source = source_from(c);
  cfg.time_of_flight = num(c, "imaging", "time_of_flight_us") * 1e-6;
  fill_imaging(cfg.imaging, c);
  fill_camera(cfg.camera, c);
  cfg.camera.rows = integer(c, "camera", "rows");
  cfg.camera.cols = integer(c, "camera", "cols");
  cfg.fill_probability = num(c, "imaging_scan", "fill_probability");
  return cfg;
}

shots::OsgShotConfig osg_shot_from(const json& c) {
  auto cfg = shots::default_osg_shot(apparatus_from(c));
  cfg.source = source_from(c);
  cfg.sequence.pulse_time = num(c, "osg", "pulse_us") * 1e-6;
  cfg.sequence.expansion_time = num(c, "osg", "expansion_us") * 1e-6;
  cfg.sequence.dt_pulse = num(c, "osg", "dt_pulse_ns") * 1e-9;
  cfg.sequence.dt_expansion = num(c, "osg", "dt_expansion_ns") * 1e-9;
  cfg.sequence.pulse_scattering_rate = num(c, "osg", "pulse_scattering_rate");
  fill_imaging(cfg.imaging, c);
  fill_camera(cfg.camera, c);
  cfg.camera.rows = integer(c, "camera", "osg_rows");
  cfg.camera.cols = integer(c, "camera", "osg_cols");
  cfg.camera.center = Eigen::Vector2d(0.0, num(c, "camera", "osg_center_y_um") * 1e-6);
  cfg.fill_probability = num(c, "osg_map", "fill_probability");
  const auto& w = c.at("osg_map").at("spin_weights");
  for (std::size_t i = 0; i < cfg.spin_weights.size(); ++i) cfg.spin_weights[i] = w.at(i).get<double>();
  return cfg;
}

pipeline::AnalysisConfig analysis_from(const json& c) {
  pipeline::AnalysisConfig a;
  a.binarize_k = num(c, "analysis", "binarize_k");
  a.sigma_major = num(c, "analysis", "sigma_major_px");
  a.sigma_minor = num(c, "analysis", "sigma_minor_px");
  a.kernel_angle = num(c, "analysis", "kernel_angle_deg") * constants::pi / 180.0;
  a.kernel_truncate = num(c, "analysis", "kernel_truncate");
  a.border_band = integer(c, "analysis", "border_band_px");
  a.histogram_bins = integer(c, "analysis", "histogram_bins");
  a.min_shots = integer(c, "analysis", "min_shots");
  a.bootstrap = integer(c, "analysis", "bootstrap");
  a.seed = stream_seed(c.at("seed").get<std::uint64_t>(), 10);
  return a;
}

spin::FieldSchedule schedule_from(const json& c) {
  spin::FieldSchedule s;
  s.b_guide = Eigen::Vector3d(num(c, "quench", "b_guide_G"), 0.0, 0.0);
  s.b_quench_amplitude = num(c, "quench", "b_quench_G");
  s.rise_time_tau = num(c, "quench", "rise_time_ms") * 1e-3;
  s.detection_axis_angle = num(c, "quench", "detection_angle_deg") * constants::pi / 180.0;
  s.detection_axis_azimuth = num(c, "quench", "detection_azimuth_deg") * constants::pi / 180.0;
  return s;
}

void Timings::add(const std::string& name, std::chrono::steady_clock::time_point since) {
  stages.emplace_back(name, std::chrono::duration<double>(std::chrono::steady_clock::now() - since).count());
}

OsgMapResult run_osg_map(const json& c, Timings* t, const fs::path& frames_dir) {
  OsgMapResult r;
  const auto cfg = osg_shot_from(c);
  const auto analysis = analysis_from(c);
  const auto seed = stream_seed(c.at("seed").get<std::uint64_t>(), 2);
  auto t0 = std::chrono::steady_clock::now();
  std::function<void(std::size_t, const shots::Shot&)> keep;
  if (!frames_dir.empty()) keep = [&](std::size_t i, const shots::Shot& s) { keep_frame(frames_dir, "osg-map", i, s); };
  r.shots = shots::run_shots(
      static_cast<std::size_t>(integer(c, "osg_map", "shots")),
      [&](std::size_t i) { return shots::simulate_osg_shot(cfg, seed, i); }, analysis, nullptr, keep);
  if (t) t->add("simulate", t0);
  t0 = std::chrono::steady_clock::now();
  std::vector<double> peaks;
  for (const auto& s : r.shots) peaks.push_back(s.loc.peak_value);
  r.detection = pipeline::fit_detection_histogram(peaks, analysis);
  for (const auto& s : r.shots) {
    if (s.loc.peak_value > r.detection.threshold) {
      r.points.push_back(s.loc.object);
      r.truth_m.push_back(s.m_f);
    }
  }
  if (t) t->add("detection", t0);
  classify_points(c, r.points, r.model, r.report, t);
  return r;
}

AnalyzeResult analyze_directory(const fs::path& dir, const json& c) {
  if (!fs::is_directory(dir)) throw std::runtime_error("not a directory: " + dir.string());
  std::vector<fs::path> sidecars;
  for (const auto& e : fs::directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().extension() == ".json") sidecars.push_back(e.path());
  }
  std::sort(sidecars.begin(), sidecars.end(), [](const fs::path& a, const fs::path& b) {
    return a.filename().string() < b.filename().string();
  });
  AnalyzeResult r;
  std::vector<camera::Frame> frames;
  std::vector<bool> osg;
  for (const auto& p : sidecars) {
    try {
      auto lf = camera::load_frame(p);
      osg.push_back(lf.sidecar.value("metadata", json::object()).value("experiment", "") == "osg-map");
      frames.push_back(std::move(lf.frame));
    } catch (const std::exception& e) {
      r.warnings.push_back(p.filename().string() + ": " + e.what());
    }
  }
  if (frames.empty()) throw std::runtime_error("no readable frames in " + dir.string());
  r.frames = frames.size();
  const auto analysis = analysis_from(c);
  const auto locs = pipeline::analyze_frames(frames, analysis);
  std::vector<double> peaks;
  for (const auto& l : locs) peaks.push_back(l.peak_value);
  r.detection = pipeline::fit_detection_histogram(peaks, analysis);
  if (std::count(osg.begin(), osg.end(), true) == static_cast<long>(osg.size())) {
    std::vector<classify::Vec2> pts;
    for (const auto& l : locs)
      if (l.peak_value > r.detection.threshold) pts.push_back(l.object);
    classify_points(c, pts, r.model, r.report, nullptr);
    r.classified = true;
  }
  return r;
}

RunResult run(const json& config, const fs::path& output_root) {
  validate_config(config);
  if (!config.contains("experiment")) throw ConfigError("experiment", "missing");
  const std::string experiment = config.at("experiment").get<std::string>();
  const std::string hash = config_hash(config);
  const fs::path final_dir = output_root / hash.substr(0, 12);
  const fs::path partial = output_root / (hash.substr(0, 12) + ".partial");
  fs::create_directories(output_root);
  fs::remove_all(partial);
  fs::create_directories(partial);

  Timings timings;
  std::vector<std::string> files;
  json results = json::object();
  auto put = [&](const std::string& name, const std::string& text) {
    write_text(partial / name, text);
    files.push_back(name);
  };
  const std::string header = "# config_hash=" + hash + "\n";

  try {
    const auto seed = config.at("seed").get<std::uint64_t>();
    if (experiment == "imaging-scan") {
      const auto times = scaled(config.at("imaging_scan").at("times_us"), 1e-6);
      auto cfg = free_space_from(config);
      const auto analysis = analysis_from(config);
      const auto t0 = std::chrono::steady_clock::now();
      const auto rows = shots::imaging_time_scan(times, static_cast<std::size_t>(integer(config, "imaging_scan", "shots")),
                                                 cfg, analysis, stream_seed(seed, 1));
      timings.add("scan", t0);
      std::ostringstream os;
      os << header;
      shots::write_scan_csv(os, rows);
      put("detection.csv", os.str());
      if (config.at("imaging_scan").at("save_frames").get<bool>()) {
        // frames of the scan point closest to the configured imaging time
        const double t_img = cfg.imaging.duration;
        std::size_t ti = 0;
        for (std::size_t i = 1; i < times.size(); ++i)
          if (std::abs(times[i] - t_img) < std::abs(times[ti] - t_img)) ti = i;
        cfg.imaging.duration = times[ti];
        const auto s = stream_seed(stream_seed(seed, 1), ti);
        fs::create_directories(partial / "frames");
        shots::run_shots(
            static_cast<std::size_t>(integer(config, "imaging_scan", "shots")),
            [&](std::size_t i) { return shots::simulate_free_space_shot(cfg, s, i); }, analysis, nullptr,
            [&](std::size_t i, const shots::Shot& sh) { keep_frame(partial / "frames", experiment, i, sh); });
        files.push_back("frames/");
      }
      json best = json::object();
      std::size_t bi = 0;
      for (std::size_t i = 1; i < rows.size(); ++i)
        if (std::isnan(rows[bi].fit.fidelity) || rows[i].fit.fidelity > rows[bi].fit.fidelity) bi = i;
      std::size_t failed = 0;
      for (const auto& r : rows) failed += r.fit_error.empty() ? 0 : 1;
      results = {{"best_time_s", rows[bi].time}, {"best_fidelity", rows[bi].fit.fidelity}, {"failed_fits", failed}};
    } else if (experiment == "osg-map") {
      fs::path frames;
      if (config.at("osg_map").at("save_frames").get<bool>()) {
        frames = partial / "frames";
        fs::create_directories(frames);
      }
      const auto r = run_osg_map(config, &timings, frames);
      if (!frames.empty()) files.push_back("frames/");
      json doc = {{"schema_version", 1},
                  {"config_hash", hash},
                  {"detection", detection_json(r.detection)},
                  {"atoms_located", r.points.size()},
                  {"model", classify::to_json(r.model)},
                  {"fidelity", classify::to_json(r.report)}};
      put("regions.json", doc.dump(1) + "\n");
      put("regions.csv", regions_csv(hash, r.report));
      put("locations.csv", locations_csv(hash, r));
      results = {{"detection_fidelity", r.detection.fidelity}};
      for (const auto& g : r.report.regions) results["fidelity_" + g.name] = g.fidelity;
    } else if (experiment == "quench") {
      const auto sched = schedule_from(config);
      sched.validate();
      const auto times = scaled(config.at("quench").at("times_ms"), 1e-3);
      spin::QuenchOptions q;
      q.evolve.dt = num(config, "quench", "dt_us") * 1e-6;
      q.p_prep = num(config, "quench", "p_prep");
      const auto t0 = std::chrono::steady_clock::now();
      const auto recs = spin::quench_experiment(sched, times, q);
      timings.add("evolve", t0);
      std::ostringstream os;
      os << header;
      spin::write_population_csv(os, spin::make_spin_operators(kSr87Spin), recs);
      put("quench.csv", os.str());
    } else if (experiment == "release-recapture") {
      const auto src = source_from(config);
      const auto times = scaled(config.at("release_recapture").at("times_us"), 1e-6);
      const auto n = static_cast<std::size_t>(integer(config, "release_recapture", "atoms"));
      mc::RecaptureOptions ro;
      ro.gravity = config.at("release_recapture").at("gravity").get<bool>();
      auto t0 = std::chrono::steady_clock::now();
      const auto pts = mc::release_recapture(src, times, n, stream_seed(seed, 3), ro);
      timings.add("simulate", t0);
      t0 = std::chrono::steady_clock::now();
      const auto fit = mc::fit_recapture_temperature(pts, src, n, stream_seed(seed, 4),
                                                     num(config, "release_recapture", "fit_lo_nK") * 1e-9,
                                                     num(config, "release_recapture", "fit_hi_nK") * 1e-9, ro);
      timings.add("fit", t0);
      std::ostringstream os;
      os << header;
      mc::write_recapture_csv(os, pts);
      put("recapture.csv", os.str());
      results = {{"fitted_temperature_K", fit.temperature}, {"chi2", fit.chi2}};
    } else if (experiment == "analyze") {
      const auto dir = config.at("analyze").at("frames_dir").get<std::string>();
      if (dir.empty()) throw ConfigError("analyze.frames_dir", "required for analyze");
      const auto t0 = std::chrono::steady_clock::now();
      const auto r = analyze_directory(dir, config);
      timings.add("analyze", t0);
      json doc = {{"schema_version", 1},
                  {"config_hash", hash},
                  {"frames", r.frames},
                  {"skipped", r.warnings},
                  {"detection", detection_json(r.detection)}};
      put("detection.json", doc.dump(1) + "\n");
      if (r.classified) {
        json reg = {{"schema_version", 1},
                    {"config_hash", hash},
                    {"model", classify::to_json(r.model)},
                    {"fidelity", classify::to_json(r.report)}};
        put("regions.json", reg.dump(1) + "\n");
      }
      results = {{"frames", r.frames}, {"skipped", r.warnings.size()}};
    }

    json inventory = json::array();
    for (const auto& f : files) {
      if (f.back() == '/') {
        inventory.push_back({{"name", f}});
        continue;
      }
      const std::string bytes = read_text(partial / f);
      char h[17];
      std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(fnv1a(bytes)));
      inventory.push_back({{"name", f}, {"bytes", bytes.size()}, {"fnv1a", h}});
    }
    json stages = json::array();
    for (const auto& [name, s] : timings.stages) stages.push_back({{"stage", name}, {"seconds", s}});
    json manifest = {{"schema_version", 1},
                     {"experiment", experiment},
                     {"config_hash", hash},
                     {"seed", config.at("seed")},
                     {"code_version", SRSPIN_VERSION},
                     {"config", config},
                     {"results", results},
                     {"timings", stages},
                     {"outputs", inventory}};
    write_text(partial / "manifest.json", manifest.dump(1) + "\n");
    fs::remove_all(final_dir);
    fs::rename(partial, final_dir);
    return {final_dir, manifest};
  } catch (...) {
    std::error_code ec;
    fs::remove_all(partial, ec);
    throw;
  }
}

json config_from_manifest(const fs::path& manifest_path) {
  std::ifstream is(manifest_path);
  if (!is) throw ConfigError("", "cannot read manifest " + manifest_path.string());
  json m = json::parse(is, nullptr, false);
  if (m.is_discarded() || !m.contains("config")) throw ConfigError("", "not a run manifest: " + manifest_path.string());
  return m.at("config");
}

fs::path default_output_root() {
  const char* env = std::getenv("SRSPIN_OUTPUT_ROOT");
  return (env && *env) ? fs::path(env) : fs::path("runs");
}

std::string describe(const json& config) {
  std::ostringstream os;
  std::size_t w = 0;
  for (const auto& p : parameter_registry()) w = std::max(w, p.path.size());
  for (const auto& p : parameter_registry()) {
    std::string v = config.at(pointer(p.path)).dump();
    if (v.size() > 40) v = v.substr(0, 37) + "...";
    os << std::left << std::setw(static_cast<int>(w) + 2) << p.path << std::setw(42) << v << std::setw(14)
       << p.unit << p.source << '\n';
  }
  return os.str();
}

}  // namespace srspin::app
