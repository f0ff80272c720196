#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <fstream>
#include <sstream>

#include "srspin/experiments.hpp"

using namespace srspin;
using namespace srspin::app;

namespace fs = std::filesystem;

namespace {
fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("srspin_exp_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::ostringstream os;
  os << is.rdbuf();
  return os.str();
}

json small_quench() {
  auto c = default_config();
  c["experiment"] = "quench";
  c["quench"]["times_ms"] = json::array({0.0, 0.5, 1.0, 2.0});
  return c;
}

json small_scan() {
  auto c = default_config();
  c["experiment"] = "imaging-scan";
  c["imaging_scan"]["times_us"] = json::array({17.5});
  c["imaging_scan"]["shots"] = 600;
  c["imaging_scan"]["save_frames"] = true;
  return c;
}

int cli(const std::string& args) {
  const char* exe = std::getenv("SRSPIN_CLI");
  REQUIRE(exe != nullptr);
  const int rc = std::system((std::string(exe) + " " + args + " >/dev/null 2>&1").c_str());
  return WIFEXITED(rc) ? WEXITSTATUS(rc) : -1;
}

std::size_t entries(const fs::path& dir) {
  return static_cast<std::size_t>(std::distance(fs::directory_iterator(dir), fs::directory_iterator{}));
}
}  // namespace

TEST_CASE("config merge, overrides and errors") {
  const auto d = default_config();
  validate_config(d);
  CHECK(d["osg"]["power_mW"] == 2.8);

  const auto m = merge_config(d, json{{"osg", {{"power_mW", 3.0}}}});
  CHECK(m["osg"]["power_mW"] == 3.0);
  CHECK(m["osg"]["waist_um"] == d["osg"]["waist_um"]);

  try {
    merge_config(d, json{{"osg", {{"powr_mW", 3.0}}}});
    FAIL("unknown key accepted");
  } catch (const ConfigError& e) {
    CHECK(e.path() == "osg.powr_mW");
  }
  CHECK_THROWS_AS(merge_config(d, json{{"osg", {{"power_mW", "high"}}}}), ConfigError);
  CHECK_THROWS_AS(merge_config(d, json{{"nope", 1}}), ConfigError);

  auto bad = d;
  bad["osg"]["power_mW"] = -1.0;
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
  bad = d;
  bad["experiment"] = "teleport";
  CHECK_THROWS_AS(validate_config(bad), ConfigError);
}

TEST_CASE("--set style assignments") {
  const auto d = default_config();
  CHECK(apply_set(d, "osg.power_mW=3.5")["osg"]["power_mW"] == 3.5);
  CHECK(apply_set(d, "source.mode=ground_state")["source"]["mode"] == "ground_state");
  CHECK(apply_set(d, "quench.times_ms=[0,1]")["quench"]["times_ms"].size() == 2);
  CHECK(apply_set(d, "experiment=quench")["experiment"] == "quench");
  CHECK_THROWS_AS(apply_set(d, "osg.power_mW"), ConfigError);
  CHECK_THROWS_AS(apply_set(d, "osg.nothing=1"), ConfigError);
}

TEST_CASE("config hash and parameter table") {
  const auto d = default_config();
  CHECK(config_hash(d).size() == 16);
  CHECK(config_hash(d) == config_hash(json::parse(d.dump())));
  CHECK(config_hash(d) != config_hash(apply_set(d, "seed=2")));
  CHECK(fnv1a("") == 0xcbf29ce484222325ULL);
  CHECK(fnv1a("a") == 0xaf63dc4c8601ec8cULL);

  const auto table = describe(d);
  for (const auto& p : parameter_registry()) {
    CHECK(table.find(p.path) != std::string::npos);
    CHECK_FALSE(p.source.empty());
  }
}

TEST_CASE("typed views follow the config") {
  auto c = apply_set(default_config(), "tweezer.depth_uK=5");
  const auto a = apparatus_from(c);
  CHECK(a.tweezer.depth / constants::boltzmann == doctest::Approx(5e-6));
  c = apply_set(c, "quench.detection_angle_deg=0");
  CHECK(schedule_from(c).detection_axis_angle == 0.0);
  c = apply_set(c, "analysis.border_band_px=4");
  CHECK(analysis_from(c).effective_border() == 4);
}

TEST_CASE("runs are deterministic and self-describing") {
  const auto root = scratch("determinism");
  const auto c = small_quench();
  const auto r1 = run(c, root);
  CHECK(fs::exists(r1.directory / "quench.csv"));
  CHECK(fs::exists(r1.directory / "manifest.json"));
  CHECK(r1.directory.filename().string() == config_hash(c).substr(0, 12));
  const auto data1 = slurp(r1.directory / "quench.csv");
  CHECK(data1.rfind("# config_hash=" + config_hash(c), 0) == 0);

  const auto m = json::parse(slurp(r1.directory / "manifest.json"));
  CHECK(m["experiment"] == "quench");
  CHECK(m["config"] == c);
  CHECK(m["outputs"][0]["name"] == "quench.csv");
  char h[17];
  std::snprintf(h, sizeof h, "%016llx", static_cast<unsigned long long>(fnv1a(data1)));
  CHECK(m["outputs"][0]["fnv1a"] == h);

  // rerun from the manifest into a second root
  const auto root2 = scratch("determinism2");
  const auto r2 = run(config_from_manifest(r1.directory / "manifest.json"), root2);
  CHECK(slurp(r2.directory / "quench.csv") == data1);

  auto rc = c;
  rc["experiment"] = "release-recapture";
  rc["release_recapture"]["atoms"] = 2000;
  rc["release_recapture"]["times_us"] = json::array({0, 20, 40, 80});
  const auto a = run(rc, root);
  const auto b = run(rc, root2);
  CHECK(slurp(a.directory / "recapture.csv") == slurp(b.directory / "recapture.csv"));
  CHECK(a.manifest["results"] == b.manifest["results"]);
  fs::remove_all(root);
  fs::remove_all(root2);
}

TEST_CASE("failed runs leave nothing behind") {
  const auto root = scratch("failure");
  auto c = default_config();
  c["experiment"] = "analyze";
  CHECK_THROWS_AS(run(c, root), ConfigError);  // no frames_dir
  const auto empty = scratch("empty_frames");
  c["analyze"]["frames_dir"] = empty.string();
  CHECK_THROWS(run(c, root));
  CHECK(entries(root) == 0);
  auto no_exp = default_config();
  CHECK_THROWS_AS(run(no_exp, root), ConfigError);
  fs::remove_all(root);
  fs::remove_all(empty);
}

TEST_CASE("analyze: stored frames, file order and malformed sidecars") {
  const auto root = scratch("analyze");
  const auto scan = run(small_scan(), root);
  const auto frames = scan.directory / "frames";
  REQUIRE(fs::exists(frames));

  const auto c = default_config();
  const auto a = analyze_directory(frames, c);
  CHECK(a.frames == 600);
  CHECK(a.warnings.empty());
  CHECK_FALSE(a.classified);  // imaging-scan frames carry no region information
  CHECK(a.detection.fidelity > 0.9);

  // copy in reverse order and add junk: same answer, junk reported
  const auto copy = scratch("analyze_copy");
  std::vector<fs::path> files;
  for (const auto& e : fs::directory_iterator(frames)) files.push_back(e.path());
  std::sort(files.rbegin(), files.rend());
  for (const auto& f : files) fs::copy_file(f, copy / f.filename());
  std::ofstream(copy / "zz_broken.json") << "{not json";
  const auto b = analyze_directory(copy, c);
  CHECK(b.frames == 600);
  CHECK(b.warnings.size() == 1);
  CHECK(b.detection.fidelity == a.detection.fidelity);
  CHECK(b.detection.threshold == a.detection.threshold);
  fs::remove_all(root);
  fs::remove_all(copy);
}

TEST_CASE("a failed histogram fit is reported per scan row") {
  const auto c = default_config();
  // 0.3 us of light: no one-atom peak, plus a usable point
  const std::vector<double> times{0.3e-6, 15e-6};
  const auto rows = shots::imaging_time_scan(times, 600, free_space_from(c), analysis_from(c), 4);
  REQUIRE(rows.size() == 2);
  CHECK_FALSE(rows[0].fit_error.empty());
  CHECK(std::isnan(rows[0].fit.fidelity));
  CHECK(rows[1].fit_error.empty());
  CHECK(rows[1].fit.fidelity > 0.9);
  std::ostringstream os;
  shots::write_scan_csv(os, rows);
  CHECK(os.str().find(",0\n") != std::string::npos);
}

TEST_CASE("command line exit codes") {
  const auto root = scratch("cli");
  const std::string o = " -o " + root.string();
  CHECK(cli("describe-config") == 0);
  CHECK(cli("describe-config --json --set osg.power_mW=3") == 0);
  CHECK(cli("quench --set quench.times_ms=[0,1]" + o) == 0);
  CHECK(entries(root) == 1);
  CHECK(cli("quench --set osg.bogus=1" + o) == 2);
  CHECK(cli("quench --set osg.power_mW=-2" + o) == 2);
  CHECK(cli("teleport") == 2);
  const auto empty = scratch("cli_empty");
  CHECK(cli("analyze " + empty.string() + o) == 3);
  CHECK(entries(root) == 1);

  const auto first = fs::directory_iterator(root)->path();
  const auto root2 = scratch("cli2");
  CHECK(cli("rerun " + (first / "manifest.json").string() + " -o " + root2.string()) == 0);
  CHECK(slurp(first / "quench.csv") == slurp(root2 / first.filename() / "quench.csv"));
  fs::remove_all(root);
  fs::remove_all(root2);
  fs::remove_all(empty);
}
