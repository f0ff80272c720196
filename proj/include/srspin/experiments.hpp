#pragma once

#include <chrono>
#include <cstdint>
#include <filesystem>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "srspin/classifier.hpp"
#include "srspin/montecarlo.hpp"
#include "srspin/pipeline.hpp"
#include "srspin/shots.hpp"
#include "srspin/spinsim.hpp"

// Run configuration, the five experiments end to end, and run directories.
namespace srspin::app {

using json = nlohmann::json;

/// Bad config: unknown key, wrong type or out-of-range value. `path` is the
/// JSON path of the offending field.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& path, const std::string& what)
      : std::runtime_error(path.empty() ? what : path + ": " + what), path_(path) {}
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

struct Param {
  std::string path;  // dotted, e.g. "tweezer.waist_um"
  json value;
  std::string unit;
  std::string source;  // where the default comes from
};

/// Every configurable parameter with its default and provenance.
const std::vector<Param>& parameter_registry();

inline const std::vector<std::string> kExperiments{"imaging-scan", "osg-map", "quench", "release-recapture",
                                                   "analyze"};

/// Defaults as a nested object (no "experiment" key).
json default_config();

/// Overlays `overrides` on `base`; every leaf must exist in the registry and
/// keep its type.
json merge_config(const json& base, const json& overrides);

/// "a.b=value": value is parsed as JSON, falling back to a plain string.
json apply_set(const json& config, const std::string& assignment);

/// Checks types and ranges of a full config; throws ConfigError.
void validate_config(const json& config);

/// FNV-1a 64 of the compact dump (keys are sorted, so this is canonical).
std::uint64_t fnv1a(const std::string& bytes);
std::string config_hash(const json& config);

// Typed views of a validated config.
shots::Apparatus apparatus_from(const json& c);
shots::FreeSpaceConfig free_space_from(const json& c);
shots::OsgShotConfig osg_shot_from(const json& c);
pipeline::AnalysisConfig analysis_from(const json& c);
spin::FieldSchedule schedule_from(const json& c);
mc::ThermalSource source_from(const json& c);

struct Timings {
  std::vector<std::pair<std::string, double>> stages;  // seconds
  void add(const std::string& name, std::chrono::steady_clock::time_point since);
};

struct OsgMapResult {
  std::vector<shots::ShotSummary> shots;
  pipeline::DetectionFit detection;
  std::vector<classify::Vec2> points;     // detected atom locations
  std::vector<HalfInt> truth_m;           // matching true m_F
  classify::MixtureModel model;
  classify::FidelityReport report;
};

OsgMapResult run_osg_map(const json& c, Timings* timings = nullptr,
                         const std::filesystem::path& frames_dir = {});

struct AnalyzeResult {
  std::size_t frames = 0;
  std::vector<std::string> warnings;  // skipped files
  pipeline::DetectionFit detection;
  bool classified = false;
  classify::MixtureModel model;
  classify::FidelityReport report;
};

/// Detection fit over every readable sidecar in `dir`; frames are ordered by
/// file name so the result does not depend on directory order. Frames whose
/// sidecars carry "experiment": "osg-map" are also classified.
AnalyzeResult analyze_directory(const std::filesystem::path& dir, const json& c);

struct RunResult {
  std::filesystem::path directory;
  json manifest;
};

/// Runs config["experiment"] into <output_root>/<hash prefix>. Output is built
/// in a ".partial" sibling and renamed on success; on failure it is removed.
RunResult run(const json& config, const std::filesystem::path& output_root);

/// Config stored in a manifest written by run().
json config_from_manifest(const std::filesystem::path& manifest_path);

/// $SRSPIN_OUTPUT_ROOT, or ./runs.
std::filesystem::path default_output_root();

/// Table of path, value, unit and source for describe-config.
std::string describe(const json& config);

}  // namespace srspin::app
