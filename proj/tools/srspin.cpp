#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "srspin/experiments.hpp"

namespace app = srspin::app;

namespace {

struct Common {
  std::string config_file;
  std::vector<std::string> sets;
  std::optional<std::uint64_t> seed;
  std::string output_root;
};

void add_common(CLI::App* sub, Common& c) {
  sub->add_option("-c,--config", c.config_file, "JSON config file (values override defaults)");
  sub->add_option("--set", c.sets, "override one value, e.g. --set osg.power_mW=3.0 (after the file)")
      ->allow_extra_args(false);
  sub->add_option("--seed", c.seed, "shortcut for --set seed=N");
  sub->add_option("-o,--output-root", c.output_root, "run directory root (default $SRSPIN_OUTPUT_ROOT or ./runs)");
}

// Precedence: defaults < config file < --set (in order) < --seed.
app::json build_config(const Common& c, const std::string& experiment) {
  app::json cfg = app::default_config();
  if (!c.config_file.empty()) {
    std::ifstream is(c.config_file);
    if (!is) throw app::ConfigError("", "cannot read config " + c.config_file);
    app::json file = app::json::parse(is, nullptr, false);
    if (file.is_discarded()) throw app::ConfigError("", "config " + c.config_file + " is not valid JSON");
    cfg = app::merge_config(cfg, file);
  }
  for (const auto& s : c.sets) cfg = app::apply_set(cfg, s);
  if (c.seed) cfg["seed"] = *c.seed;
  if (!experiment.empty()) cfg["experiment"] = experiment;
  app::validate_config(cfg);
  return cfg;
}

std::filesystem::path root_of(const Common& c) {
  return c.output_root.empty() ? app::default_output_root() : std::filesystem::path(c.output_root);
}

int execute(const app::json& cfg, const std::filesystem::path& root) {
  const auto r = app::run(cfg, root);
  std::cout << r.directory.string() << '\n';
  if (!r.manifest.at("results").empty()) std::cout << r.manifest.at("results").dump(1) << '\n';
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App cli{"Spin-resolved single-atom imaging simulator"};
  cli.require_subcommand(1);
  Common common;
  std::string frames_dir, manifest_path;

  for (const auto& name : app::kExperiments) {
    if (name == "analyze") continue;
    add_common(cli.add_subcommand(name, "run the " + name + " experiment"), common);
  }
  auto* analyze = cli.add_subcommand("analyze", "fit detection (and regions) on stored frames");
  add_common(analyze, common);
  analyze->add_option("frames_dir", frames_dir, "directory of .pgm/.json frame pairs")->required();

  auto* describe = cli.add_subcommand("describe-config", "print every parameter with value, unit and source");
  add_common(describe, common);
  bool as_json = false;
  describe->add_flag("--json", as_json, "print the resolved config as JSON instead");

  auto* rerun = cli.add_subcommand("rerun", "repeat a run from its manifest.json");
  rerun->add_option("manifest", manifest_path, "manifest.json of an earlier run")->required();
  rerun->add_option("-o,--output-root", common.output_root, "run directory root");

  try {
    cli.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = cli.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    auto* sub = cli.get_subcommands().front();
    const std::string name = sub->get_name();
    if (name == "describe-config") {
      const auto cfg = build_config(common, "");
      std::cout << (as_json ? cfg.dump(1) + "\n" : app::describe(cfg));
      return 0;
    }
    if (name == "rerun") {
      auto cfg = app::config_from_manifest(manifest_path);
      app::validate_config(cfg);
      return execute(cfg, root_of(common));
    }
    auto cfg = build_config(common, name);
    if (name == "analyze") {
      cfg["analyze"]["frames_dir"] = frames_dir;
    }
    return execute(cfg, root_of(common));
  } catch (const app::ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 3;
  }
}
