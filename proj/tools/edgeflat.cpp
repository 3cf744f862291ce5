// edgeflat <subcommand> --config <file> [--out <dir>]

#include <CLI11.hpp>

#include "edgeflat/runner.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Numerical checks for flat and Ricci-flat metrics with cone singularities along a hypersurface"};
  app.set_version_flag("--version", edgeflat::edgeflat_version);
  app.require_subcommand(1, 1);

  const std::map<std::string, std::string> help = {
      {"background", "build the background metric and emit curvature scans"},
      {"solve", "solve the Monge-Ampere equation by the continuity method"},
      {"verify", "run the a-priori estimate suite on a solved state"},
      {"model-solve", "solve the model Poisson problem on the cone"},
      {"schauder-scan", "empirical Schauder constants over the Hoelder corpus"},
      {"appendix-check", "decay check of the second-order cone quantity"},
  };
  std::string config_path, out_dir;
  for (const auto& name : edgeflat::subcommands()) {
    auto* sub = app.add_subcommand(name, help.at(name));
    sub->add_option("--config", config_path, "run configuration (JSON)")->required()->check(CLI::ExistingFile);
    sub->add_option("--out", out_dir, "output directory (overrides output_dir)");
  }
  CLI11_PARSE(app, argc, argv);
  const std::string name = app.get_subcommands().front()->get_name();

  edgeflat::RunConfig cfg;
  try {
    cfg = edgeflat::load_config(config_path);
  } catch (const std::exception& e) {
    std::cerr << "edgeflat: invalid config: " << e.what() << "\n";
    return 2;
  }
  if (!out_dir.empty()) cfg.output_dir = out_dir;
  try {
    return edgeflat::run_subcommand(name, cfg, cfg.output_dir, {{"cli11", CLI11_VERSION}});
  } catch (const std::exception& e) {
    std::cerr << "edgeflat " << name << ": " << e.what() << "\n";
    return 2;
  }
}
