// porosolve: scenario runner and comparison harness for the reduced-order
// porous-alloy damage toolkit.

#include "poro/acceptance.hpp"
#include "poro/meshgen.hpp"
#include "poro/runner.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <exception>
#include <string>

int main(int argc, char** argv) {
  CLI::App app{"porosolve: desk-scale reduced-order multiscale damage toolkit"};
  app.require_subcommand(1);

  std::string config, out_dir = "out", scheme;
  std::uint64_t seed = 0;
  int threads = 1;

  auto add_run_opts = [&](CLI::App* cmd, bool needs_config = true) {
    if (needs_config)
      cmd->add_option("--config", config, "scenario config (JSON)")->required();
    cmd->add_option("--out", out_dir, "output directory");
    cmd->add_option("--seed", seed, "seed override");
    cmd->add_option("--threads", threads, "worker count (results are identical)");
    cmd->add_option("--scheme", scheme,
                    "integrator override: implicit|implex|caf-ie|aaf-ie");
  };

  CLI::App* dns = app.add_subcommand("dns", "full-mesh run (DNS oracle)");
  add_run_opts(dns);
  CLI::App* rom = app.add_subcommand("rom", "clustered reduced-order run");
  add_run_opts(rom);
  CLI::App* multi = app.add_subcommand("multiscale", "concurrent multiscale run");
  add_run_opts(multi);
  CLI::App* preview =
      app.add_subcommand("cluster-preview", "write the static decomposition");
  add_run_opts(preview);

  std::string tier = "fast", scenarios_dir = "scenarios";
  CLI::App* accept = app.add_subcommand("accept", "run the acceptance suite");
  accept->add_option("--tier", tier, "fast|full");
  accept->add_option("--scenarios", scenarios_dir, "bundled scenario directory");
  accept->add_option("--out", out_dir, "output directory");

  std::string mesh_dir = "scenarios/meshes";
  CLI::App* meshgen =
      app.add_subcommand("meshgen", "regenerate the bundled mesh library");
  meshgen->add_option("--out", mesh_dir, "mesh output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (meshgen->parsed()) {
      poro::write_bundled_meshes(mesh_dir);
      std::printf("bundled meshes written to %s\n", mesh_dir.c_str());
      return 0;
    }
    if (accept->parsed()) {
      if (tier != "fast" && tier != "full") {
        std::fprintf(stderr, "config error: --tier must be fast or full\n");
        return 2;
      }
      return poro::acceptance_suite(tier, scenarios_dir, out_dir) == 0 ? 0 : 1;
    }

    std::string pipeline;
    if (dns->parsed()) pipeline = "dns";
    if (rom->parsed()) pipeline = "rom";
    if (multi->parsed()) pipeline = "multiscale";
    if (preview->parsed()) pipeline = "cluster-preview";

    poro::RunOverrides ov;
    ov.scheme = scheme;
    ov.seed = seed;
    ov.threads = threads;
    const poro::ScenarioConfig cfg = poro::load_scenario(config);
    const poro::RunRecord rec = poro::run_scenario(cfg, pipeline, out_dir, ov);
    if (!rec.completed) {
      std::fprintf(stderr, "solver error: %s\n", rec.message.c_str());
      return 3;
    }
    std::printf("%s: %zu steps, UTS %.6g, toughness %.6g (artifacts in %s)\n",
                rec.scenario_name.c_str(), rec.curve.size(), rec.uts,
                rec.toughness, out_dir.c_str());
    return 0;
  } catch (const poro::ConfigError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const poro::MeshError& e) {
    std::fprintf(stderr, "config error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "solver error: %s\n", e.what());
    return 3;
  }
}
