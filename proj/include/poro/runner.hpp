#pragma once

// Executes a scenario end to end (dns | rom | multiscale | cluster-preview)
// and writes the run artifacts: curve.csv, report.json, clusters.csv and
// fields_<step>.vtk.

#include "poro/runio.hpp"
#include "poro/scenario.hpp"

#include <string>

namespace poro {

struct RunOverrides {
  std::string scheme;     // empty: use the config
  std::uint64_t seed = 0; // 0: use the config
  int threads = 1;
  bool write_artifacts = true;
};

// pipeline: "dns" (full mesh), "rom" (clustered), "multiscale",
// "cluster-preview". Throws ConfigError (exit 2) or SolverError family; a
// solver failure still writes the report and returns completed = false.
RunRecord run_scenario(const ScenarioConfig& cfg, const std::string& pipeline,
                       const std::string& out_dir, const RunOverrides& ov = {});

} // namespace poro
