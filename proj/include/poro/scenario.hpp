#pragma once

// Scenario configuration: a JSON document (schema documented in
// `scenario.schema` at the repository root) describing mesh, material, load
// path, integrator, clustering, nonlocal and output options.

#include "poro/integrate.hpp"
#include "poro/material.hpp"
#include "poro/rom.hpp"

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace poro {

struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

enum class ScenarioKind { Monoscale, Rve, Multiscale };

struct ClusteringConfig {
  int n_cl = 64;
  int n_g = 1;
  double s_f = 1.0;
  std::uint64_t seed = 42;
  bool stress_informed = true;
  bool ch_floor = false;
  int ch_k_max = 8;
  DynamicMode dynamic = DynamicMode::Off;
  int n_cl_user = 0;
  int n_cl_0 = 8;
  RefineParams refine;
};

struct RveLibraryEntry {
  std::string mesh_path;
  ClusteringConfig clustering;
};

struct ScenarioConfig {
  std::string name;
  ScenarioKind kind = ScenarioKind::Monoscale;
  std::string mesh_path;
  MaterialParams material;
  LoadPath loads;                  // monoscale / multiscale
  Vec6 macro_strain = Vec6::Zero(); // rve target strain at t = 1
  Scheme scheme = Scheme::AafIe;
  int n_steps = 100;
  StepController controller;
  double newton_tol = 1e-8;
  int max_newton = 60;
  bool enable_damage = true;
  bool implicit_substeps = false;
  double l0 = 0.0;
  ClusteringConfig clustering;
  // multiscale
  Eigen::Vector3d region_lo = Eigen::Vector3d::Zero();
  Eigen::Vector3d region_hi = Eigen::Vector3d::Zero();
  std::vector<RveLibraryEntry> rve_library;
  std::uint64_t assignment_seed = 7;
  double ms_newton_tol = 1e-6;
  // outputs
  bool write_fields = true;
  int field_every = 0; // 0: final state only

  std::uint64_t seed = 42;
  std::string source_path;
};

// Parses and validates; throws ConfigError with a descriptive message.
ScenarioConfig load_scenario(const std::string& path);

// FNV-1a over the raw config bytes; stable across platforms.
std::uint64_t scenario_hash(const std::string& path);

// RVE options assembled from a scenario (integrator + clustering sections).
RveOptions rve_options_from(const ScenarioConfig& cfg,
                            const ClusteringConfig& cl);

} // namespace poro
