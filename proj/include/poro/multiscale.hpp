#pragma once

// First-order computational homogenization loop: a macro AAF-IE Newton solve
// whose multiscale IPs delegate their constitutive response to RVE reduced
// models. Macro damage at a multiscale IP is the RVE's D_M (Appendix-B
// construction), regularized by the nonlocal average before stiffness
// degradation; monoscale IPs use the local exponential law.

#include "poro/integrate.hpp"
#include "poro/rom.hpp"

#include <memory>
#include <vector>

namespace poro {

struct RveType {
  const Mesh* mesh = nullptr;
  Decomposition decomp; // static clustering (shared blueprint, not state)
  RveOptions options;
  MaterialParams params;
};

struct MacroModel {
  const Mesh* mesh = nullptr;
  MaterialParams mono_params;
  std::vector<char> multiscale; // per element
  std::vector<int> rve_type;    // per element, -1 for monoscale
  // one independent simulator per multiscale IP
  std::vector<std::unique_ptr<RveSimulator>> rves; // indexed per element (null for mono)
  std::vector<std::unique_ptr<Mesh>> scaled_meshes; // owned rescaled RVE meshes
};

// Tags elements inside the axis-aligned box as multiscale.
std::vector<char> region_box(const Mesh& mesh, const Eigen::Vector3d& lo,
                             const Eigen::Vector3d& hi);

// Deterministic seeded assignment of library types to multiscale IPs; every
// IP receives an independent simulator instance. RVE meshes are uniformly
// rescaled so their edge length matches the mean macro element size within
// 5% (consistent fracture energies across scales).
MacroModel assign_rves(const Mesh& macro_mesh, const MaterialParams& mono,
                       const std::vector<char>& multiscale,
                       const std::vector<RveType>& library, std::uint64_t seed);

struct MultiscaleConfig {
  StepController controller;
  double newton_tol = 1e-6;
  int max_newton = 60;
  double l0 = 0.0;
  double damage_k_update_tol = 1e-3;
  LoadPath path;
};

struct MultiscaleResult {
  SolveReport report;
  std::vector<double> d_hat;     // final regularized damage per macro element
  std::vector<double> d_local;   // final unregularized damage / D_M
  std::vector<double> ebar;      // final macro equivalent plastic strain proxy
  Eigen::VectorXd displacement;
  bool diverged = false;
  std::string message;
  SolveCounters counters;
};

MultiscaleResult run_multiscale(MacroModel& model, const MultiscaleConfig& cfg);

} // namespace poro
