#pragma once

// The four solution drivers over a Dirichlet load path on pseudo-time [0,1]:
// pure implicit (the DNS oracle), standard impl-exp, constant-step
// assembly-free impl-exp (CAF-IE) and the adaptive assembly-free impl-exp
// (AAF-IE) with the critical-step controller.

#include "poro/material.hpp"
#include "poro/mesh.hpp"
#include "poro/nonlocal.hpp"
#include "poro/sparse.hpp"

#include <optional>
#include <string>
#include <vector>

namespace poro {

enum class Scheme { Implicit, Implex, CafIe, AafIe };

Scheme scheme_from_string(const std::string& s);
std::string scheme_name(Scheme s);

struct StepController {
  double dt0 = 1e-2;
  double xi = 1e-3;
  double e_ref = 0.0;   // 0: use the elastic yield strain S_y(0)/M
  double dt_min = 0.0;  // 0: dt0/100
  double dt_max = 0.0;  // 0: 10*dt0
  double safety = 0.5;   // fraction of the error budget spent on event landing
  double growth = 1.5;   // max step growth while any IP flows plastically
  // Event landing enforces the per-step error bound at elastic/plastic
  // transitions; without it the controller is the plain Eq-36 form, which
  // reacts one step after a transition but uses far fewer steps.
  bool strict_events = true;

  // runtime history
  double dt_n = 0.0;
  double dt_nm1 = 0.0;
  double gamma = 1.0; // dt_cri / dt0 of the last controller decision

  void init(const MaterialParams& params);
  double error_bound() const { return 1.5 * xi * e_ref; }
};

// Per-IP extrapolation-rate data consumed by the Eq-36 controller.
struct IpRateData {
  Vec6 deps_pl_n = Vec6::Zero();
  Vec6 deps_pl_nm1 = Vec6::Zero();
  // event prediction
  double f_trial = 0.0;      // last trial yield value
  double f_trial_prev = 0.0; // one before
  double dlambda_rate = 0.0; // dlambda_n / dt_n
  double ebar = 0.0;
  bool plastic = false;
  bool transitioned = false; // crossed onset/kink/initiation last step
};

// Eq-36 critical step with predictive event capping; min over all IPs.
double critical_step(const std::vector<IpRateData>& ips,
                     const MaterialParams& params, StepController& ctl,
                     bool damage_enabled);

struct StepRecord {
  int step = 0;
  double t = 0.0;
  double dt = 0.0;
  double load = 0.0;
  double displacement = 0.0;
  int newton_iters = 0;
  double residual = 0.0;
  double max_extrap_err = 0.0;
  double gamma = 0.0;
  double wall_s = 0.0;
};

struct SolveReport {
  std::vector<StepRecord> steps;
  long total_newton = 0;
  double wall_total = 0.0;
  bool completed = true;
  std::string failure;
};

struct LoadPath {
  struct BC {
    std::string set;
    int dof = 0;        // 0..dim-1
    double target = 0.0; // prescribed displacement at t = 1
  };
  std::vector<BC> dirichlet;
  std::string measure_set; // reaction measurement (default: largest |target|)
  int measure_dof = -1;
};

struct DriverConfig {
  Scheme scheme = Scheme::AafIe;
  int n_steps = 100;        // implicit / implex / caf-ie
  double newton_tol = 1e-8; // relative equilibrium residual
  int max_newton = 25;
  StepController controller;
  double l0 = 0.0;                    // nonlocal radius; 0 = local model
  double damage_k_update_tol = 1e-3;  // stiffness refresh threshold on D
  bool enable_damage = true;
  bool implicit_substeps = false; // halve the step on implicit divergence
  int max_substep_depth = 6;
};

struct RunResult {
  SolveReport report;
  std::vector<IpState> states; // per element (centroid IP)
  Eigen::VectorXd displacement;
  SolveCounters counters;
  bool diverged = false;
  std::string message;
  int initiation_step = -1; // first step with damage initiation
};

RunResult run_loadpath(const Mesh& mesh, const MaterialParams& params,
                       const LoadPath& path, const DriverConfig& cfg);

} // namespace poro
