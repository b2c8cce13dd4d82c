#pragma once

// Cluster-based reduced-order micro-solver and Hill-Mandel homogenization.
// The reduced space assigns one displacement vector per node cluster
// (piecewise-constant fluctuation); the boundary carries the homogeneous
// field u0 = sym(F - I) x, so clusters holding boundary nodes are fixed.
// Micro damage runs through the stabilized four-RVE construction: equilibrium
// is always solved on the undamaged elasto-plastic path; degradation is a
// post-step mapping that yields the damaged homogenized stress and D_M.

#include "poro/clustering.hpp"
#include "poro/integrate.hpp"
#include "poro/material.hpp"
#include "poro/mesh.hpp"
#include "poro/sparse.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace poro {

struct HomogenizedResponse {
  Vec6 stress = Vec6::Zero();            // damaged homogenized stress S_M^d
  Vec6 stress_undamaged = Vec6::Zero();  // S_M^1
  Mat6 tangent = Mat6::Zero();           // consistent homogenized tangent
  double damage = 0.0;                   // D_M
};

// Volume-weighted average of per-cluster stresses.
Vec6 homogenize(const std::vector<Vec6>& stresses,
                const std::vector<double>& volumes);

enum class DynamicMode { Off, Uniform, ErrorControlled };

struct RveOptions {
  Scheme scheme = Scheme::AafIe; // Implicit (DNS), CafIe or AafIe
  int n_steps = 100;             // implicit / caf-ie step count
  StepController controller;     // aaf-ie
  double newton_tol = 1e-3;      // reduced-equilibrium relative residual
  int max_newton = 400;
  double elastic_tol = 1e-10; // offline elastic precompute tolerance
  bool enable_damage = true;  // stabilized micro-damage bookkeeping
  bool use_sparse = false;    // solve on the FE mesh (DNS path) instead of K_r
  // online dynamic clustering
  DynamicMode dynamic = DynamicMode::Off;
  int n_cl_user = 0; // total cluster budget
  int n_cl_0 = 0;    // Eq-48 reference count (or per-step count for Uniform)
  std::uint64_t seed = 1;
  RefineParams refine;
};

struct RveStepRecord {
  int step = 0;
  double t = 0.0;
  double dt = 0.0;
  double strain_eq = 0.0; // equivalent macro strain
  double stress_vm = 0.0; // von Mises of S_M^d
  double damage = 0.0;    // D_M
  int newton_iters = 0;
  double max_extrap_err = 0.0;
  int clusters = 0;
  double gamma = 0.0;
  double wall_s = 0.0;
};

struct RveRunResult {
  std::vector<RveStepRecord> steps;
  std::vector<Vec6> s1_path; // S_M^1 per step
  std::vector<Vec6> sd_path; // S_M^d per step
  bool completed = true;
  std::string message;
  double wall_online = 0.0;
  double wall_offline = 0.0;
  long total_newton = 0;
};

class RveSimulator {
public:
  // node_cluster: node -> fluctuation-cluster label in [0, n_node_clusters).
  RveSimulator(const Mesh& mesh, const MaterialParams& params,
               Decomposition decomp, std::vector<int> node_cluster,
               int n_node_clusters, const RveOptions& opt);

  // DNS: every element and every node its own cluster (P = identity).
  static std::unique_ptr<RveSimulator> dns(const Mesh& mesh,
                                           const MaterialParams& params,
                                           const RveOptions& opt);
  // ROM: node clusters derived from the element decomposition.
  static std::unique_ptr<RveSimulator> rom(const Mesh& mesh,
                                           const MaterialParams& params,
                                           const Decomposition& decomp,
                                           const RveOptions& opt);

  // Proportional load path E_M(t) = t * e_target over pseudo-time [0,1].
  RveRunResult run_loadpath(const Vec6& e_target);

  // Multiscale interface: trial evaluation at a macro strain (state
  // untouched) and commit of the accepted strain.
  HomogenizedResponse evaluate_trial(const Vec6& e_macro, double dt_ratio);
  bool commit(const Vec6& e_macro, double dt, std::string* error = nullptr);

  // Consistent homogenized tangent by forward differences over the active
  // strain modes (perturbation 1e-7), reusing the committed cluster states.
  Mat6 fd_tangent(const Vec6& e_macro, double dt_ratio);

  // Appendix-B stabilized construction on explicit per-cluster undamaged
  // stresses and local damages (also the test surface for its identities).
  HomogenizedResponse stabilized_update(const std::vector<Vec6>& s0,
                                        const std::vector<double>& dm,
                                        bool* degenerate = nullptr) const {
    return stabilized_response(s0, dm, degenerate);
  }

  // Homogenized elastic tangent from the offline unit solves.
  const Mat6& elastic_homogenized() const { return c_m_el_full_; }

  int n_clusters() const { return decomp_.n_clusters; }
  const Decomposition& decomposition() const { return decomp_; }
  const std::vector<IpState>& cluster_states() const { return states_; }
  const std::vector<double>& cluster_volumes() const { return volumes_; }
  const Mesh& mesh() const { return mesh_; }
  double last_damage() const { return d_m_; }
  double controller_gamma() const { return opt_.controller.gamma; }

  // Full nodal displacement of the last committed state.
  const Eigen::VectorXd& displacement() const { return u_; }

  // Reduced elastic stiffness (all cluster DOFs); tests compare it with the
  // dense P^T K P oracle.
  const Eigen::MatrixXd& reduced_stiffness() const { return k_r_; }
  Eigen::MatrixXd dense_ptkp() const;

  long kr_factorizations() const { return kr_factorizations_; }
  long kr_builds() const { return kr_builds_; }

private:
  struct Workspace {
    Eigen::VectorXd u;                 // full nodal displacement
    Eigen::VectorXd fluct;             // cluster fluctuation dofs
    std::vector<Vec6> cluster_strain;  // per state cluster
    std::vector<Vec6> stresses;        // per state cluster
  };

  void build_reduced_stiffness();
  void refresh_factor();
  void compute_cluster_strains(const Eigen::VectorXd& u,
                               std::vector<Vec6>& out) const;
  Eigen::VectorXd fe_internal_force(const std::vector<Vec6>& stresses) const;
  Eigen::VectorXd reduced_residual(const std::vector<Vec6>& stresses) const;
  // frozen-tangent equilibrium for the explicit-stage stress map; returns
  // iterations or -1 on failure
  int solve_equilibrium(Workspace& ws, const Vec6& e_macro, double ratio);
  // full Newton on the FE mesh (DNS oracle; identity decomposition only)
  int solve_implicit_sparse(Workspace& ws, const Vec6& e_macro);
  // frozen-elastic equilibrium on the FE mesh (sparse impl-exp path)
  int solve_explicit_sparse(Workspace& ws, const Vec6& e_macro, double ratio);
  void ensure_sparse_system();
  void set_affine(Eigen::VectorXd& u, const Vec6& e_macro) const;
  void apply_fluctuation(Eigen::VectorXd& u, const Eigen::VectorXd& fluct) const;

  void precompute_elastic();
  HomogenizedResponse stabilized_response(const std::vector<Vec6>& s0,
                                          const std::vector<double>& dm,
                                          bool* degenerate = nullptr) const;
  std::vector<double> trial_damages(double ratio) const;
  void update_damage_ledger();
  void maybe_refine();

  const Mesh& mesh_;
  MaterialParams params_;
  RveOptions opt_;
  FemModel model_;
  Eigen::SparseMatrix<double> k_fe_; // elastic FE stiffness (unconstrained)

  Decomposition decomp_;
  std::vector<int> node_cluster_;
  int n_node_clusters_ = 0;
  std::vector<char> cluster_fixed_; // node cluster holds a boundary node
  std::vector<double> volumes_;     // per state cluster
  std::vector<double> l_c_;         // per state cluster characteristic length
  double total_volume_ = 0.0;
  Eigen::Vector3d x_center_ = Eigen::Vector3d::Zero();

  Eigen::MatrixXd k_r_; // all cluster dofs
  Eigen::LLT<Eigen::MatrixXd> kr_llt_;
  std::vector<int> free_cdofs_;
  bool factor_valid_ = false;
  long kr_factorizations_ = 0;
  long kr_builds_ = 0;

  // DNS (implicit) path over the FE mesh
  std::unique_ptr<SparseSystem> sys_dns_;
  std::vector<int> dns_bdofs_;

  // committed state
  std::vector<IpState> states_;   // per state cluster (undamaged path)
  std::vector<IpState> dmg_;      // ledger damage states per cluster
  std::vector<IpRateData> rates_; // controller data per cluster
  Eigen::VectorXd u_;
  Eigen::VectorXd fluct_;
  Vec6 e_macro_ = Vec6::Zero();
  double d_m_ = 0.0;
  Vec6 last_s1_ = Vec6::Zero();
  Vec6 last_sd_ = Vec6::Zero();
  double last_extrap_err_ = 0.0;
  int last_newton_ = 0;
  double offline_wall_ = 0.0;

  // Appendix-B ledger: homogenized elastic modulus and per-cluster elastic
  // strain localization over the active Voigt components.
  int n_active_ = 0;
  Eigen::MatrixXd c_m_el_;              // active x active
  Mat6 c_m_el_full_ = Mat6::Zero();
  std::vector<Eigen::MatrixXd> a_loc_;  // per cluster, active x active
};

// spec surface: reduced model construction from a node decomposition
struct ReducedModel {
  Eigen::MatrixXd k_r;
  std::vector<int> node_cluster;
  int n_clusters = 0;
};

ReducedModel build_reduced_model(const Mesh& mesh,
                                 const std::vector<int>& node_cluster,
                                 int n_clusters, const MaterialParams& params);

} // namespace poro
