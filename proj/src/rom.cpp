#include "poro/rom.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace poro {

Vec6 homogenize(const std::vector<Vec6>& stresses,
                const std::vector<double>& volumes) {
  if (stresses.size() != volumes.size())
    throw std::invalid_argument("homogenize: size mismatch");
  Vec6 s = Vec6::Zero();
  double v = 0.0;
  for (std::size_t i = 0; i < stresses.size(); ++i) {
    if (!(volumes[i] > 0.0)) throw std::invalid_argument("homogenize: volume <= 0");
    s += volumes[i] * stresses[i];
    v += volumes[i];
  }
  return s / v;
}

namespace {

std::vector<int> active_indices(int dim) {
  if (dim == 2) return {0, 1, 3};
  return {0, 1, 2, 3, 4, 5};
}

double active_weight(int voigt_comp) { return voigt_comp >= 3 ? 2.0 : 1.0; }

} // namespace

RveSimulator::RveSimulator(const Mesh& mesh, const MaterialParams& params,
                           Decomposition decomp, std::vector<int> node_cluster,
                           int n_node_clusters, const RveOptions& opt)
    : mesh_(mesh), params_(params), opt_(opt), model_(mesh),
      decomp_(std::move(decomp)), node_cluster_(std::move(node_cluster)),
      n_node_clusters_(n_node_clusters) {
  params_.validate();
  opt_.controller.init(params_);
  const int nc = decomp_.n_clusters;
  states_.assign(static_cast<std::size_t>(nc), IpState{});
  dmg_.assign(static_cast<std::size_t>(nc), IpState{});
  rates_.assign(static_cast<std::size_t>(nc), IpRateData{});
  const double sy0 = params_.yield(0.0).first;
  for (auto& s : states_) s.sy_last = sy0;
  for (auto& s : dmg_) s.sy_last = sy0;

  volumes_ = decomp_.cluster_volumes(mesh_);
  total_volume_ = std::accumulate(volumes_.begin(), volumes_.end(), 0.0);
  l_c_.resize(volumes_.size());
  for (std::size_t c = 0; c < volumes_.size(); ++c)
    l_c_[c] = std::pow(std::max(volumes_[c], 1e-300), 1.0 / mesh_.dim);

  for (int n = 0; n < mesh_.n_nodes(); ++n)
    x_center_ += mesh_.nodes[static_cast<std::size_t>(n)];
  x_center_ /= mesh_.n_nodes();

  // elastic FE stiffness, assembled once
  {
    const Mat6 c_el = elastic_tangent(params_);
    SparseSystem sys = SparseSystem::assemble(
        model_, std::vector<Mat6>(static_cast<std::size_t>(mesh_.n_elements()), c_el));
    k_fe_ = sys.matrix();
  }

  cluster_fixed_.assign(static_cast<std::size_t>(n_node_clusters_), 0);
  std::vector<char> has_node(static_cast<std::size_t>(n_node_clusters_), 0);
  for (int n = 0; n < mesh_.n_nodes(); ++n)
    has_node[static_cast<std::size_t>(node_cluster_[static_cast<std::size_t>(n)])] = 1;
  for (int n : mesh_.boundary_nodes())
    cluster_fixed_[static_cast<std::size_t>(node_cluster_[static_cast<std::size_t>(n)])] = 1;
  for (int c = 0; c < n_node_clusters_; ++c)
    if (!has_node[static_cast<std::size_t>(c)]) cluster_fixed_[static_cast<std::size_t>(c)] = 1;

  u_ = Eigen::VectorXd::Zero(mesh_.n_dofs());
  fluct_ = Eigen::VectorXd::Zero(n_node_clusters_ * mesh_.dim);

  const auto t0 = std::chrono::steady_clock::now();
  if (opt_.use_sparse) {
    ensure_sparse_system(); // DNS path never forms the dense reduced matrix
  } else {
    build_reduced_stiffness();
    refresh_factor();
  }
  precompute_elastic();
  offline_wall_ =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
          .count();
}

std::unique_ptr<RveSimulator> RveSimulator::dns(const Mesh& mesh,
                                                const MaterialParams& params,
                                                const RveOptions& opt) {
  Decomposition d;
  d.n_clusters = mesh.n_elements();
  d.elem_cluster.resize(static_cast<std::size_t>(mesh.n_elements()));
  std::iota(d.elem_cluster.begin(), d.elem_cluster.end(), 0);
  d.cluster_group.assign(static_cast<std::size_t>(d.n_clusters), 0);
  d.unsplittable.assign(static_cast<std::size_t>(d.n_clusters), 1);
  std::vector<int> node_cluster(static_cast<std::size_t>(mesh.n_nodes()));
  std::iota(node_cluster.begin(), node_cluster.end(), 0);
  RveOptions o = opt;
  o.dynamic = DynamicMode::Off;
  o.use_sparse = true;
  return std::make_unique<RveSimulator>(mesh, params, std::move(d),
                                        std::move(node_cluster), mesh.n_nodes(), o);
}

std::unique_ptr<RveSimulator> RveSimulator::rom(const Mesh& mesh,
                                                const MaterialParams& params,
                                                const Decomposition& decomp,
                                                const RveOptions& opt) {
  std::vector<int> node_cluster = node_clusters_from_elements(mesh, decomp);
  return std::make_unique<RveSimulator>(mesh, params, decomp,
                                        std::move(node_cluster),
                                        decomp.n_clusters, opt);
}

Eigen::MatrixXd RveSimulator::dense_ptkp() const {
  const int dim = mesh_.dim;
  const int n = n_node_clusters_ * dim;
  Eigen::MatrixXd kr = Eigen::MatrixXd::Zero(n, n);
  for (int col = 0; col < k_fe_.outerSize(); ++col) {
    const int nj = col / dim, dj = col % dim;
    const int cj = node_cluster_[static_cast<std::size_t>(nj)];
    for (Eigen::SparseMatrix<double>::InnerIterator it(k_fe_, col); it; ++it) {
      const int ni = static_cast<int>(it.row()) / dim, di = static_cast<int>(it.row()) % dim;
      const int ci = node_cluster_[static_cast<std::size_t>(ni)];
      kr(ci * dim + di, cj * dim + dj) += it.value();
    }
  }
  return kr;
}

void RveSimulator::build_reduced_stiffness() {
  k_r_ = dense_ptkp();
  kr_builds_ += 1;
  factor_valid_ = false;
}

void RveSimulator::refresh_factor() {
  const int dim = mesh_.dim;
  free_cdofs_.clear();
  for (int c = 0; c < n_node_clusters_; ++c)
    if (!cluster_fixed_[static_cast<std::size_t>(c)])
      for (int d = 0; d < dim; ++d) free_cdofs_.push_back(c * dim + d);
  const int nf = static_cast<int>(free_cdofs_.size());
  Eigen::MatrixXd kr_free(nf, nf);
  for (int i = 0; i < nf; ++i)
    for (int j = 0; j < nf; ++j)
      kr_free(i, j) = k_r_(free_cdofs_[static_cast<std::size_t>(i)],
                           free_cdofs_[static_cast<std::size_t>(j)]);
  kr_llt_.compute(kr_free);
  if (nf > 0 && kr_llt_.info() != Eigen::Success)
    throw SolverError("reduced stiffness not SPD");
  factor_valid_ = true;
  kr_factorizations_ += 1;
}

void RveSimulator::set_affine(Eigen::VectorXd& u, const Vec6& e_macro) const {
  const int dim = mesh_.dim;
  Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
  e(0, 0) = e_macro[0];
  e(1, 1) = e_macro[1];
  e(2, 2) = e_macro[2];
  e(0, 1) = e(1, 0) = 0.5 * e_macro[3];
  e(0, 2) = e(2, 0) = 0.5 * e_macro[4];
  e(1, 2) = e(2, 1) = 0.5 * e_macro[5];
  for (int n = 0; n < mesh_.n_nodes(); ++n) {
    const Eigen::Vector3d x = mesh_.nodes[static_cast<std::size_t>(n)] - x_center_;
    const Eigen::Vector3d v = e * x;
    for (int d = 0; d < dim; ++d) u[dim * n + d] = v[d];
  }
}

void RveSimulator::apply_fluctuation(Eigen::VectorXd& u,
                                     const Eigen::VectorXd& fluct) const {
  const int dim = mesh_.dim;
  for (int n = 0; n < mesh_.n_nodes(); ++n) {
    const int c = node_cluster_[static_cast<std::size_t>(n)];
    if (cluster_fixed_[static_cast<std::size_t>(c)]) continue;
    for (int d = 0; d < dim; ++d) u[dim * n + d] += fluct[c * dim + d];
  }
}

void RveSimulator::compute_cluster_strains(const Eigen::VectorXd& u,
                                           std::vector<Vec6>& out) const {
  const int dim = mesh_.dim;
  const int npe = mesh_.nodes_per_element();
  out.assign(static_cast<std::size_t>(decomp_.n_clusters), Vec6::Zero());
  Eigen::VectorXd ue(dim * npe);
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const auto& el = mesh_.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int d = 0; d < dim; ++d)
        ue[dim * a + d] = u[dim * el[static_cast<std::size_t>(a)] + d];
    const Vec6 strain = model_.geo[static_cast<std::size_t>(e)].b * ue;
    out[static_cast<std::size_t>(decomp_.elem_cluster[static_cast<std::size_t>(e)])] +=
        mesh_.element_volume(e) * strain;
  }
  for (std::size_t c = 0; c < out.size(); ++c) out[c] /= volumes_[c];
}

Eigen::VectorXd RveSimulator::fe_internal_force(
    const std::vector<Vec6>& stresses) const {
  const int dim = mesh_.dim;
  const int npe = mesh_.nodes_per_element();
  Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh_.n_dofs());
  for (int e = 0; e < mesh_.n_elements(); ++e) {
    const auto& geo = model_.geo[static_cast<std::size_t>(e)];
    const Eigen::VectorXd fe =
        geo.b.transpose() *
        stresses[static_cast<std::size_t>(decomp_.elem_cluster[static_cast<std::size_t>(e)])] *
        geo.volume;
    const auto& el = mesh_.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int d = 0; d < dim; ++d)
        f[dim * el[static_cast<std::size_t>(a)] + d] += fe[dim * a + d];
  }
  return f;
}

Eigen::VectorXd RveSimulator::reduced_residual(
    const std::vector<Vec6>& stresses) const {
  const int dim = mesh_.dim;
  const Eigen::VectorXd f = fe_internal_force(stresses);
  Eigen::VectorXd rho(static_cast<int>(free_cdofs_.size()));
  Eigen::VectorXd rho_full = Eigen::VectorXd::Zero(n_node_clusters_ * dim);
  for (int n = 0; n < mesh_.n_nodes(); ++n) {
    const int c = node_cluster_[static_cast<std::size_t>(n)];
    for (int d = 0; d < dim; ++d) rho_full[c * dim + d] -= f[dim * n + d];
  }
  for (std::size_t i = 0; i < free_cdofs_.size(); ++i)
    rho[static_cast<int>(i)] = rho_full[free_cdofs_[i]];
  return rho;
}

int RveSimulator::solve_equilibrium(Workspace& ws, const Vec6& e_macro,
                                    double ratio) {
  const Mat6 c_el = elastic_tangent(params_);
  const int nc = decomp_.n_clusters;
  std::vector<Vec6> deps_extrap(static_cast<std::size_t>(nc));
  for (int c = 0; c < nc; ++c)
    deps_extrap[static_cast<std::size_t>(c)] =
        ratio * states_[static_cast<std::size_t>(c)].deps_pl_n;

  set_affine(ws.u, e_macro);
  apply_fluctuation(ws.u, ws.fluct);

  double ref = -1.0;
  for (int it = 0; it <= opt_.max_newton; ++it) {
    compute_cluster_strains(ws.u, ws.cluster_strain);
    ws.stresses.resize(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) {
      const auto& s = states_[static_cast<std::size_t>(c)];
      ws.stresses[static_cast<std::size_t>(c)] =
          c_el * (ws.cluster_strain[static_cast<std::size_t>(c)] - s.eps_pl -
                  deps_extrap[static_cast<std::size_t>(c)]);
    }
    const Eigen::VectorXd rho = reduced_residual(ws.stresses);
    const double rn = rho.norm();
    if (ref < 0.0) ref = std::max(rn, 1e-300);
    if (rn <= opt_.newton_tol * ref || rho.size() == 0) return it;
    if (it == opt_.max_newton) return -1;
    const Eigen::VectorXd delta = kr_llt_.solve(rho);
    for (std::size_t i = 0; i < free_cdofs_.size(); ++i)
      ws.fluct[free_cdofs_[i]] += delta[static_cast<int>(i)];
    ws.u.setZero();
    set_affine(ws.u, e_macro);
    apply_fluctuation(ws.u, ws.fluct);
  }
  return -1;
}

void RveSimulator::ensure_sparse_system() {
  if (sys_dns_) return;
  const int dim = mesh_.dim;
  const Mat6 c_el = elastic_tangent(params_);
  sys_dns_ = std::make_unique<SparseSystem>(SparseSystem::assemble(
      model_,
      std::vector<Mat6>(static_cast<std::size_t>(mesh_.n_elements()), c_el)));
  dns_bdofs_.clear();
  for (int n : mesh_.boundary_nodes())
    for (int d = 0; d < dim; ++d) dns_bdofs_.push_back(dim * n + d);
  sys_dns_->set_dirichlet(dns_bdofs_,
                          std::vector<double>(dns_bdofs_.size(), 0.0));
}

int RveSimulator::solve_explicit_sparse(Workspace& ws, const Vec6& e_macro,
                                        double ratio) {
  ensure_sparse_system();
  const Mat6 c_el = elastic_tangent(params_);
  const int nc = decomp_.n_clusters;
  std::vector<Vec6> deps_extrap(static_cast<std::size_t>(nc));
  for (int c = 0; c < nc; ++c)
    deps_extrap[static_cast<std::size_t>(c)] =
        ratio * states_[static_cast<std::size_t>(c)].deps_pl_n;

  Eigen::VectorXd u = u_;
  Eigen::VectorXd affine = Eigen::VectorXd::Zero(mesh_.n_dofs());
  set_affine(affine, e_macro);
  for (int dof : dns_bdofs_) u[dof] = affine[dof];

  double ref = -1.0;
  int iters = 0;
  for (int it = 0; it <= opt_.max_newton; ++it) {
    compute_cluster_strains(u, ws.cluster_strain);
    ws.stresses.resize(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) {
      const auto& s = states_[static_cast<std::size_t>(c)];
      ws.stresses[static_cast<std::size_t>(c)] =
          c_el * (ws.cluster_strain[static_cast<std::size_t>(c)] - s.eps_pl -
                  deps_extrap[static_cast<std::size_t>(c)]);
    }
    Eigen::VectorXd r = -fe_internal_force(ws.stresses);
    for (int dof : dns_bdofs_) r[dof] = 0.0;
    const double rn = r.norm();
    if (ref < 0.0) ref = std::max(rn, 1e-300);
    if (rn <= opt_.newton_tol * ref) {
      ws.u = u;
      return iters;
    }
    if (it == opt_.max_newton || rn > 1e6 * ref) return -1;
    Eigen::VectorXd du = sys_dns_->solve_direct(r);
    for (int dof : dns_bdofs_) du[dof] = 0.0;
    u += du;
    ++iters;
  }
  return -1;
}

int RveSimulator::solve_implicit_sparse(Workspace& ws, const Vec6& e_macro) {
  if (decomp_.n_clusters != mesh_.n_elements())
    throw SolverError("implicit DNS path requires the identity decomposition");
  const int dim = mesh_.dim;
  (void)dim;
  ensure_sparse_system();

  // boundary carries the affine field; corrections are homogeneous
  Eigen::VectorXd u = u_;
  Eigen::VectorXd affine = Eigen::VectorXd::Zero(mesh_.n_dofs());
  set_affine(affine, e_macro);
  for (int dof : dns_bdofs_) u[dof] = affine[dof];

  const int nc = decomp_.n_clusters;
  std::vector<Mat6> tangents(static_cast<std::size_t>(nc));
  double ref = -1.0;
  int iters = 0;
  for (int it = 0; it <= opt_.max_newton; ++it) {
    compute_cluster_strains(u, ws.cluster_strain);
    ws.stresses.resize(static_cast<std::size_t>(nc));
    for (int c = 0; c < nc; ++c) {
      const auto& cm = states_[static_cast<std::size_t>(c)];
      StressReturn ret = return_map_j2(
          params_, cm, ws.cluster_strain[static_cast<std::size_t>(c)] - cm.strain);
      ws.stresses[static_cast<std::size_t>(c)] = ret.stress0;
      tangents[static_cast<std::size_t>(c)] = ret.c_alg;
    }
    Eigen::VectorXd r = -fe_internal_force(ws.stresses);
    for (int dof : dns_bdofs_) r[dof] = 0.0;
    const double rn = r.norm();
    if (ref < 0.0) ref = std::max(rn, 1e-300);
    if (rn <= opt_.newton_tol * ref) {
      ws.u = u;
      return iters;
    }
    if (it == opt_.max_newton || rn > 1e6 * ref) return -1;
    sys_dns_->reassemble(tangents); // DNS: consistent tangent each iteration
    Eigen::VectorXd du = sys_dns_->solve_direct(r);
    for (int dof : dns_bdofs_) du[dof] = 0.0;
    u += du;
    ++iters;
  }
  return -1;
}

Mat6 RveSimulator::fd_tangent(const Vec6& e_macro, double dt_ratio) {
  const auto av = active_indices(mesh_.dim);
  const double h = 1e-7;
  const HomogenizedResponse base = evaluate_trial(e_macro, dt_ratio);
  Mat6 c = Mat6::Zero();
  for (std::size_t m = 0; m < av.size(); ++m) {
    Vec6 pert = e_macro;
    pert[av[m]] += h;
    const HomogenizedResponse r = evaluate_trial(pert, dt_ratio);
    for (std::size_t k = 0; k < av.size(); ++k)
      c(av[k], av[m]) = (r.stress[av[k]] - base.stress[av[k]]) / h;
  }
  return c;
}

void RveSimulator::precompute_elastic() {
  const auto av = active_indices(mesh_.dim);
  n_active_ = static_cast<int>(av.size());
  const Mat6 c_el = elastic_tangent(params_);
  c_m_el_.resize(n_active_, n_active_);
  a_loc_.assign(static_cast<std::size_t>(decomp_.n_clusters),
                Eigen::MatrixXd::Zero(n_active_, n_active_));

  const double save_tol = opt_.newton_tol;
  opt_.newton_tol = opt_.elastic_tol;
  for (int m = 0; m < n_active_; ++m) {
    Vec6 mode = Vec6::Zero();
    mode[av[static_cast<std::size_t>(m)]] = 1e-3;
    Workspace ws;
    ws.u = Eigen::VectorXd::Zero(mesh_.n_dofs());
    ws.fluct = Eigen::VectorXd::Zero(n_node_clusters_ * mesh_.dim);
    const int its = opt_.use_sparse ? solve_explicit_sparse(ws, mode, 0.0)
                                    : solve_equilibrium(ws, mode, 0.0);
    if (its < 0) throw SolverError("elastic precompute did not converge");
    Vec6 s_hom = Vec6::Zero();
    for (int c = 0; c < decomp_.n_clusters; ++c) {
      const Vec6 strain = ws.cluster_strain[static_cast<std::size_t>(c)];
      for (int r = 0; r < n_active_; ++r)
        a_loc_[static_cast<std::size_t>(c)](r, m) =
            strain[av[static_cast<std::size_t>(r)]] / 1e-3;
      s_hom += volumes_[static_cast<std::size_t>(c)] * (c_el * strain);
    }
    s_hom /= total_volume_;
    for (int r = 0; r < n_active_; ++r)
      c_m_el_(r, m) = s_hom[av[static_cast<std::size_t>(r)]] / 1e-3;
  }
  opt_.newton_tol = save_tol;

  c_m_el_full_.setZero();
  for (int r = 0; r < n_active_; ++r)
    for (int cidx = 0; cidx < n_active_; ++cidx)
      c_m_el_full_(av[static_cast<std::size_t>(r)], av[static_cast<std::size_t>(cidx)]) =
          c_m_el_(r, cidx);
}

HomogenizedResponse RveSimulator::stabilized_response(
    const std::vector<Vec6>& s0, const std::vector<double>& dm,
    bool* degenerate) const {
  const auto av = active_indices(mesh_.dim);
  const Mat6 c_el = elastic_tangent(params_);
  HomogenizedResponse resp;
  if (degenerate) *degenerate = false;

  Vec6 s1 = Vec6::Zero();
  for (std::size_t c = 0; c < s0.size(); ++c) s1 += volumes_[c] * s0[c];
  s1 /= total_volume_;
  resp.stress_undamaged = s1;

  bool any_damage = false;
  for (double d : dm)
    if (d > 0.0) any_damage = true;
  if (!any_damage) {
    resp.stress = s1;
    resp.damage = 0.0;
    return resp;
  }

  Eigen::VectorXd s1a(n_active_);
  for (int r = 0; r < n_active_; ++r) s1a[r] = s1[av[static_cast<std::size_t>(r)]];

  double den = 0.0;
  for (int r = 0; r < n_active_; ++r)
    den += active_weight(av[static_cast<std::size_t>(r)]) * s1a[r] * s1a[r];
  if (den <= 1e-24) {
    if (degenerate) *degenerate = true;
    resp.stress = s1;
    resp.damage = 0.0;
    return resp;
  }

  // elastic twin: E_M^el from C_M^el, local strains via the localization A_c
  const Eigen::VectorXd e_mel = c_m_el_.partialPivLu().solve(s1a);
  Eigen::MatrixXd c_el_a(n_active_, n_active_);
  for (int r = 0; r < n_active_; ++r)
    for (int cc = 0; cc < n_active_; ++cc)
      c_el_a(r, cc) =
          c_el(av[static_cast<std::size_t>(r)], av[static_cast<std::size_t>(cc)]);

  Eigen::VectorXd sda = Eigen::VectorXd::Zero(n_active_);
  for (std::size_t c = 0; c < s0.size(); ++c) {
    const Eigen::VectorXd em2 = a_loc_[c] * e_mel;
    const Eigen::VectorXd sm3 = (1.0 - dm[c]) * (c_el_a * em2);
    sda += volumes_[c] * sm3;
  }
  sda /= total_volume_;

  double num = 0.0;
  for (int r = 0; r < n_active_; ++r)
    num += active_weight(av[static_cast<std::size_t>(r)]) * sda[r] * s1a[r];
  const double ratio = num / den;
  resp.damage = std::clamp(1.0 - ratio, 0.0, 1.0);

  resp.stress = ratio * s1; // collinear fill of the inactive components
  for (int r = 0; r < n_active_; ++r)
    resp.stress[av[static_cast<std::size_t>(r)]] = sda[r];
  return resp;
}

std::vector<double> RveSimulator::trial_damages(double ratio) const {
  const int nc = decomp_.n_clusters;
  std::vector<double> dm(static_cast<std::size_t>(nc), 0.0);
  if (!opt_.enable_damage) return dm;
  for (int c = 0; c < nc; ++c) {
    const auto& s = states_[static_cast<std::size_t>(c)];
    const auto& d = dmg_[static_cast<std::size_t>(c)];
    double val = d.damage;
    const double dlam = ratio * s.dlambda;
    const double ebar_tilde = s.ebar_pl + dlam;
    if (d.initiated || (params_.eps_d > 0.0 && ebar_tilde >= params_.eps_d)) {
      if (params_.law == DamageLaw::Exponential) {
        val = std::max(val, damage_evolve_exponential(params_, ebar_tilde));
      } else {
        const double diss =
            d.dissipated + d.sy_last * l_c_[static_cast<std::size_t>(c)] * dlam;
        val = diss >= 0.99 * params_.g_f
                  ? 1.0
                  : std::max(val, energy_to_damage(diss, params_.g_f));
      }
    }
    if (d.ruptured) val = 1.0;
    dm[static_cast<std::size_t>(c)] = val;
  }
  return dm;
}

HomogenizedResponse RveSimulator::evaluate_trial(const Vec6& e_macro,
                                                 double dt_ratio) {
  Workspace ws;
  ws.u = Eigen::VectorXd::Zero(mesh_.n_dofs());
  ws.fluct = fluct_;
  const int its = opt_.use_sparse ? solve_explicit_sparse(ws, e_macro, dt_ratio)
                                  : solve_equilibrium(ws, e_macro, dt_ratio);
  if (its < 0) throw SolverError("RVE trial equilibrium did not converge");
  // ws.stresses are the undamaged explicit stresses S~0
  HomogenizedResponse resp =
      stabilized_response(ws.stresses, trial_damages(dt_ratio));
  resp.damage = std::max(resp.damage, d_m_);
  return resp;
}

bool RveSimulator::commit(const Vec6& e_macro, double dt, std::string* error) {
  auto& ctl = opt_.controller;
  const double ratio = ctl.dt_n > 0.0 ? dt / ctl.dt_n : 0.0;

  Workspace ws;
  ws.u = Eigen::VectorXd::Zero(mesh_.n_dofs());
  ws.fluct = fluct_;
  int its;
  if (opt_.scheme == Scheme::Implicit)
    its = solve_implicit_sparse(ws, e_macro);
  else if (opt_.use_sparse)
    its = solve_explicit_sparse(ws, e_macro, ratio);
  else
    its = solve_equilibrium(ws, e_macro, ratio);
  if (its < 0) {
    if (error) *error = opt_.scheme == Scheme::Implicit
                            ? "implicit Newton did not converge"
                            : "reduced equilibrium did not converge";
    return false;
  }

  // implicit correction per cluster at the converged cluster strains
  const int nc = decomp_.n_clusters;
  last_extrap_err_ = 0.0;
  last_newton_ = its;
  for (int c = 0; c < nc; ++c) {
    auto& cm = states_[static_cast<std::size_t>(c)];
    const Vec6 d_eps = ws.cluster_strain[static_cast<std::size_t>(c)] - cm.strain;
    StressReturn ret = return_map_j2(params_, cm, d_eps);
    IpState st = ret.state;
    const Vec6 err = ratio * cm.deps_pl_n - ret.deps_pl;
    last_extrap_err_ = std::max(last_extrap_err_, strain_max_abs(err));

    auto& rate = rates_[static_cast<std::size_t>(c)];
    const bool was_plastic = cm.dlambda > 0.0;
    st.deps_pl_nm1 = cm.deps_pl_n;
    st.deps_pl_n = ret.deps_pl;
    st.dlambda = ret.dlambda;
    rate.deps_pl_nm1 = rate.deps_pl_n;
    rate.deps_pl_n = ret.deps_pl;
    rate.f_trial_prev = rate.f_trial;
    rate.f_trial = ret.f_trial;
    rate.dlambda_rate = dt > 0.0 ? ret.dlambda / dt : 0.0;
    rate.ebar = st.ebar_pl;
    rate.plastic = ret.dlambda > 0.0;
    rate.transitioned = !was_plastic && ret.dlambda > 0.0;
    cm = std::move(st);
  }
  u_ = ws.u;
  fluct_ = ws.fluct;
  e_macro_ = e_macro;
  ctl.dt_nm1 = ctl.dt_n;
  ctl.dt_n = dt;

  if (opt_.enable_damage) update_damage_ledger();

  // homogenized response from the committed state
  std::vector<Vec6> s0(static_cast<std::size_t>(nc));
  std::vector<double> dm(static_cast<std::size_t>(nc), 0.0);
  const Mat6 c_el = elastic_tangent(params_);
  for (int c = 0; c < nc; ++c) {
    const auto& s = states_[static_cast<std::size_t>(c)];
    s0[static_cast<std::size_t>(c)] = c_el * (s.strain - s.eps_pl);
    dm[static_cast<std::size_t>(c)] = dmg_[static_cast<std::size_t>(c)].damage;
  }
  bool degenerate = false;
  HomogenizedResponse resp = stabilized_response(s0, dm, &degenerate);
  if (degenerate) {
    if (error) *error = "degenerate stabilized update: |S_M^1| = 0 with damage";
    return false;
  }
  d_m_ = std::clamp(std::max(d_m_, resp.damage), 0.0, 1.0);
  last_s1_ = resp.stress_undamaged;
  last_sd_ = resp.stress;

  if (opt_.dynamic != DynamicMode::Off) maybe_refine();
  return true;
}

void RveSimulator::update_damage_ledger() {
  const int nc = decomp_.n_clusters;
  for (int c = 0; c < nc; ++c) {
    auto& d = dmg_[static_cast<std::size_t>(c)];
    const auto& s = states_[static_cast<std::size_t>(c)];
    d.ebar_pl = s.ebar_pl;
    update_damage_local(params_, l_c_[static_cast<std::size_t>(c)], s.dlambda, d);
  }
}

void RveSimulator::maybe_refine() {
  double gamma = opt_.controller.gamma;
  if (opt_.dynamic == DynamicMode::Uniform) gamma = 1.0;
  std::vector<double> ebar(static_cast<std::size_t>(decomp_.n_clusters));
  for (std::size_t c = 0; c < ebar.size(); ++c) ebar[c] = states_[c].ebar_pl;

  const int before = decomp_.n_clusters;
  RefineResult rr = dynamic_refine(mesh_, decomp_, ebar, gamma, opt_.n_cl_user,
                                   opt_.n_cl_0, opt_.seed, opt_.refine);
  if (rr.n_split == 0) return;

  // children inherit the parent's full state
  for (const auto& [parent, a, b] : rr.transfer) {
    (void)a;
    (void)b;
    states_.push_back(states_[static_cast<std::size_t>(parent)]);
    dmg_.push_back(dmg_[static_cast<std::size_t>(parent)]);
    rates_.push_back(rates_[static_cast<std::size_t>(parent)]);
  }
  volumes_ = decomp_.cluster_volumes(mesh_);
  total_volume_ = std::accumulate(volumes_.begin(), volumes_.end(), 0.0);
  l_c_.resize(volumes_.size());
  for (std::size_t c = 0; c < volumes_.size(); ++c)
    l_c_[c] = std::pow(std::max(volumes_[c], 1e-300), 1.0 / mesh_.dim);

  // localization of a child starts as its parent's (state inheritance); it is
  // exact for the translated clusters as refinement proceeds from the parent
  for (const auto& [parent, a, b] : rr.transfer) {
    (void)a;
    (void)b;
    a_loc_.push_back(a_loc_[static_cast<std::size_t>(parent)]);
  }

  // node decomposition: recompute and update K_r only on touched clusters
  const std::vector<int> old_nc = node_cluster_;
  node_cluster_ = node_clusters_from_elements(mesh_, decomp_);
  const int new_n = decomp_.n_clusters;
  const int dim = mesh_.dim;

  std::vector<char> touched(static_cast<std::size_t>(new_n), 0);
  std::vector<int> changed_nodes;
  for (int n = 0; n < mesh_.n_nodes(); ++n)
    if (old_nc[static_cast<std::size_t>(n)] != node_cluster_[static_cast<std::size_t>(n)]) {
      changed_nodes.push_back(n);
      touched[static_cast<std::size_t>(old_nc[static_cast<std::size_t>(n)])] = 1;
      touched[static_cast<std::size_t>(node_cluster_[static_cast<std::size_t>(n)])] = 1;
    }
  for (int c = before; c < new_n; ++c) touched[static_cast<std::size_t>(c)] = 1;

  k_r_.conservativeResize(new_n * dim, new_n * dim);
  for (int i = before * dim; i < new_n * dim; ++i) {
    k_r_.row(i).setZero();
    k_r_.col(i).setZero();
  }
  // zero touched rows/cols, then re-accumulate from the columns of nodes now
  // or previously owned by touched clusters (Eq 24 in the reduced space)
  for (int c = 0; c < new_n; ++c)
    if (touched[static_cast<std::size_t>(c)])
      for (int d = 0; d < dim; ++d) {
        k_r_.row(c * dim + d).setZero();
        k_r_.col(c * dim + d).setZero();
      }
  for (int n = 0; n < mesh_.n_nodes(); ++n) {
    const int ci = node_cluster_[static_cast<std::size_t>(n)];
    if (!touched[static_cast<std::size_t>(ci)]) continue;
    for (int di = 0; di < dim; ++di) {
      const int row = dim * n + di;
      for (Eigen::SparseMatrix<double>::InnerIterator it(k_fe_, row); it; ++it) {
        // column-major: it iterates column `row`; symmetric matrix
        const int nj = static_cast<int>(it.row()) / dim;
        const int dj = static_cast<int>(it.row()) % dim;
        const int cj = node_cluster_[static_cast<std::size_t>(nj)];
        k_r_(ci * dim + di, cj * dim + dj) += it.value();
        if (!touched[static_cast<std::size_t>(cj)])
          k_r_(cj * dim + dj, ci * dim + di) += it.value();
      }
    }
  }

  n_node_clusters_ = new_n;
  cluster_fixed_.assign(static_cast<std::size_t>(new_n), 0);
  std::vector<char> has_node(static_cast<std::size_t>(new_n), 0);
  for (int n = 0; n < mesh_.n_nodes(); ++n)
    has_node[static_cast<std::size_t>(node_cluster_[static_cast<std::size_t>(n)])] = 1;
  for (int n : mesh_.boundary_nodes())
    cluster_fixed_[static_cast<std::size_t>(node_cluster_[static_cast<std::size_t>(n)])] = 1;
  for (int c = 0; c < new_n; ++c)
    if (!has_node[static_cast<std::size_t>(c)]) cluster_fixed_[static_cast<std::size_t>(c)] = 1;

  Eigen::VectorXd new_fluct = Eigen::VectorXd::Zero(new_n * dim);
  for (int c = 0; c < before; ++c)
    for (int d = 0; d < dim; ++d) new_fluct[c * dim + d] = fluct_[c * dim + d];
  // children start from the parent's fluctuation
  for (const auto& [parent, a, b] : rr.transfer) {
    (void)a;
    for (int d = 0; d < dim; ++d)
      new_fluct[b * dim + d] = fluct_[parent * dim + d];
  }
  fluct_ = std::move(new_fluct);
  refresh_factor();
  (void)changed_nodes;
}

RveRunResult RveSimulator::run_loadpath(const Vec6& e_target) {
  RveRunResult out;
  auto& ctl = opt_.controller;
  const auto t0_all = std::chrono::steady_clock::now();

  double t = 0.0;
  int step = 0;
  while (t < 1.0 - 1e-12) {
    double dt;
    if (opt_.scheme == Scheme::AafIe)
      dt = critical_step(rates_, params_, ctl, false);
    else
      dt = 1.0 / opt_.n_steps;
    dt = std::min(dt, 1.0 - t);

    const Vec6 e_next = (t + dt) * e_target;
    const auto t0 = std::chrono::steady_clock::now();
    std::string err;
    if (!commit(e_next, dt, &err)) {
      out.completed = false;
      out.message = err + " at step " + std::to_string(step + 1);
      break;
    }
    t += dt;
    ++step;

    RveStepRecord rec;
    rec.step = step;
    rec.t = t;
    rec.dt = dt;
    rec.strain_eq = eq_strain(e_next);
    rec.stress_vm = von_mises(last_sd_);
    rec.damage = d_m_;
    rec.newton_iters = last_newton_;
    rec.max_extrap_err = last_extrap_err_;
    rec.clusters = decomp_.n_clusters;
    rec.gamma = ctl.gamma;
    rec.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.steps.push_back(rec);
    out.s1_path.push_back(last_s1_);
    out.sd_path.push_back(last_sd_);
    out.total_newton += last_newton_;
  }
  out.wall_online =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0_all)
          .count();
  out.wall_offline = offline_wall_;
  return out;
}

ReducedModel build_reduced_model(const Mesh& mesh,
                                 const std::vector<int>& node_cluster,
                                 int n_clusters, const MaterialParams& params) {
  if (static_cast<int>(node_cluster.size()) != mesh.n_nodes())
    throw std::invalid_argument("node decomposition does not cover the mesh");
  for (int c : node_cluster)
    if (c < 0 || c >= n_clusters)
      throw std::invalid_argument("node cluster label out of range");
  const FemModel model(mesh);
  const Mat6 c_el = elastic_tangent(params);
  SparseSystem sys = SparseSystem::assemble(
      model, std::vector<Mat6>(static_cast<std::size_t>(mesh.n_elements()), c_el));
  const auto& k = sys.matrix();
  const int dim = mesh.dim;
  ReducedModel rm;
  rm.node_cluster = node_cluster;
  rm.n_clusters = n_clusters;
  rm.k_r = Eigen::MatrixXd::Zero(n_clusters * dim, n_clusters * dim);
  for (int col = 0; col < k.outerSize(); ++col) {
    const int nj = col / dim, dj = col % dim;
    const int cj = node_cluster[static_cast<std::size_t>(nj)];
    for (Eigen::SparseMatrix<double>::InnerIterator it(k, col); it; ++it) {
      const int ni = static_cast<int>(it.row()) / dim;
      const int di = static_cast<int>(it.row()) % dim;
      rm.k_r(node_cluster[static_cast<std::size_t>(ni)] * dim + di, cj * dim + dj) +=
          it.value();
    }
  }
  return rm;
}

} // namespace poro
