#include "poro/multiscale.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace poro {

std::vector<char> region_box(const Mesh& mesh, const Eigen::Vector3d& lo,
                             const Eigen::Vector3d& hi) {
  std::vector<char> tag(static_cast<std::size_t>(mesh.n_elements()), 0);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const Eigen::Vector3d c = mesh.element_centroid(e);
    bool in = true;
    for (int d = 0; d < mesh.dim; ++d)
      if (c[d] < lo[d] || c[d] > hi[d]) in = false;
    tag[static_cast<std::size_t>(e)] = in ? 1 : 0;
  }
  return tag;
}

namespace {

double mesh_edge_length(const Mesh& mesh) {
  Eigen::Vector3d lo = mesh.nodes.front(), hi = mesh.nodes.front();
  for (const auto& x : mesh.nodes) {
    lo = lo.cwiseMin(x);
    hi = hi.cwiseMax(x);
  }
  double edge = 0.0;
  for (int d = 0; d < mesh.dim; ++d) edge = std::max(edge, hi[d] - lo[d]);
  return edge;
}

double rand_u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

} // namespace

MacroModel assign_rves(const Mesh& macro_mesh, const MaterialParams& mono,
                       const std::vector<char>& multiscale,
                       const std::vector<RveType>& library,
                       std::uint64_t seed) {
  MacroModel model;
  model.mesh = &macro_mesh;
  model.mono_params = mono;
  model.multiscale = multiscale;
  model.rve_type.assign(static_cast<std::size_t>(macro_mesh.n_elements()), -1);
  model.rves.resize(static_cast<std::size_t>(macro_mesh.n_elements()));

  int n_ms = 0;
  for (char m : multiscale) n_ms += m ? 1 : 0;
  if (n_ms == 0) return model;
  if (library.empty())
    throw std::invalid_argument("multiscale IPs present but the RVE library is empty");

  // mean macro element characteristic length
  double h_mean = 0.0;
  int count = 0;
  for (int e = 0; e < macro_mesh.n_elements(); ++e)
    if (multiscale[static_cast<std::size_t>(e)]) {
      h_mean += std::pow(macro_mesh.element_volume(e), 1.0 / macro_mesh.dim);
      ++count;
    }
  h_mean /= count;

  // one rescaled mesh per library type (blueprint geometry, shared read-only)
  std::vector<const Mesh*> scaled(library.size(), nullptr);
  for (std::size_t t = 0; t < library.size(); ++t) {
    const Mesh& src = *library[t].mesh;
    const double edge = mesh_edge_length(src);
    const double scale = h_mean / edge;
    if (std::abs(scale - 1.0) <= 0.05) {
      scaled[t] = &src;
    } else {
      auto m = std::make_unique<Mesh>(src);
      for (auto& x : m->nodes) x *= scale;
      m->finalize();
      scaled[t] = m.get();
      model.scaled_meshes.push_back(std::move(m));
    }
  }

  std::mt19937_64 rng(seed);
  for (int e = 0; e < macro_mesh.n_elements(); ++e) {
    if (!multiscale[static_cast<std::size_t>(e)]) continue;
    const int t = std::min(static_cast<int>(library.size()) - 1,
                           static_cast<int>(rand_u01(rng) * library.size()));
    model.rve_type[static_cast<std::size_t>(e)] = t;
    model.rves[static_cast<std::size_t>(e)] = RveSimulator::rom(
        *scaled[static_cast<std::size_t>(t)], library[static_cast<std::size_t>(t)].params,
        library[static_cast<std::size_t>(t)].decomp, library[static_cast<std::size_t>(t)].options);
  }
  return model;
}

namespace {

struct MacroBc {
  std::vector<int> dofs;
  std::vector<double> targets;
  std::vector<int> measure_dofs;
  double measure_target = 0.0;
};

MacroBc build_macro_bc(const Mesh& mesh, const LoadPath& path) {
  MacroBc bc;
  const int dim = mesh.dim;
  std::vector<double> per_dof(static_cast<std::size_t>(mesh.n_dofs()),
                              std::numeric_limits<double>::quiet_NaN());
  for (const auto& d : path.dirichlet) {
    const auto it = mesh.node_sets.find(d.set);
    if (it == mesh.node_sets.end())
      throw std::invalid_argument("unknown node set '" + d.set + "'");
    for (int n : it->second)
      per_dof[static_cast<std::size_t>(dim * n + d.dof)] = d.target;
  }
  for (int i = 0; i < mesh.n_dofs(); ++i)
    if (!std::isnan(per_dof[static_cast<std::size_t>(i)])) {
      bc.dofs.push_back(i);
      bc.targets.push_back(per_dof[static_cast<std::size_t>(i)]);
    }
  std::string mset = path.measure_set;
  int mdof = path.measure_dof;
  if (mset.empty()) {
    double best = -1.0;
    for (const auto& d : path.dirichlet)
      if (std::abs(d.target) > best) {
        best = std::abs(d.target);
        mset = d.set;
        mdof = d.dof;
      }
  }
  for (int n : mesh.node_sets.at(mset)) bc.measure_dofs.push_back(dim * n + mdof);
  for (const auto& d : path.dirichlet)
    if (d.set == mset && d.dof == mdof) bc.measure_target = d.target;
  return bc;
}

} // namespace

MultiscaleResult run_multiscale(MacroModel& model, const MultiscaleConfig& cfg) {
  const Mesh& mesh = *model.mesh;
  const int ne = mesh.n_elements();
  const int dim = mesh.dim;
  MaterialParams mono = model.mono_params;
  mono.validate();

  MultiscaleResult out;
  FemModel fem(mesh);
  MacroBc bc = build_macro_bc(mesh, cfg.path);

  StepController ctl = cfg.controller;
  ctl.init(mono);

  // elastic homogenized moduli per element
  const Mat6 c_el_mono = elastic_tangent(mono);
  std::vector<Mat6> c_elastic(static_cast<std::size_t>(ne), c_el_mono);
  for (int e = 0; e < ne; ++e)
    if (model.multiscale[static_cast<std::size_t>(e)])
      c_elastic[static_cast<std::size_t>(e)] =
          model.rves[static_cast<std::size_t>(e)]->elastic_homogenized();

  SparseSystem sys = SparseSystem::assemble(fem, c_elastic);
  sys.set_dirichlet(bc.dofs, std::vector<double>(bc.dofs.size(), 0.0));

  std::optional<NeighborTable> nl;
  if (cfg.l0 > 0.0) nl = build_neighbor_table(mesh, cfg.l0);

  std::vector<IpState> mono_states(static_cast<std::size_t>(ne));
  for (auto& s : mono_states) s.sy_last = mono.yield(0.0).first;
  std::vector<IpRateData> rates(static_cast<std::size_t>(ne));
  std::vector<double> d_local(static_cast<std::size_t>(ne), 0.0);
  std::vector<double> d_hat(static_cast<std::size_t>(ne), 0.0);
  std::vector<double> factor_in_k(static_cast<std::size_t>(ne), 1.0);
  std::vector<Vec6> inel_prev(static_cast<std::size_t>(ne), Vec6::Zero());
  Eigen::VectorXd u = Eigen::VectorXd::Zero(mesh.n_dofs());

  auto element_strain = [&](const Eigen::VectorXd& uu, int e) {
    const int npe = mesh.nodes_per_element();
    Eigen::VectorXd ue(dim * npe);
    const auto& el = mesh.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int d = 0; d < dim; ++d)
        ue[dim * a + d] = uu[dim * el[static_cast<std::size_t>(a)] + d];
    return Vec6(fem.geo[static_cast<std::size_t>(e)].b * ue);
  };
  auto internal_force = [&](const std::vector<Vec6>& stresses) {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.n_dofs());
    const int npe = mesh.nodes_per_element();
    for (int e = 0; e < ne; ++e) {
      const auto& geo = fem.geo[static_cast<std::size_t>(e)];
      const Eigen::VectorXd fe =
          geo.b.transpose() * stresses[static_cast<std::size_t>(e)] * geo.volume;
      const auto& el = mesh.elements[static_cast<std::size_t>(e)];
      for (int a = 0; a < npe; ++a)
        for (int d = 0; d < dim; ++d)
          f[dim * el[static_cast<std::size_t>(a)] + d] += fe[dim * a + d];
    }
    return f;
  };
  auto free_norm = [&](const Eigen::VectorXd& full) {
    double s = 0.0;
    for (int dof : sys.free_dofs()) s += full[dof] * full[dof];
    return std::sqrt(s);
  };

  const auto t_start = std::chrono::steady_clock::now();
  double t = 0.0;
  int step = 0;
  double dt_prev = 0.0;
  while (t < 1.0 - 1e-12) {
    double dt = critical_step(rates, mono, ctl, true);
    dt = std::min(dt, 1.0 - t);
    const double t_new = t + dt;
    const double ratio = dt_prev > 0.0 ? dt / dt_prev : 0.0;

    StepRecord rec;
    rec.step = ++step;
    rec.dt = dt;
    rec.gamma = ctl.gamma;
    const auto t0 = std::chrono::steady_clock::now();

    // staggered damage field from the last committed state
    std::vector<double> factors(static_cast<std::size_t>(ne), 1.0);
    for (int e = 0; e < ne; ++e)
      factors[static_cast<std::size_t>(e)] =
          std::max(1.0 - d_hat[static_cast<std::size_t>(e)], kRupturedStiffnessFactor);
    {
      std::vector<int> changed;
      std::vector<Mat6> fresh;
      for (int e = 0; e < ne; ++e)
        if (std::abs(factors[static_cast<std::size_t>(e)] -
                     factor_in_k[static_cast<std::size_t>(e)]) >
            cfg.damage_k_update_tol) {
          changed.push_back(e);
          fresh.push_back(factors[static_cast<std::size_t>(e)] *
                          c_elastic[static_cast<std::size_t>(e)]);
          factor_in_k[static_cast<std::size_t>(e)] = factors[static_cast<std::size_t>(e)];
        }
      if (!changed.empty()) sys.update_incremental(changed, fresh);
    }

    Eigen::VectorXd u_iter = u;
    for (std::size_t i = 0; i < bc.dofs.size(); ++i)
      u_iter[bc.dofs[i]] = t_new * bc.targets[i];

    std::vector<Vec6> stresses(static_cast<std::size_t>(ne));
    std::vector<Vec6> s1_cache(static_cast<std::size_t>(ne), Vec6::Zero());
    double ref = -1.0;
    bool converged = false;
    for (int it = 0; it <= cfg.max_newton; ++it) {
      for (int e = 0; e < ne; ++e) {
        const Vec6 strain = element_strain(u_iter, e);
        Vec6 s0;
        if (model.multiscale[static_cast<std::size_t>(e)]) {
          const HomogenizedResponse r =
              model.rves[static_cast<std::size_t>(e)]->evaluate_trial(strain, ratio);
          s0 = r.stress_undamaged;
        } else {
          const auto& cm = mono_states[static_cast<std::size_t>(e)];
          const Vec6 deps_extrap = ratio * cm.deps_pl_n;
          s0 = c_el_mono * (strain - cm.eps_pl - deps_extrap);
        }
        s1_cache[static_cast<std::size_t>(e)] = s0;
        stresses[static_cast<std::size_t>(e)] =
            factors[static_cast<std::size_t>(e)] * s0;
      }
      const Eigen::VectorXd r = -internal_force(stresses);
      const double rn = free_norm(r);
      if (ref < 0.0) ref = std::max(rn, 1e-300);
      rec.residual = rn / ref;
      if (rn <= cfg.newton_tol * ref) {
        converged = true;
        break;
      }
      if (it == cfg.max_newton || rn > 1e6 * ref) break;
      Eigen::VectorXd rhs = r;
      for (int dof : bc.dofs) rhs[dof] = 0.0;
      Eigen::VectorXd du = sys.solve_direct(rhs);
      for (int dof : bc.dofs) du[dof] = 0.0;
      u_iter += du;
      rec.newton_iters += 1;
    }
    if (!converged) {
      out.diverged = true;
      out.message = "macro equilibrium did not converge at step " +
                    std::to_string(step);
      out.report.completed = false;
      break;
    }

    // accept: commit RVEs and monoscale states, then refresh the damage field
    double max_err = 0.0;
    for (int e = 0; e < ne; ++e) {
      const Vec6 strain = element_strain(u_iter, e);
      if (model.multiscale[static_cast<std::size_t>(e)]) {
        auto& rve = *model.rves[static_cast<std::size_t>(e)];
        std::string err;
        if (!rve.commit(strain, dt, &err)) {
          out.diverged = true;
          out.message = "RVE at element " + std::to_string(e + 1) + " failed: " +
                        err + " (macro step " + std::to_string(step) + ")";
          break;
        }
        d_local[static_cast<std::size_t>(e)] = rve.last_damage();
        // inelastic strain proxy drives the macro step controller
        Eigen::FullPivLU<Mat6> lu; // active-block inverse via full tangent
        Vec6 e_el = Vec6::Zero();
        const Mat6& cm_el = c_elastic[static_cast<std::size_t>(e)];
        for (int i = 0; i < 3; ++i) e_el[i] = 0.0;
        // solve in-plane block only
        {
          const int na = voigt_count(dim);
          Eigen::MatrixXd a(na, na);
          Eigen::VectorXd b(na);
          for (int r2 = 0; r2 < na; ++r2) {
            b[r2] = s1_cache[static_cast<std::size_t>(e)][voigt_component(dim, r2)];
            for (int c2 = 0; c2 < na; ++c2)
              a(r2, c2) = cm_el(voigt_component(dim, r2), voigt_component(dim, c2));
          }
          const Eigen::VectorXd x = a.partialPivLu().solve(b);
          for (int r2 = 0; r2 < na; ++r2) e_el[voigt_component(dim, r2)] = x[r2];
        }
        const Vec6 inel = strain - e_el;
        auto& rate = rates[static_cast<std::size_t>(e)];
        rate.deps_pl_nm1 = rate.deps_pl_n;
        rate.deps_pl_n = inel - inel_prev[static_cast<std::size_t>(e)];
        inel_prev[static_cast<std::size_t>(e)] = inel;
        rate.plastic = true; // proxy: no event prediction for multiscale IPs
        rate.dlambda_rate = 0.0;
      } else {
        auto& cm = mono_states[static_cast<std::size_t>(e)];
        StressReturn ret = return_map_j2(mono, cm, strain - cm.strain);
        IpState st = ret.state;
        update_damage_local(mono, fem.geo[static_cast<std::size_t>(e)].l_e,
                            ret.dlambda, st);
        const Vec6 err = ratio * cm.deps_pl_n - ret.deps_pl;
        max_err = std::max(max_err, strain_max_abs(err));
        auto& rate = rates[static_cast<std::size_t>(e)];
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
        rate.transitioned = !was_plastic && rate.plastic;
        cm = std::move(st);
        d_local[static_cast<std::size_t>(e)] = cm.damage;
      }
    }
    if (out.diverged) break;

    d_hat = nl.has_value() ? nonlocal_average(*nl, d_local) : d_local;
    u = u_iter;
    t = t_new;
    ctl.dt_nm1 = ctl.dt_n;
    ctl.dt_n = dt;
    dt_prev = dt;

    rec.t = t;
    rec.displacement = t * std::abs(bc.measure_target);
    {
      const Eigen::VectorXd f = internal_force(stresses);
      double load = 0.0;
      for (int dof : bc.measure_dofs) load += f[dof];
      rec.load = load;
    }
    rec.max_extrap_err = max_err;
    rec.wall_s =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
            .count();
    out.report.steps.push_back(rec);
    out.report.total_newton += rec.newton_iters;
  }

  out.report.wall_total =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
          .count();
  out.d_hat = d_hat;
  out.d_local = d_local;
  out.ebar.assign(static_cast<std::size_t>(ne), 0.0);
  for (int e = 0; e < ne; ++e)
    out.ebar[static_cast<std::size_t>(e)] =
        model.multiscale[static_cast<std::size_t>(e)]
            ? eq_strain(inel_prev[static_cast<std::size_t>(e)])
            : mono_states[static_cast<std::size_t>(e)].ebar_pl;
  out.displacement = u;
  out.counters = sys.counters();
  return out;
}

} // namespace poro
