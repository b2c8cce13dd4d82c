#include "poro/integrate.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace poro {

Scheme scheme_from_string(const std::string& s) {
  if (s == "implicit") return Scheme::Implicit;
  if (s == "implex") return Scheme::Implex;
  if (s == "caf-ie") return Scheme::CafIe;
  if (s == "aaf-ie") return Scheme::AafIe;
  throw std::invalid_argument("unknown scheme '" + s + "'");
}

std::string scheme_name(Scheme s) {
  switch (s) {
    case Scheme::Implicit: return "implicit";
    case Scheme::Implex: return "implex";
    case Scheme::CafIe: return "caf-ie";
    case Scheme::AafIe: return "aaf-ie";
  }
  return "?";
}

void StepController::init(const MaterialParams& params) {
  if (e_ref <= 0.0) e_ref = params.yield(0.0).first / params.young;
  if (dt_min <= 0.0) dt_min = dt0 / 100.0;
  if (dt_max <= 0.0) dt_max = 10.0 * dt0;
  dt_n = dt_nm1 = 0.0;
  gamma = 1.0;
}

double critical_step(const std::vector<IpRateData>& ips,
                     const MaterialParams& params, StepController& ctl,
                     bool damage_enabled) {
  const double bound = ctl.error_bound();
  double dt = ctl.dt_max;

  if (ctl.dt_n > 0.0) {
    // Eq 36: dt <= sqrt(xi E_ref dt_n / max_X |dEpl_n/dt_n - dEpl_nm1/dt_nm1|)
    double max_rate_diff = 0.0;
    bool any_plastic = false;
    for (const auto& ip : ips) {
      any_plastic = any_plastic || ip.plastic;
      Vec6 diff = ip.deps_pl_n / ctl.dt_n;
      if (ctl.dt_nm1 > 0.0) diff -= ip.deps_pl_nm1 / ctl.dt_nm1;
      max_rate_diff = std::max(max_rate_diff, strain_max_abs(diff));
    }
    if (max_rate_diff > 0.0)
      dt = std::min(dt, std::sqrt(ctl.xi * ctl.e_ref * ctl.dt_n / max_rate_diff));

    // Predictive event capping: land on upcoming yield onsets, hardening-table
    // kinks and damage initiation, spending at most `safety` of the per-step
    // error budget on the overshoot.
    const double three_g = 3.0 * params.shear();
    for (const auto& ip : ctl.strict_events ? ips : std::vector<IpRateData>{}) {
      if (!ip.plastic) {
        const double fdot = (ip.f_trial - ip.f_trial_prev) / ctl.dt_n;
        if (fdot > 1e-14 && ip.f_trial < 0.0) {
          const double h = params.yield(ip.ebar).second;
          const double t_cross = -ip.f_trial / fdot;
          const double over = ctl.safety * bound * (three_g + h) / fdot;
          dt = std::min(dt, t_cross + over);
        }
        continue;
      }
      const double rate = ip.dlambda_rate;
      if (rate <= 0.0) continue;
      if (ip.transitioned) {
        // freshly crossed a C1 point: the stored increments are not yet
        // representative, keep the whole next step inside the budget
        dt = std::min(dt, std::max(ctl.safety * bound / rate, ctl.dt_min));
      }
      double next_break = std::numeric_limits<double>::infinity();
      for (const auto& [eb, sy] : params.hardening) {
        (void)sy;
        if (eb > ip.ebar + 1e-15) {
          next_break = eb;
          break;
        }
      }
      if (damage_enabled && params.eps_d > ip.ebar + 1e-15)
        next_break = std::min(next_break, params.eps_d);
      if (std::isfinite(next_break)) {
        const double t_k = (next_break - ip.ebar) / rate;
        const double over = ctl.safety * bound / rate;
        dt = std::min(dt, t_k + over);
      }
    }
    // smooth growth while plasticity is active; the degenerate elastic case
    // jumps straight to dt_max
    if (any_plastic) dt = std::min(dt, ctl.growth * ctl.dt_n);
  } else {
    dt = ctl.dt0;
  }

  dt = std::clamp(dt, ctl.dt_min, ctl.dt_max);
  ctl.gamma = dt / ctl.dt0;
  return dt;
}

namespace {

struct BcData {
  std::vector<int> dofs;
  std::vector<double> targets; // value at t = 1
  std::vector<int> measure_dofs;
  double measure_target = 0.0;
};

BcData build_bc(const Mesh& mesh, const LoadPath& path) {
  BcData bc;
  const int dim = mesh.dim;
  std::vector<double> per_dof(static_cast<std::size_t>(mesh.n_dofs()),
                              std::numeric_limits<double>::quiet_NaN());
  for (const auto& d : path.dirichlet) {
    const auto it = mesh.node_sets.find(d.set);
    if (it == mesh.node_sets.end())
      throw std::invalid_argument("load path references unknown node set '" +
                                  d.set + "'");
    if (d.dof < 0 || d.dof >= dim)
      throw std::invalid_argument("load path dof out of range");
    for (int n : it->second)
      per_dof[static_cast<std::size_t>(dim * n + d.dof)] = d.target;
  }
  for (int i = 0; i < mesh.n_dofs(); ++i)
    if (!std::isnan(per_dof[static_cast<std::size_t>(i)])) {
      bc.dofs.push_back(i);
      bc.targets.push_back(per_dof[static_cast<std::size_t>(i)]);
    }
  if (bc.dofs.empty())
    throw std::invalid_argument("load path has no Dirichlet data");

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
  const auto it = mesh.node_sets.find(mset);
  if (it == mesh.node_sets.end())
    throw std::invalid_argument("measure set '" + mset + "' not found");
  for (int n : it->second) bc.measure_dofs.push_back(dim * n + mdof);
  for (const auto& d : path.dirichlet)
    if (d.set == mset && d.dof == mdof) bc.measure_target = d.target;
  return bc;
}

class LoadPathDriver {
public:
  LoadPathDriver(const Mesh& mesh, const MaterialParams& params,
                 const LoadPath& path, const DriverConfig& cfg)
      : mesh_(mesh), params_(params), cfg_(cfg), model_(mesh),
        bc_(build_bc(mesh, path)) {
    params_.validate();
    const int ne = mesh.n_elements();
    states_.assign(static_cast<std::size_t>(ne), IpState{});
    rates_.assign(static_cast<std::size_t>(ne), IpRateData{});
    for (auto& s : states_) s.sy_last = params_.yield(0.0).first;
    committed_d_.assign(static_cast<std::size_t>(ne), 0.0);
    u_ = Eigen::VectorXd::Zero(mesh.n_dofs());
    if (cfg_.l0 > 0.0) nl_ = build_neighbor_table(mesh, cfg_.l0);
    factor_in_k_.assign(static_cast<std::size_t>(ne), 1.0);
    cfg_.controller.init(params_);
  }

  RunResult run() {
    const auto t_start = std::chrono::steady_clock::now();
    const Mat6 c_el = elastic_tangent(params_);
    sys_ = SparseSystem::assemble(
        model_,
        std::vector<Mat6>(static_cast<std::size_t>(mesh_.n_elements()), c_el));
    sys_.set_dirichlet(bc_.dofs, bc_.targets); // constrained set fixed over the run

    double t = 0.0;
    int step = 0;
    auto& ctl = cfg_.controller;
    while (t < 1.0 - 1e-12) {
      double dt;
      if (cfg_.scheme == Scheme::AafIe)
        dt = critical_step(rates_, params_, ctl, cfg_.enable_damage);
      else
        dt = 1.0 / cfg_.n_steps;
      if (cfg_.scheme == Scheme::AafIe && dt < ctl.dt_min * (1.0 - 1e-12) &&
          out_.report.failure.empty())
        out_.report.failure = "step underflow below dt_min";
      dt = std::min(dt, 1.0 - t);

      StepRecord rec;
      rec.step = ++step;
      rec.dt = dt;
      rec.gamma = ctl.gamma;
      const auto t0 = std::chrono::steady_clock::now();
      bool ok;
      if (cfg_.scheme == Scheme::Implicit)
        ok = implicit_step(t + dt, dt, rec, 0);
      else
        ok = implex_step(t + dt, dt, rec);
      rec.wall_s =
          std::chrono::duration<double>(std::chrono::steady_clock::now() - t0)
              .count();
      if (!ok) {
        out_.diverged = true;
        out_.report.completed = false;
        if (out_.message.empty())
          out_.message = "divergence at step " + std::to_string(step);
        break;
      }
      t += dt;
      ctl.dt_nm1 = ctl.dt_n;
      ctl.dt_n = dt;
      rec.t = t;
      rec.displacement = t * std::abs(bc_.measure_target);
      rec.load = measure_load();
      out_.report.steps.push_back(rec);
      out_.report.total_newton += rec.newton_iters;
      if (out_.initiation_step < 0)
        for (const auto& s : states_)
          if (s.initiated) {
            out_.initiation_step = step;
            break;
          }
    }
    out_.report.wall_total =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start)
            .count();
    out_.states = states_;
    out_.displacement = u_;
    out_.counters = sys_.counters();
    return std::move(out_);
  }

private:
  Vec6 element_strain(const Eigen::VectorXd& u, int e) const {
    const int dim = mesh_.dim;
    const int npe = mesh_.nodes_per_element();
    Eigen::VectorXd ue(dim * npe);
    const auto& el = mesh_.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int d = 0; d < dim; ++d)
        ue[dim * a + d] = u[dim * el[static_cast<std::size_t>(a)] + d];
    return model_.geo[static_cast<std::size_t>(e)].b * ue;
  }

  Eigen::VectorXd internal_force(const std::vector<Vec6>& stresses) const {
    Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh_.n_dofs());
    const int dim = mesh_.dim;
    const int npe = mesh_.nodes_per_element();
    for (int e = 0; e < mesh_.n_elements(); ++e) {
      const auto& geo = model_.geo[static_cast<std::size_t>(e)];
      const Eigen::VectorXd fe =
          geo.b.transpose() * stresses[static_cast<std::size_t>(e)] * geo.volume;
      const auto& el = mesh_.elements[static_cast<std::size_t>(e)];
      for (int a = 0; a < npe; ++a)
        for (int d = 0; d < dim; ++d)
          f[dim * el[static_cast<std::size_t>(a)] + d] += fe[dim * a + d];
    }
    return f;
  }

  double free_norm(const Eigen::VectorXd& full) const {
    double s = 0.0;
    for (int dof : sys_.free_dofs()) s += full[dof] * full[dof];
    return std::sqrt(s);
  }

  void apply_bc(Eigen::VectorXd& u, double t) const {
    for (std::size_t i = 0; i < bc_.dofs.size(); ++i)
      u[bc_.dofs[i]] = t * bc_.targets[i];
  }

  double effective_factor(int e, double fallback_d) const {
    if (!cfg_.enable_damage) return 1.0;
    const double d =
        d_eff_.empty() ? fallback_d : d_eff_[static_cast<std::size_t>(e)];
    return std::max(1.0 - d, kRupturedStiffnessFactor);
  }

  double measure_load() const {
    std::vector<Vec6> stresses(static_cast<std::size_t>(mesh_.n_elements()));
    const Mat6 c_el = elastic_tangent(params_);
    for (int e = 0; e < mesh_.n_elements(); ++e) {
      const auto& s = states_[static_cast<std::size_t>(e)];
      const double factor = cfg_.enable_damage
                                ? std::max(1.0 - committed_d_[static_cast<std::size_t>(e)],
                                           kRupturedStiffnessFactor)
                                : 1.0;
      stresses[static_cast<std::size_t>(e)] =
          factor * (c_el * (s.strain - s.eps_pl));
    }
    const Eigen::VectorXd f = internal_force(stresses);
    double load = 0.0;
    for (int dof : bc_.measure_dofs) load += f[dof];
    return load;
  }

  // ---- implicit (DNS oracle) ---------------------------------------------

  bool implicit_step(double t_new, double dt, StepRecord& rec, int depth) {
    const int ne = mesh_.n_elements();
    Eigen::VectorXd u = u_;
    apply_bc(u, t_new);
    // BCs live in u; corrections are homogeneous on the constrained set
    sys_.set_prescribed_values(bc_.dofs,
                               std::vector<double>(bc_.dofs.size(), 0.0));

    std::vector<IpState> scratch(static_cast<std::size_t>(ne));
    std::vector<StressReturn> rets(static_cast<std::size_t>(ne));
    std::vector<Vec6> stresses(static_cast<std::size_t>(ne));
    std::vector<Mat6> tangents(static_cast<std::size_t>(ne));

    double ref = -1.0;
    bool converged = false;
    for (int it = 0; it <= cfg_.max_newton; ++it) {
      for (int e = 0; e < ne; ++e) {
        const auto& cm = states_[static_cast<std::size_t>(e)];
        StressReturn ret =
            return_map_j2(params_, cm, element_strain(u, e) - cm.strain);
        IpState st = ret.state;
        if (cfg_.enable_damage)
          update_damage_local(params_,
                              model_.geo[static_cast<std::size_t>(e)].l_e,
                              ret.dlambda, st);
        const double factor =
            cfg_.enable_damage
                ? std::max(1.0 - st.damage, kRupturedStiffnessFactor)
                : 1.0;
        stresses[static_cast<std::size_t>(e)] = factor * ret.stress0;
        if (cfg_.enable_damage && st.initiated && st.ebar_pl > 0.0) {
          tangents[static_cast<std::size_t>(e)] =
              st.ruptured
                  ? Mat6(kRupturedStiffnessFactor * elastic_tangent(params_))
                  : implicit_damage_tangent(
                        params_, model_.geo[static_cast<std::size_t>(e)].l_e,
                        st, ret);
        } else {
          tangents[static_cast<std::size_t>(e)] = ret.c_alg;
        }
        scratch[static_cast<std::size_t>(e)] = std::move(st);
        rets[static_cast<std::size_t>(e)] = std::move(ret);
      }
      const Eigen::VectorXd r = -internal_force(stresses);
      const double rn = free_norm(r);
      if (ref < 0.0) ref = std::max(rn, 1e-300);
      rec.residual = rn / ref;
      if (rn <= cfg_.newton_tol * ref) {
        converged = true;
        break;
      }
      if (it == cfg_.max_newton || rn > 1e4 * ref) break;
      sys_.reassemble(tangents); // full Newton: consistent tangent each iteration
      Eigen::VectorXd du;
      try {
        Eigen::VectorXd rhs = r;
        for (int dof : bc_.dofs) rhs[dof] = 0.0;
        du = sys_.solve_direct(rhs);
      } catch (const SolverError& err) {
        out_.message = std::string("implicit tangent not SPD: ") + err.what();
        return maybe_substep(t_new, dt, rec, depth);
      }
      for (int dof : bc_.dofs) du[dof] = 0.0;
      u += du;
      rec.newton_iters += 1;
    }
    if (!converged) {
      if (out_.message.empty())
        out_.message = "implicit Newton did not converge (relative residual " +
                       std::to_string(rec.residual) + ")";
      return maybe_substep(t_new, dt, rec, depth);
    }

    for (int e = 0; e < ne; ++e)
      commit_state(e, scratch[static_cast<std::size_t>(e)],
                   rets[static_cast<std::size_t>(e)], dt);
    rec.max_extrap_err = 0.0;
    u_ = u;
    return true;
  }

  bool maybe_substep(double t_new, double dt, StepRecord& rec, int depth) {
    if (!cfg_.implicit_substeps || depth >= cfg_.max_substep_depth) return false;
    StepRecord a, b;
    if (!implicit_step(t_new - 0.5 * dt, 0.5 * dt, a, depth + 1)) return false;
    if (!implicit_step(t_new, 0.5 * dt, b, depth + 1)) return false;
    rec.newton_iters += a.newton_iters + b.newton_iters;
    rec.residual = b.residual;
    out_.message.clear();
    return true;
  }

  // ---- impl-exp family -----------------------------------------------------

  bool implex_step(double t_new, double dt, StepRecord& rec) {
    const int ne = mesh_.n_elements();
    const auto& ctl = cfg_.controller;
    const double ratio = ctl.dt_n > 0.0 ? dt / ctl.dt_n : 0.0;
    const Mat6 c_el = elastic_tangent(params_);
    const double g = params_.shear();

    // explicit stage: extrapolated internal variables, independent of u
    std::vector<Vec6> deps_extrap(static_cast<std::size_t>(ne), Vec6::Zero());
    std::vector<double> dlam_extrap(static_cast<std::size_t>(ne), 0.0);
    std::vector<double> d_tilde(static_cast<std::size_t>(ne), 0.0);
    for (int e = 0; e < ne; ++e) {
      const auto& s = states_[static_cast<std::size_t>(e)];
      deps_extrap[static_cast<std::size_t>(e)] = ratio * s.deps_pl_n;
      dlam_extrap[static_cast<std::size_t>(e)] = ratio * s.dlambda;
      if (cfg_.enable_damage) {
        double d_loc = s.damage;
        const double ebar_tilde =
            s.ebar_pl + dlam_extrap[static_cast<std::size_t>(e)];
        if (s.initiated || (params_.eps_d > 0.0 && ebar_tilde / params_.eps_d >= 1.0)) {
          if (params_.law == DamageLaw::Exponential) {
            d_loc = std::max(d_loc, damage_evolve_exponential(params_, ebar_tilde));
          } else {
            const double diss =
                s.dissipated +
                s.sy_last * model_.geo[static_cast<std::size_t>(e)].l_e *
                    dlam_extrap[static_cast<std::size_t>(e)];
            d_loc = diss >= 0.99 * params_.g_f
                        ? 1.0
                        : std::max(d_loc, energy_to_damage(diss, params_.g_f));
          }
        }
        if (s.ruptured) d_loc = 1.0;
        d_tilde[static_cast<std::size_t>(e)] = d_loc;
      }
    }
    if (cfg_.enable_damage && nl_.has_value())
      d_eff_ = nonlocal_average(*nl_, d_tilde); // staggered, once per step
    else
      d_eff_ = d_tilde;

    // stiffness: implex re-assembles per step; CAF/AAF-IE only touch
    // damage-changed entries of the once-factored elastic matrix (Eq 24)
    if (cfg_.scheme == Scheme::Implex) {
      std::vector<Mat6> tangents(static_cast<std::size_t>(ne));
      for (int e = 0; e < ne; ++e)
        tangents[static_cast<std::size_t>(e)] = implex_tangent(
            e, dlam_extrap[static_cast<std::size_t>(e)],
            cfg_.enable_damage ? d_eff_[static_cast<std::size_t>(e)] : 0.0, c_el,
            g);
      sys_.reassemble(tangents);
    } else if (cfg_.enable_damage) {
      std::vector<int> changed;
      std::vector<Mat6> fresh;
      for (int e = 0; e < ne; ++e) {
        const double factor = std::max(1.0 - d_eff_[static_cast<std::size_t>(e)],
                                       kRupturedStiffnessFactor);
        if (std::abs(factor - factor_in_k_[static_cast<std::size_t>(e)]) >
            cfg_.damage_k_update_tol) {
          changed.push_back(e);
          fresh.push_back(factor * c_el);
          factor_in_k_[static_cast<std::size_t>(e)] = factor;
        }
      }
      if (!changed.empty()) sys_.update_incremental(changed, fresh);
    }

    Eigen::VectorXd u = u_;
    apply_bc(u, t_new);
    sys_.set_prescribed_values(bc_.dofs,
                               std::vector<double>(bc_.dofs.size(), 0.0));

    std::vector<Vec6> stresses(static_cast<std::size_t>(ne));
    double ref = -1.0;
    bool converged = false;
    for (int it = 0; it <= cfg_.max_newton; ++it) {
      for (int e = 0; e < ne; ++e)
        stresses[static_cast<std::size_t>(e)] =
            explicit_stress(e, u, deps_extrap, dlam_extrap, c_el, g);
      const Eigen::VectorXd r = -internal_force(stresses);
      const double rn = free_norm(r);
      if (ref < 0.0) ref = std::max(rn, 1e-300);
      rec.residual = rn / ref;
      if (rn <= cfg_.newton_tol * ref) {
        converged = true;
        break;
      }
      if (it == cfg_.max_newton || rn > 1e6 * ref) break;
      Eigen::VectorXd rhs = r;
      for (int dof : bc_.dofs) rhs[dof] = 0.0;
      Eigen::VectorXd du = sys_.solve_direct(rhs);
      for (int dof : bc_.dofs) du[dof] = 0.0;
      u += du;
      rec.newton_iters += 1;
    }
    if (!converged) {
      out_.message = "impl-exp equilibrium did not converge";
      return false;
    }

    // implicit correction per point at the converged strain
    double max_err = 0.0;
    for (int e = 0; e < ne; ++e) {
      const auto& cm = states_[static_cast<std::size_t>(e)];
      StressReturn ret =
          return_map_j2(params_, cm, element_strain(u, e) - cm.strain);
      IpState st = ret.state;
      if (cfg_.enable_damage)
        update_damage_local(params_, model_.geo[static_cast<std::size_t>(e)].l_e,
                            ret.dlambda, st);
      const Vec6 err = deps_extrap[static_cast<std::size_t>(e)] - ret.deps_pl;
      max_err = std::max(max_err, strain_max_abs(err));
      commit_state(e, st, ret, dt);
    }
    rec.max_extrap_err = max_err;
    u_ = u;
    return true;
  }

  Vec6 explicit_stress(int e, const Eigen::VectorXd& u,
                       const std::vector<Vec6>& deps_extrap,
                       const std::vector<double>& dlam_extrap, const Mat6& c_el,
                       double g) const {
    const auto& s = states_[static_cast<std::size_t>(e)];
    const Vec6 strain = element_strain(u, e);
    Vec6 s_tilde;
    if (cfg_.scheme == Scheme::Implex) {
      // radial form with the extrapolated multiplier (Table 1)
      const Vec6 s_trial = c_el * (strain - s.eps_pl);
      const double q_tr = von_mises(s_trial);
      const double dl = dlam_extrap[static_cast<std::size_t>(e)];
      if (dl > 0.0 && q_tr > 0.0) {
        const double scale = std::max(0.0, 1.0 - 3.0 * g * dl / q_tr);
        s_tilde = s_trial - (1.0 - scale) * deviator(s_trial);
      } else {
        s_tilde = s_trial;
      }
    } else {
      // Eq 21: extrapolated plastic strain tensor; tangent C_el exactly (Eq 23)
      s_tilde =
          c_el * (strain - s.eps_pl - deps_extrap[static_cast<std::size_t>(e)]);
    }
    return effective_factor(e, s.damage) * s_tilde;
  }

  Mat6 implex_tangent(int e, double dlam, double d_eff, const Mat6& c_el,
                      double g) const {
    const double factor = cfg_.enable_damage
                              ? std::max(1.0 - d_eff, kRupturedStiffnessFactor)
                              : 1.0;
    if (dlam <= 0.0) return factor * c_el;
    const auto& s = states_[static_cast<std::size_t>(e)];
    const Vec6 s_trial = c_el * (s.strain - s.eps_pl);
    const double q_tr = von_mises(s_trial);
    if (q_tr <= 0.0) return factor * c_el;
    // C~ = K m m^T + 2G(1-a) P + 2G a n n~^T, a clamped below 1 to preserve
    // positive definiteness in the extrapolation-overshoot region
    const double a = std::min(0.95, 3.0 * g * dlam / q_tr);
    Vec6 m = Vec6::Zero();
    m[0] = m[1] = m[2] = 1.0;
    const Vec6 dev = deviator(s_trial);
    const double dev_norm2 = contract_stress(dev, dev);
    Mat6 c = params_.bulk() * (m * m.transpose()) +
             2.0 * g * (1.0 - a) * deviatoric_projector();
    if (dev_norm2 > 0.0) c += 2.0 * g * a * (dev * dev.transpose()) / dev_norm2;
    return factor * c;
  }

  void commit_state(int e, IpState& st, const StressReturn& ret, double dt) {
    auto& cm = states_[static_cast<std::size_t>(e)];
    auto& rate = rates_[static_cast<std::size_t>(e)];

    const bool was_plastic = cm.dlambda > 0.0;
    const bool now_plastic = ret.dlambda > 0.0;
    const int seg_before = hardening_segment(cm.ebar_pl);
    const int seg_after = hardening_segment(st.ebar_pl);
    const bool init_before = cm.initiated;

    st.deps_pl_nm1 = cm.deps_pl_n;
    st.deps_pl_n = ret.deps_pl;
    st.dlambda = ret.dlambda;

    rate.deps_pl_nm1 = rate.deps_pl_n;
    rate.deps_pl_n = ret.deps_pl;
    rate.f_trial_prev = rate.f_trial;
    rate.f_trial = ret.f_trial;
    rate.ebar = st.ebar_pl;
    rate.plastic = now_plastic;
    // multiplier rate: the trial-f rate over (3G+H) stays valid across the
    // onset step, where dlambda/dt averages over the elastic fraction
    double lam_rate = dt > 0.0 ? ret.dlambda / dt : 0.0;
    if (now_plastic && dt > 0.0) {
      const double fdot = (rate.f_trial - rate.f_trial_prev) / dt;
      const double h = params_.yield(st.ebar_pl).second;
      lam_rate = std::max(lam_rate, fdot / (3.0 * params_.shear() + h));
    }
    rate.dlambda_rate = lam_rate;
    rate.transitioned = (!was_plastic && now_plastic) ||
                        (now_plastic && seg_before != seg_after) ||
                        (st.initiated && !init_before);
    cm = std::move(st);
    committed_d_[static_cast<std::size_t>(e)] =
        d_eff_.empty() ? cm.damage : d_eff_[static_cast<std::size_t>(e)];
  }

  int hardening_segment(double ebar) const {
    int seg = 0;
    for (std::size_t i = 1; i < params_.hardening.size(); ++i)
      if (ebar > params_.hardening[i].first) seg = static_cast<int>(i);
    return seg;
  }

  const Mesh& mesh_;
  MaterialParams params_;
  DriverConfig cfg_;
  FemModel model_;
  BcData bc_;
  std::vector<IpState> states_;
  std::vector<IpRateData> rates_;
  std::vector<double> factor_in_k_;
  std::vector<double> d_eff_;
  std::vector<double> committed_d_;
  std::optional<NeighborTable> nl_;
  SparseSystem sys_;
  Eigen::VectorXd u_;
  RunResult out_;
};

} // namespace

RunResult run_loadpath(const Mesh& mesh, const MaterialParams& params,
                       const LoadPath& path, const DriverConfig& cfg) {
  LoadPathDriver driver(mesh, params, path, cfg);
  return driver.run();
}

} // namespace poro
