#include "poro/material.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace poro {

std::pair<double, double> MaterialParams::yield(double ebar) const {
  const auto& h = hardening;
  if (ebar <= h.front().first) {
    const double slope =
        h.size() > 1
            ? (h[1].second - h[0].second) / (h[1].first - h[0].first)
            : 0.0;
    return {h.front().second, ebar < h.front().first ? slope : slope};
  }
  for (std::size_t i = 1; i < h.size(); ++i) {
    if (ebar <= h[i].first) {
      const double slope = (h[i].second - h[i - 1].second) /
                           (h[i].first - h[i - 1].first);
      return {h[i - 1].second + slope * (ebar - h[i - 1].first), slope};
    }
  }
  return {h.back().second, 0.0}; // flat beyond the table
}

void MaterialParams::validate() const {
  if (!(young > 0.0)) throw std::invalid_argument("elastic modulus must be > 0");
  if (!(poisson > 0.0 && poisson < 0.5))
    throw std::invalid_argument("poisson ratio must lie in (0, 0.5)");
  if (hardening.empty() || hardening.front().first != 0.0)
    throw std::invalid_argument("hardening table must start at ebar = 0");
  for (std::size_t i = 0; i < hardening.size(); ++i) {
    if (!(hardening[i].second > 0.0))
      throw std::invalid_argument("yield stress must be > 0");
    if (i > 0 && !(hardening[i].first > hardening[i - 1].first))
      throw std::invalid_argument("hardening table abscissa must increase");
  }
  if (!(eps_d >= 0.0)) throw std::invalid_argument("eps_d must be >= 0");
  if (!(alpha >= 0.0)) throw std::invalid_argument("alpha must be >= 0");
  if (!(g_f > 0.0)) throw std::invalid_argument("G_f must be > 0");
}

Mat6 elastic_tangent(const MaterialParams& p) {
  return isotropic_elastic(p.young, p.poisson);
}

namespace {

// Solve q_trial - 3G dl - Sy(ebar + dl) = 0 for dl >= 0. The residual is
// piecewise linear and strictly decreasing (requires H > -3G), so Newton
// terminates exactly; a bisection bracket guards pathological tables.
double solve_consistency(const MaterialParams& p, double q_trial, double ebar,
                         double g) {
  const double three_g = 3.0 * g;
  double lo = 0.0, hi = q_trial / three_g;
  double dl = 0.0;
  for (int it = 0; it < 200; ++it) {
    const auto [sy, h] = p.yield(ebar + dl);
    const double f = q_trial - three_g * dl - sy;
    if (std::abs(f) <= 1e-12 * std::max(1.0, sy)) return dl;
    if (f > 0.0)
      lo = dl;
    else
      hi = dl;
    const double denom = three_g + h;
    double next = denom > 0.0 ? dl + f / denom : 0.5 * (lo + hi);
    if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
    dl = next;
  }
  const auto [sy, h] = p.yield(ebar + dl);
  (void)h;
  if (std::abs(q_trial - three_g * dl - sy) > 1e-6 * std::max(1.0, sy))
    throw std::runtime_error("plastic consistency solve did not converge");
  return dl;
}

} // namespace

StressReturn return_map_j2(const MaterialParams& p, const IpState& state,
                           const Vec6& d_eps) {
  const double g = p.shear();
  const double k = p.bulk();
  const Mat6 c_el = elastic_tangent(p);

  StressReturn ret;
  ret.state = state;
  ret.state.strain = state.strain + d_eps;

  const Vec6 eps_el_trial = ret.state.strain - state.eps_pl;
  const Vec6 s_trial = c_el * eps_el_trial;
  const Vec6 dev_trial = deviator(s_trial);
  const double q_trial = von_mises(s_trial);
  const auto [sy_n, h_n] = p.yield(state.ebar_pl);
  (void)h_n;

  ret.q_trial = q_trial;
  ret.f_trial = q_trial - sy_n;

  if (ret.f_trial <= 1e-10 * std::max(1.0, sy_n)) {
    ret.stress = ret.stress0 = s_trial;
    ret.c_alg = c_el;
    ret.dlambda = 0.0;
    ret.deps_pl = Vec6::Zero();
    ret.state.dlambda = 0.0;
    return ret;
  }

  const double dl = solve_consistency(p, q_trial, state.ebar_pl, g);
  const double a = 3.0 * g * dl / q_trial;

  // Flow direction N = (3/2) s/q; engineering strain form doubles the shears.
  Vec6 deps_pl;
  for (int i = 0; i < 3; ++i) deps_pl[i] = 1.5 * dl * dev_trial[i] / q_trial;
  for (int i = 3; i < 6; ++i) deps_pl[i] = 3.0 * dl * dev_trial[i] / q_trial;

  ret.stress = ret.stress0 = s_trial - c_el * deps_pl;
  ret.dlambda = dl;
  ret.deps_pl = deps_pl;
  ret.state.eps_pl = state.eps_pl + deps_pl;
  ret.state.ebar_pl = state.ebar_pl + dl;
  ret.state.dlambda = dl;

  // Consistent tangent
  //   C = K m m^T + 2G(1-a) P - (9G^2/q_tr^2) (1/(3G+H) - dl/q_tr) s_tr s_tr^T
  const auto [sy_new, h_new] = p.yield(ret.state.ebar_pl);
  (void)sy_new;
  Mat6 c = Mat6::Zero();
  const Mat6 pdev = deviatoric_projector();
  Vec6 m = Vec6::Zero();
  m[0] = m[1] = m[2] = 1.0;
  c = k * (m * m.transpose()) + 2.0 * g * (1.0 - a) * pdev;
  const double coef = (9.0 * g * g / (q_trial * q_trial)) *
                      (1.0 / (3.0 * g + h_new) - dl / q_trial);
  c -= coef * (dev_trial * dev_trial.transpose());
  ret.c_alg = c;
  return ret;
}

std::pair<double, bool> damage_initiation(const MaterialParams& p,
                                          const IpState& state) {
  if (p.eps_d <= 0.0) return {state.ebar_pl > 0.0 ? 1.0 : 0.0, state.ebar_pl > 0.0};
  const double omega = std::max(state.omega_d, state.ebar_pl / p.eps_d);
  return {omega, state.initiated || omega >= 1.0};
}

double damage_evolve_exponential(const MaterialParams& p, double ebar) {
  if (ebar <= p.eps_d) return 0.0;
  return 1.0 - (p.eps_d / ebar) * std::exp(-p.alpha * (ebar - p.eps_d));
}

double energy_to_damage(double dissipated, double g_f) {
  return 1.0 - std::exp(-dissipated / g_f);
}

void damage_evolve_energy(const MaterialParams& p, double l_e, double d_ebar,
                          double sy_new, IpState& state) {
  if (state.ruptured) {
    state.damage = 1.0;
    return;
  }
  const double du = l_e * d_ebar;
  state.dissipated += 0.5 * (state.sy_last + sy_new) * du;
  state.u_pl += du;
  state.sy_last = sy_new;
  if (state.dissipated >= 0.99 * p.g_f) {
    state.damage = 1.0;
    state.ruptured = true;
    return;
  }
  state.damage = std::max(state.damage, energy_to_damage(state.dissipated, p.g_f));
}

void update_damage_local(const MaterialParams& p, double l_e, double d_ebar,
                         IpState& state) {
  auto [omega, initiated] = damage_initiation(p, state);
  state.omega_d = omega;
  const auto [sy, h] = p.yield(state.ebar_pl);
  (void)h;
  if (!initiated) {
    state.sy_last = sy; // track for the trapezoid once initiation fires
    return;
  }
  if (!state.initiated) {
    state.initiated = true;
    state.sy_last = sy;
  }
  if (p.law == DamageLaw::Exponential) {
    state.damage = std::max(state.damage, damage_evolve_exponential(p, state.ebar_pl));
    if (state.damage >= 1.0 - 1e-12) {
      state.damage = 1.0;
      state.ruptured = true;
    }
  } else {
    damage_evolve_energy(p, l_e, d_ebar, sy, state);
  }
}

double softening_modulus(const MaterialParams& p, double l_e, double ebar,
                         double damage) {
  const auto [sy, h] = p.yield(ebar);
  double dprime = 0.0;
  if (ebar > p.eps_d) {
    if (p.law == DamageLaw::Exponential) {
      const double e = std::exp(-p.alpha * (ebar - p.eps_d));
      dprime = p.eps_d * e * (1.0 / (ebar * ebar) + p.alpha / ebar);
    } else {
      dprime = (1.0 - damage) * sy * l_e / p.g_f;
    }
  }
  return (1.0 - damage) * h - dprime * sy;
}

Mat6 implicit_damage_tangent(const MaterialParams& p, double l_e,
                             const IpState& state, const StressReturn& ret) {
  if (state.ebar_pl <= 0.0)
    throw std::invalid_argument("implicit damage tangent needs ebar_pl > 0");
  const double d = state.damage;
  const double hn = softening_modulus(p, l_e, state.ebar_pl, d);
  const double q_damaged = (1.0 - d) * von_mises(ret.stress0);
  const double coef =
      (q_damaged - hn * state.ebar_pl) /
      (state.ebar_pl * state.ebar_pl * state.ebar_pl);
  return (1.0 - d) * elastic_tangent(p) -
         coef * (ret.stress0 * ret.stress0.transpose());
}

} // namespace poro
