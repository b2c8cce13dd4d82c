#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poro/material.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>

using namespace poro;

namespace {

MaterialParams a356() { return MaterialParams{}; }

double u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Vec6 random_strain(std::mt19937_64& rng, double scale) {
  Vec6 e;
  for (int i = 0; i < 6; ++i) e[i] = scale * (2.0 * u01(rng) - 1.0);
  return e;
}

} // namespace

TEST_CASE("elastic tangent moduli") {
  MaterialParams p = a356();
  const Mat6 c = elastic_tangent(p);
  const double g = p.young / (2.0 * (1.0 + p.poisson));
  CHECK(g == doctest::Approx(2.1429e4).epsilon(1e-4)); // M = 5.70e4, nu = 0.33
  CHECK(c(3, 3) == doctest::Approx(g));
  // nu -> 0: C_1111 -> M
  MaterialParams p0 = p;
  p0.poisson = 1e-12;
  CHECK(elastic_tangent(p0)(0, 0) == doctest::Approx(p.young).epsilon(1e-9));
  // hydrostatic strain maps to 3K pressure
  Vec6 hydro = Vec6::Zero();
  hydro[0] = hydro[1] = hydro[2] = 1e-3;
  const Vec6 s = c * hydro;
  const double k = p.young / (3.0 * (1.0 - 2.0 * p.poisson));
  for (int i = 0; i < 3; ++i) CHECK(s[i] == doctest::Approx(3.0 * k * 1e-3));
  for (int i = 3; i < 6; ++i) CHECK(s[i] == doctest::Approx(0.0));
  // SPD
  Eigen::SelfAdjointEigenSolver<Mat6> eig(c);
  CHECK(eig.eigenvalues().minCoeff() > 0.0);
}

TEST_CASE("parameter validation") {
  MaterialParams p = a356();
  CHECK_NOTHROW(p.validate());
  p.poisson = 0.5;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = a356();
  p.hardening = {{0.0, 170.0}, {0.0, 180.0}};
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
  p = a356();
  p.g_f = 0.0;
  CHECK_THROWS_AS(p.validate(), std::invalid_argument);
}

TEST_CASE("elastic step and boundary case") {
  MaterialParams p = a356();
  IpState st;
  Vec6 de = Vec6::Zero();
  de[0] = 1e-4; // well below yield
  const StressReturn ret = return_map_j2(p, st, de);
  CHECK(ret.dlambda == 0.0);
  CHECK((ret.stress - elastic_tangent(p) * de).norm() == doctest::Approx(0.0));
  CHECK((ret.c_alg - elastic_tangent(p)).norm() == doctest::Approx(0.0));

  // deviatoric trial exactly on the yield surface
  const double g = p.shear();
  const double e = p.yield(0.0).first / (3.0 * g); // q_trial = 3 G e
  Vec6 dev;
  dev << e, -0.5 * e, -0.5 * e, 0.0, 0.0, 0.0;
  const StressReturn ret2 = return_map_j2(p, IpState{}, dev);
  CHECK(ret2.dlambda == 0.0);
  CHECK(std::abs(ret2.f_trial) < 1e-9 * p.yield(0.0).first);
}

TEST_CASE("radial return against the analytic 1D solution") {
  MaterialParams p = a356();
  const double h = 2000.0;
  p.hardening = {{0.0, 170.0}, {1.0, 170.0 + h}};
  const double g = p.shear();
  const double e = 2.5 * p.yield(0.0).first / (3.0 * g); // past yield
  Vec6 dev;
  dev << e, -0.5 * e, -0.5 * e, 0.0, 0.0, 0.0;
  const StressReturn ret = return_map_j2(p, IpState{}, dev);
  const double q_tr = 3.0 * g * e;
  const double dl_expected = (q_tr - 170.0) / (3.0 * g + h);
  CHECK(ret.dlambda == doctest::Approx(dl_expected).epsilon(1e-12));
  // consistency: f(S_{n+1}) = 0
  const double q_new = von_mises(ret.stress);
  const double sy_new = p.yield(ret.state.ebar_pl).first;
  CHECK(std::abs(q_new - sy_new) < 1e-9 * sy_new);
}

TEST_CASE("yield consistency and plastic incompressibility on random paths") {
  MaterialParams p = a356();
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 100; ++trial) {
    IpState st;
    for (int step = 0; step < 5; ++step) {
      const Vec6 de = random_strain(rng, 4e-3);
      const StressReturn ret = return_map_j2(p, st, de);
      const double sy = p.yield(ret.state.ebar_pl).first;
      const double f = von_mises(ret.stress) - sy;
      if (ret.dlambda > 0.0)
        CHECK(std::abs(f) < 1e-9 * sy);
      else
        CHECK(f <= 1e-9 * sy);
      CHECK(std::abs(trace(ret.deps_pl)) < 1e-12);
      st = ret.state;
      st.deps_pl_nm1 = st.deps_pl_n;
      st.deps_pl_n = ret.deps_pl;
    }
  }
}

TEST_CASE("consistent tangent matches central finite differences") {
  MaterialParams p = a356();
  std::mt19937_64 rng(7);
  const double h = 1e-7;
  int tested = 0;
  while (tested < 100) {
    IpState st;
    // a first plastic excursion to get a generic state
    const StressReturn pre = return_map_j2(p, st, random_strain(rng, 6e-3));
    st = pre.state;
    const Vec6 de = random_strain(rng, 3e-3);
    const StressReturn at = return_map_j2(p, st, de);
    if (at.dlambda < 5.0 * h) continue; // keep firmly inside the plastic branch
    ++tested;
    Mat6 fd;
    for (int j = 0; j < 6; ++j) {
      Vec6 dp = de, dm = de;
      dp[j] += h;
      dm[j] -= h;
      const Vec6 sp = return_map_j2(p, st, dp).stress;
      const Vec6 sm = return_map_j2(p, st, dm).stress;
      fd.col(j) = (sp - sm) / (2.0 * h);
    }
    const double rel = (fd - at.c_alg).norm() / at.c_alg.norm();
    INFO("trial " << tested << " rel err " << rel);
    CHECK(rel < 1e-4);
  }
}

TEST_CASE("damage initiation") {
  MaterialParams p = a356();
  p.eps_d = 0.05;
  IpState st;
  auto [w0, i0] = damage_initiation(p, st);
  CHECK(w0 == 0.0);
  CHECK_FALSE(i0);
  st.ebar_pl = 0.05;
  auto [w1, i1] = damage_initiation(p, st);
  CHECK(w1 == doctest::Approx(1.0));
  CHECK(i1);
  st.ebar_pl = 0.04;
  st.omega_d = 0.0;
  auto [w2, i2] = damage_initiation(p, st);
  CHECK(w2 == doctest::Approx(0.8));
  CHECK_FALSE(i2);
  // once initiated, stays initiated
  st.initiated = true;
  auto [w3, i3] = damage_initiation(p, st);
  (void)w3;
  CHECK(i3);
}

TEST_CASE("exponential evolution law") {
  MaterialParams p = a356();
  p.eps_d = 0.1;
  p.alpha = 0.0;
  CHECK(damage_evolve_exponential(p, 0.1) == doctest::Approx(0.0));
  CHECK(damage_evolve_exponential(p, 0.2) == doctest::Approx(0.5));
  p.alpha = 10.0;
  CHECK(damage_evolve_exponential(p, 0.2) ==
        doctest::Approx(1.0 - 0.5 * std::exp(-1.0)).epsilon(1e-12));
}

TEST_CASE("energy evolution law") {
  MaterialParams p = a356();
  p.law = DamageLaw::Energy;
  p.g_f = 19.2;
  CHECK(energy_to_damage(0.0, p.g_f) == doctest::Approx(0.0));
  CHECK(energy_to_damage(p.g_f, p.g_f) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-12));

  IpState st;
  st.initiated = true;
  st.sy_last = 240.0;
  st.dissipated = 0.985 * p.g_f;
  // an increment that pushes the dissipation past 0.99 G_f ruptures the point
  const double du_needed = (0.995 - 0.985) * p.g_f / 240.0;
  damage_evolve_energy(p, 1.0, du_needed, 240.0, st);
  CHECK(st.dissipated >= doctest::Approx(0.99 * p.g_f));
  CHECK(st.damage == 1.0);
  CHECK(st.ruptured);
}

TEST_CASE("damage and omega never decrease along monotone loading") {
  MaterialParams p = a356();
  p.eps_d = 0.01;
  p.alpha = 25.0;
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    IpState st;
    double last_d = 0.0, last_w = 0.0, last_e = 0.0, last_diss = 0.0;
    Vec6 dir = random_strain(rng, 1.0);
    dir /= strain_max_abs(dir);
    for (int step = 0; step < 30; ++step) {
      const Vec6 de = (2e-3 + 1e-3 * u01(rng)) * dir;
      StressReturn ret = return_map_j2(p, st, de);
      IpState next = ret.state;
      update_damage_local(p, 0.01, ret.dlambda, next);
      CHECK(next.damage >= last_d);
      CHECK(next.omega_d >= last_w);
      CHECK(next.ebar_pl >= last_e);
      CHECK(next.dissipated >= last_diss);
      CHECK(next.damage <= 1.0);
      last_d = next.damage;
      last_w = next.omega_d;
      last_e = next.ebar_pl;
      last_diss = next.dissipated;
      st = next;
    }
  }
}

TEST_CASE("implicit damage tangent (Eq-19 form)") {
  MaterialParams p = a356();
  p.eps_d = 0.05;
  const double g = p.shear();
  (void)g;

  SUBCASE("coefficient vanishes when q equals H ebar") {
    // pre-initiation (D' = 0): H_n equals the hardening slope
    MaterialParams lp = p;
    const double h = 5000.0;
    lp.hardening = {{0.0, 100.0}, {1.0, 100.0 + h}};
    lp.eps_d = 10.0; // initiation far away -> D contribution zero
    IpState st;
    st.ebar_pl = 0.02;
    st.damage = 0.0;
    StressReturn ret;
    // uniaxial-deviatoric reference stress with von Mises = H * ebar
    const double q_target = h * st.ebar_pl;
    ret.stress0 << q_target, 0.0, 0.0, 0.0, 0.0, 0.0;
    ret.stress0[1] = ret.stress0[2] = 0.0;
    // make it purely deviatoric with vm = q_target
    ret.stress0 << (2.0 / 3.0) * q_target, -(1.0 / 3.0) * q_target,
        -(1.0 / 3.0) * q_target, 0.0, 0.0, 0.0;
    CHECK(von_mises(ret.stress0) == doctest::Approx(q_target));
    const Mat6 c = implicit_damage_tangent(lp, 1.0, st, ret);
    CHECK((c - elastic_tangent(lp)).norm() <
          1e-10 * elastic_tangent(lp).norm());
  }

  SUBCASE("fully degraded point leaves the rank-one remainder") {
    MaterialParams lp = p;
    lp.alpha = 5.0;
    IpState st;
    st.ebar_pl = 0.2;
    st.damage = 1.0;
    st.initiated = true;
    StressReturn ret;
    ret.stress0 << 150.0, -60.0, -90.0, 20.0, 0.0, 0.0;
    const Mat6 c = implicit_damage_tangent(lp, 1.0, st, ret);
    Eigen::SelfAdjointEigenSolver<Mat6> eig(c);
    CHECK(eig.eigenvalues().maxCoeff() <= 1e-9 * ret.stress0.squaredNorm());
    // rank one
    int nonzero = 0;
    for (int i = 0; i < 6; ++i)
      if (std::abs(eig.eigenvalues()[i]) >
          1e-12 * std::abs(eig.eigenvalues().cwiseAbs().maxCoeff()))
        ++nonzero;
    CHECK(nonzero <= 1);
  }

  SUBCASE("mid-softening state loses positive definiteness") {
    MaterialParams lp = p;
    lp.eps_d = 0.02;
    lp.alpha = 40.0;
    IpState st;
    st.ebar_pl = 0.05;
    st.initiated = true;
    st.damage = damage_evolve_exponential(lp, st.ebar_pl);
    StressReturn ret;
    const double sy = lp.yield(st.ebar_pl).first;
    ret.stress0 << (2.0 / 3.0) * sy, -(1.0 / 3.0) * sy, -(1.0 / 3.0) * sy, 0.0,
        0.0, 0.0;
    const Mat6 c = implicit_damage_tangent(lp, 1.0, st, ret);
    Eigen::SelfAdjointEigenSolver<Mat6> eig(c);
    CHECK(eig.eigenvalues().minCoeff() < 0.0);
  }
}
