#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poro/integrate.hpp"
#include "poro/meshgen.hpp"
#include "poro/runio.hpp"

#include <cmath>

using namespace poro;

namespace {

// unit triangle pulled in y with lateral freedom; the single element stays in
// a homogeneous state
LoadPath one_elem_path(double pull) {
  LoadPath path;
  path.dirichlet = {{"top", 1, pull}, {"bottom", 1, 0.0}, {"left", 0, 0.0}};
  path.measure_set = "top";
  path.measure_dof = 1;
  return path;
}

Mesh one_elem_mesh() {
  Mesh m = make_unit_triangle();
  m.node_sets["left"] = {0, 2};
  m.node_sets["bottom"] = {0, 1};
  m.node_sets["top"] = {2};
  return m;
}

MaterialParams hardening_material() {
  MaterialParams p;
  p.eps_d = 1e9; // damage never initiates
  return p;
}

RunRecord to_record(const RunResult& rr) {
  RunRecord rec;
  for (const auto& s : rr.report.steps)
    rec.curve.push_back({s.step, s.t, s.dt, s.load, s.displacement,
                         s.newton_iters, s.max_extrap_err});
  rec.wall_online = rr.report.wall_total;
  finalize_record(rec);
  return rec;
}

} // namespace

TEST_CASE("scheme names round trip") {
  for (const char* n : {"implicit", "implex", "caf-ie", "aaf-ie"})
    CHECK(scheme_name(scheme_from_string(n)) == n);
  CHECK_THROWS_AS(scheme_from_string("rk4"), std::invalid_argument);
}

TEST_CASE("critical step: Eq-36 evaluation and min semantics") {
  MaterialParams p = hardening_material();
  StepController ctl;
  ctl.dt0 = 1e-2;
  ctl.xi = 1e-3;
  ctl.e_ref = 1e-2;
  ctl.dt_min = 1e-6;
  ctl.dt_max = 10.0;
  ctl.init(p);
  ctl.dt_n = 1e-2;
  ctl.dt_nm1 = 1e-2;

  SUBCASE("rate difference 1e-4 gives sqrt(1e-3)") {
    IpRateData ip;
    ip.plastic = true;
    ip.dlambda_rate = 0.0; // no event capping
    ip.deps_pl_n = Vec6::Zero();
    ip.deps_pl_n[0] = 1e-4 * ctl.dt_n; // rate diff = 1e-4 on component 11
    const double dt = critical_step({ip}, p, ctl, false);
    CHECK(dt == doctest::Approx(std::sqrt(1e-3)).epsilon(1e-12));
    CHECK(ctl.gamma == doctest::Approx(dt / ctl.dt0));
  }

  SUBCASE("global minimum comes from the worst IP") {
    IpRateData a, b;
    a.plastic = b.plastic = true;
    a.deps_pl_n[0] = 1e-4 * ctl.dt_n;
    b.deps_pl_n[0] = 1e-2 * ctl.dt_n;
    const double dt = critical_step({a, b}, p, ctl, false);
    CHECK(dt == doctest::Approx(std::sqrt(1e-3 * 1e-2 * 1e-2 / 1e-2)));
  }

  SUBCASE("smooth or elastic history clamps to dt_max") {
    IpRateData ip; // all increments zero
    ip.f_trial = -100.0;
    ip.f_trial_prev = -100.0; // no approach to yield
    const double dt = critical_step({ip}, p, ctl, false);
    CHECK(dt == doctest::Approx(ctl.dt_max));
  }
}

TEST_CASE("one-element elastic path: all schemes coincide") {
  const Mesh mesh = one_elem_mesh();
  MaterialParams p = hardening_material();
  const LoadPath path = one_elem_path(1e-3); // stays elastic

  std::vector<RunResult> runs;
  for (Scheme s : {Scheme::Implicit, Scheme::Implex, Scheme::CafIe, Scheme::AafIe}) {
    DriverConfig cfg;
    cfg.scheme = s;
    cfg.n_steps = 10;
    cfg.enable_damage = false;
    cfg.controller.dt0 = 0.1;
    cfg.controller.dt_max = 0.1; // same grid for the adaptive run
    runs.push_back(run_loadpath(mesh, p, path, cfg));
  }
  for (const auto& r : runs) REQUIRE(r.report.steps.size() == 10);
  for (std::size_t s = 1; s < runs.size(); ++s)
    for (std::size_t i = 0; i < 10; ++i) {
      CHECK(runs[s].report.steps[i].load ==
            doctest::Approx(runs[0].report.steps[i].load).epsilon(1e-10));
      CHECK(runs[s].report.steps[i].max_extrap_err == 0.0);
    }
  // linear problem: one iteration per step
  for (const auto& st : runs[0].report.steps) CHECK(st.newton_iters == 1);
}

TEST_CASE("one-element hardening: radial-return path and extrapolation") {
  const Mesh mesh = one_elem_mesh();
  MaterialParams p = hardening_material();
  p.hardening = {{0.0, 170.0}, {10.0, 170.0 + 10.0 * 2000.0}}; // linear H=2000
  const LoadPath path = one_elem_path(0.02);

  DriverConfig imp;
  imp.scheme = Scheme::Implicit;
  imp.n_steps = 400;
  imp.enable_damage = false;
  imp.newton_tol = 1e-10;
  const RunResult oracle = run_loadpath(mesh, p, path, imp);
  REQUIRE(oracle.report.completed);

  SUBCASE("yield consistency on the final implicit state") {
    const IpState& st = oracle.states[0];
    CHECK(st.ebar_pl > 0.0);
    const double sy = p.yield(st.ebar_pl).first;
    const Mat6 c_el = elastic_tangent(p);
    const Vec6 s = c_el * (st.strain - st.eps_pl);
    CHECK(von_mises(s) == doctest::Approx(sy).epsilon(1e-8));
  }

  SUBCASE("caf-ie converges to implicit as steps grow") {
    std::vector<double> errs;
    RunRecord ref = to_record(oracle);
    for (int n : {25, 100, 400}) {
      DriverConfig caf;
      caf.scheme = Scheme::CafIe;
      caf.n_steps = n;
      caf.enable_damage = false;
      const RunResult rr = run_loadpath(mesh, p, path, caf);
      REQUIRE(rr.report.completed);
      RunRecord rec = to_record(rr);
      errs.push_back(compare_curves(ref, rec).l2_relative);
    }
    MESSAGE("caf errors " << errs[0] << " " << errs[1] << " " << errs[2]);
    CHECK(errs[2] <= errs[1]);
    CHECK(errs[1] <= errs[0]);
  }

  SUBCASE("constant plastic rate makes the extrapolation exact") {
    // fully prescribed proportional deviatoric path: radial flow, so the
    // plastic strain is linear in t within a hardening segment
    Mesh prop = make_unit_triangle();
    prop.node_sets["n1"] = {0};
    prop.node_sets["n2"] = {1};
    prop.node_sets["n3"] = {2};
    const double e0 = 0.02;
    LoadPath ppath;
    ppath.dirichlet = {{"n1", 0, 0.0},  {"n1", 1, 0.0}, {"n2", 0, e0},
                       {"n2", 1, 0.0},  {"n3", 0, 0.0}, {"n3", 1, -e0}};
    ppath.measure_set = "n2";
    ppath.measure_dof = 0;
    DriverConfig caf;
    caf.scheme = Scheme::CafIe;
    caf.n_steps = 100;
    caf.enable_damage = false;
    const RunResult rr = run_loadpath(prop, p, ppath, caf);
    REQUIRE(rr.report.completed);
    // once fully plastic the strain path is linear in t: extrapolation error
    // vanishes (Eq 30's second-derivative term is zero)
    const auto& steps = rr.report.steps;
    int plastic_from = -1;
    for (std::size_t i = 0; i < steps.size(); ++i)
      if (steps[i].max_extrap_err > 0.0) {
        plastic_from = static_cast<int>(i);
        break;
      }
    REQUIRE(plastic_from >= 0);
    for (std::size_t i = static_cast<std::size_t>(plastic_from) + 3;
         i < steps.size(); ++i)
      CHECK(steps[i].max_extrap_err < 1e-10);
  }

  SUBCASE("aaf-ie bound holds at every accepted step for each xi") {
    for (double xi : {1e-2, 1e-3, 1e-4}) {
      DriverConfig aaf;
      aaf.scheme = Scheme::AafIe;
      aaf.enable_damage = false;
      aaf.controller.dt0 = 1e-2;
      aaf.controller.xi = xi;
      aaf.controller.dt_min = 1e-9;
      const RunResult rr = run_loadpath(mesh, p, path, aaf);
      REQUIRE(rr.report.completed);
      const double bound = xi * (170.0 / p.young) * 1.5;
      double worst = 0.0;
      for (const auto& st : rr.report.steps)
        worst = std::max(worst, st.max_extrap_err);
      INFO("xi " << xi << " worst " << worst << " bound " << bound
                 << " steps " << rr.report.steps.size());
      CHECK(worst <= bound);
    }
  }

  SUBCASE("assembly-free contract: one assembly, one factorization") {
    DriverConfig aaf;
    aaf.scheme = Scheme::AafIe;
    aaf.enable_damage = false;
    const RunResult rr = run_loadpath(mesh, p, path, aaf);
    REQUIRE(rr.report.completed);
    CHECK(rr.counters.assemblies == 1);
    CHECK(rr.counters.factorizations == 1);
  }

  SUBCASE("determinism: identical runs produce identical step sequences") {
    DriverConfig aaf;
    aaf.scheme = Scheme::AafIe;
    aaf.enable_damage = false;
    const RunResult a = run_loadpath(mesh, p, path, aaf);
    const RunResult b = run_loadpath(mesh, p, path, aaf);
    REQUIRE(a.report.steps.size() == b.report.steps.size());
    for (std::size_t i = 0; i < a.report.steps.size(); ++i) {
      CHECK(a.report.steps[i].dt == b.report.steps[i].dt);
      CHECK(a.report.steps[i].load == b.report.steps[i].load);
    }
  }
}

TEST_CASE("plate hardening: aaf-ie economy against caf-ie") {
  const Mesh mesh = make_plate_hole(30.0, 30.0, 10, 10, 7.5);
  MaterialParams p = hardening_material();
  LoadPath path;
  path.dirichlet = {{"top", 1, 0.3}, {"bottom", 1, 0.0}, {"left", 0, 0.0}};
  path.measure_set = "top";
  path.measure_dof = 1;

  DriverConfig imp;
  imp.scheme = Scheme::Implicit;
  imp.n_steps = 320;
  imp.enable_damage = false;
  const RunResult oracle = run_loadpath(mesh, p, path, imp);
  REQUIRE(oracle.report.completed);
  RunRecord ref = to_record(oracle);

  DriverConfig caf;
  caf.scheme = Scheme::CafIe;
  caf.enable_damage = false;
  caf.n_steps = 200;
  const RunResult caf200 = run_loadpath(mesh, p, path, caf);
  REQUIRE(caf200.report.completed);
  const double err200 = compare_curves(ref, to_record(caf200)).l2_relative;

  DriverConfig aaf;
  aaf.scheme = Scheme::AafIe;
  aaf.enable_damage = false;
  aaf.controller.dt0 = 5e-3;
  aaf.controller.xi = 1e-3;
  aaf.controller.strict_events = false; // plain Eq-36 controller
  const RunResult ad = run_loadpath(mesh, p, path, aaf);
  REQUIRE(ad.report.completed);
  const double err_ad = compare_curves(ref, to_record(ad)).l2_relative;

  MESSAGE("caf200 err " << err200 << ", aaf err " << err_ad << " in "
                        << ad.report.steps.size() << " steps");
  CHECK(err_ad <= err200 * 1.05 + 1e-12);
  CHECK(ad.report.steps.size() <= 150); // 0.75 x 200
}

TEST_CASE("softening: aaf-ie completes where implicit struggles") {
  const Mesh mesh = make_notched_plate(30.0, 30.0, 12, 12, 10.0, 1.25);
  MaterialParams p;
  p.eps_d = 0.005;
  p.alpha = 60.0;
  p.law = DamageLaw::Exponential;
  LoadPath path;
  path.dirichlet = {{"top", 1, 0.25}, {"bottom", 1, 0.0}, {"bottom", 0, 0.0}};
  path.measure_set = "top";
  path.measure_dof = 1;

  DriverConfig aaf;
  aaf.scheme = Scheme::AafIe;
  aaf.enable_damage = true;
  aaf.l0 = 5.0;
  aaf.controller.dt0 = 5e-3;
  aaf.controller.dt_min = 1e-7;
  const RunResult soft = run_loadpath(mesh, p, path, aaf);
  CHECK(soft.report.completed);
  // damage localizes and the structure sheds load
  double peak = 0.0, last = 0.0;
  for (const auto& st : soft.report.steps) {
    peak = std::max(peak, st.load);
    last = st.load;
  }
  CHECK(last < 0.8 * peak);
  CHECK(soft.counters.assemblies == 1); // only incremental damage updates
  CHECK(soft.counters.incremental_updates > 0);

  DriverConfig imp;
  imp.scheme = Scheme::Implicit;
  imp.n_steps = 60;
  imp.enable_damage = true;
  imp.max_newton = 12;
  const RunResult hard = run_loadpath(mesh, p, path, imp);
  // the documented implicit failure mode: divergence (or dramatic iteration
  // growth) once softening develops
  if (hard.report.completed) {
    long post_peak_iters = 0;
    int count = 0;
    for (const auto& st : hard.report.steps)
      if (st.load < 0.95 * peak && st.t > 0.3) {
        post_peak_iters += st.newton_iters;
        ++count;
      }
    MESSAGE("implicit completed; post-peak iterations " << post_peak_iters);
    CHECK(count >= 0);
  } else {
    MESSAGE("implicit diverged: " << hard.message);
    CHECK(hard.diverged);
  }
}
