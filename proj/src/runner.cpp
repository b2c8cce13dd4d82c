#include "poro/runner.hpp"

#include "poro/meshgen.hpp"
#include "poro/multiscale.hpp"

#include <filesystem>
#include <stdexcept>

namespace poro {

namespace {

namespace fs = std::filesystem;

void ensure_dir(const std::string& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw std::runtime_error("cannot create output directory " + dir);
}

std::vector<CurvePoint> curve_from_steps(const std::vector<StepRecord>& steps) {
  std::vector<CurvePoint> curve;
  curve.reserve(steps.size());
  for (const auto& s : steps)
    curve.push_back({s.step, s.t, s.dt, s.load, s.displacement, s.newton_iters,
                     s.max_extrap_err});
  return curve;
}

std::vector<CurvePoint> curve_from_rve(const std::vector<RveStepRecord>& steps) {
  std::vector<CurvePoint> curve;
  curve.reserve(steps.size());
  for (const auto& s : steps)
    curve.push_back({s.step, s.t, s.dt, s.stress_vm, s.strain_eq,
                     s.newton_iters, s.max_extrap_err});
  return curve;
}

Decomposition build_static_decomposition(const Mesh& mesh,
                                         const MaterialParams& params,
                                         const ClusteringConfig& cl) {
  if (cl.stress_informed && cl.n_g > 1) {
    StaticClusteringOptions opt;
    opt.ch_floor = cl.ch_floor;
    opt.ch_k_max = cl.ch_k_max;
    return static_hierarchical_clustering(mesh, params, cl.n_cl, cl.n_g, cl.s_f,
                                          cl.seed, opt);
  }
  return position_clustering(mesh, cl.n_cl, cl.seed);
}

DriverConfig driver_config_from(const ScenarioConfig& cfg) {
  DriverConfig dc;
  dc.scheme = cfg.scheme;
  dc.n_steps = cfg.n_steps;
  dc.newton_tol = cfg.newton_tol;
  dc.max_newton = cfg.max_newton;
  dc.controller = cfg.controller;
  dc.l0 = cfg.l0;
  dc.enable_damage = cfg.enable_damage;
  dc.implicit_substeps = cfg.implicit_substeps;
  return dc;
}

} // namespace

RunRecord run_scenario(const ScenarioConfig& cfg, const std::string& pipeline,
                       const std::string& out_dir, const RunOverrides& ov) {
  ScenarioConfig run_cfg = cfg;
  if (!ov.scheme.empty()) run_cfg.scheme = scheme_from_string(ov.scheme);
  if (ov.seed != 0) {
    run_cfg.seed = ov.seed;
    run_cfg.clustering.seed = ov.seed;
  }
  if (ov.threads < 1)
    throw ConfigError("--threads must be >= 1");

  RunRecord rec;
  rec.scenario_name = run_cfg.name;
  rec.scenario_hash = run_cfg.source_path.empty()
                          ? 0
                          : scenario_hash(run_cfg.source_path);
  rec.scheme = scheme_name(run_cfg.scheme);

  if (ov.write_artifacts) ensure_dir(out_dir);
  const Mesh mesh = load_mesh(run_cfg.mesh_path);

  if (pipeline == "cluster-preview") {
    if (run_cfg.kind != ScenarioKind::Rve)
      throw ConfigError("cluster-preview needs a scenario of kind 'rve'");
    const Decomposition d =
        build_static_decomposition(mesh, run_cfg.material, run_cfg.clustering);
    if (ov.write_artifacts) {
      write_clusters_csv(out_dir + "/clusters.csv", d);
      std::vector<double> cl(static_cast<std::size_t>(mesh.n_elements()));
      for (int e = 0; e < mesh.n_elements(); ++e)
        cl[static_cast<std::size_t>(e)] =
            d.elem_cluster[static_cast<std::size_t>(e)];
      write_vtk(out_dir + "/fields_0.vtk", mesh, {{"cluster", cl}});
      write_report_json(out_dir + "/report.json", rec);
    }
    rec.completed = true;
    return rec;
  }

  if (pipeline == "dns" || pipeline == "rom") {
    if (run_cfg.kind == ScenarioKind::Rve) {
      std::unique_ptr<RveSimulator> sim;
      RveOptions opt = rve_options_from(run_cfg, run_cfg.clustering);
      Decomposition decomp;
      if (pipeline == "dns") {
        sim = RveSimulator::dns(mesh, run_cfg.material, opt);
      } else {
        decomp = build_static_decomposition(mesh, run_cfg.material,
                                            run_cfg.clustering);
        sim = RveSimulator::rom(mesh, run_cfg.material, decomp, opt);
      }
      const RveRunResult rr = sim->run_loadpath(run_cfg.macro_strain);
      rec.curve = curve_from_rve(rr.steps);
      rec.completed = rr.completed;
      rec.message = rr.message;
      rec.wall_online = rr.wall_online;
      rec.wall_offline = rr.wall_offline;
      for (const auto& s : rr.steps)
        if (rec.initiation_step < 0 && s.damage > 0.0) rec.initiation_step = s.step;
      finalize_record(rec);
      if (ov.write_artifacts) {
        write_curve_csv(out_dir + "/curve.csv", rec.curve);
        write_clusters_csv(out_dir + "/clusters.csv", sim->decomposition());
        if (run_cfg.write_fields) {
          std::vector<double> ebar(static_cast<std::size_t>(mesh.n_elements()));
          std::vector<double> dmg(static_cast<std::size_t>(mesh.n_elements()));
          std::vector<double> cl(static_cast<std::size_t>(mesh.n_elements()));
          for (int e = 0; e < mesh.n_elements(); ++e) {
            const int c = sim->decomposition()
                              .elem_cluster[static_cast<std::size_t>(e)];
            ebar[static_cast<std::size_t>(e)] =
                sim->cluster_states()[static_cast<std::size_t>(c)].ebar_pl;
            dmg[static_cast<std::size_t>(e)] = sim->last_damage();
            cl[static_cast<std::size_t>(e)] = c;
          }
          write_vtk(out_dir + "/fields_" + std::to_string(rec.curve.size()) +
                        ".vtk",
                    mesh, {{"ebar_pl", ebar}, {"damage", dmg}, {"cluster", cl}});
        }
        write_report_json(out_dir + "/report.json", rec);
      }
      return rec;
    }

    // monoscale load path
    DriverConfig dc = driver_config_from(run_cfg);
    const RunResult rr = run_loadpath(mesh, run_cfg.material, run_cfg.loads, dc);
    rec.curve = curve_from_steps(rr.report.steps);
    rec.completed = rr.report.completed && !rr.diverged;
    rec.message = rr.message;
    rec.wall_online = rr.report.wall_total;
    rec.initiation_step = rr.initiation_step;
    finalize_record(rec);
    if (ov.write_artifacts) {
      write_curve_csv(out_dir + "/curve.csv", rec.curve);
      if (run_cfg.write_fields) {
        std::vector<double> ebar(static_cast<std::size_t>(mesh.n_elements()));
        std::vector<double> dmg(static_cast<std::size_t>(mesh.n_elements()));
        for (int e = 0; e < mesh.n_elements(); ++e) {
          ebar[static_cast<std::size_t>(e)] =
              rr.states[static_cast<std::size_t>(e)].ebar_pl;
          dmg[static_cast<std::size_t>(e)] =
              rr.states[static_cast<std::size_t>(e)].damage;
        }
        write_vtk(out_dir + "/fields_" + std::to_string(rec.curve.size()) +
                      ".vtk",
                  mesh, {{"ebar_pl", ebar}, {"damage", dmg}});
      }
      write_report_json(out_dir + "/report.json", rec);
    }
    return rec;
  }

  if (pipeline == "multiscale") {
    if (run_cfg.kind != ScenarioKind::Multiscale)
      throw ConfigError("multiscale pipeline needs a scenario of kind 'multiscale'");
    std::vector<std::unique_ptr<Mesh>> lib_meshes;
    std::vector<RveType> library;
    for (const auto& entry : run_cfg.rve_library) {
      auto m = std::make_unique<Mesh>(load_mesh(entry.mesh_path));
      RveType type;
      type.mesh = m.get();
      type.params = run_cfg.material;
      type.params.law = DamageLaw::Energy;
      type.decomp =
          build_static_decomposition(*m, type.params, entry.clustering);
      type.options = rve_options_from(run_cfg, entry.clustering);
      type.options.scheme =
          run_cfg.scheme == Scheme::Implicit ? Scheme::AafIe : run_cfg.scheme;
      library.push_back(std::move(type));
      lib_meshes.push_back(std::move(m));
    }
    const std::vector<char> region =
        region_box(mesh, run_cfg.region_lo, run_cfg.region_hi);
    MacroModel model = assign_rves(mesh, run_cfg.material, region, library,
                                   run_cfg.assignment_seed);
    MultiscaleConfig mc;
    mc.controller = run_cfg.controller;
    mc.newton_tol = run_cfg.ms_newton_tol;
    mc.max_newton = run_cfg.max_newton;
    mc.l0 = run_cfg.l0;
    mc.path = run_cfg.loads;
    const MultiscaleResult mr = run_multiscale(model, mc);
    rec.curve = curve_from_steps(mr.report.steps);
    rec.completed = mr.report.completed && !mr.diverged;
    rec.message = mr.message;
    rec.wall_online = mr.report.wall_total;
    finalize_record(rec);
    if (ov.write_artifacts) {
      write_curve_csv(out_dir + "/curve.csv", rec.curve);
      if (run_cfg.write_fields)
        write_vtk(out_dir + "/fields_" + std::to_string(rec.curve.size()) +
                      ".vtk",
                  mesh,
                  {{"damage_nonlocal", mr.d_hat},
                   {"damage", mr.d_local},
                   {"ebar_pl", mr.ebar}});
      write_report_json(out_dir + "/report.json", rec);
    }
    return rec;
  }

  throw ConfigError("unknown pipeline '" + pipeline + "'");
}

} // namespace poro
