#include "poro/scenario.hpp"

#include <json.hpp>

#include <fstream>
#include <sstream>

namespace poro {

namespace {

using nlohmann::json;

[[noreturn]] void fail(const std::string& msg) { throw ConfigError(msg); }

json load_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open config file " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    fail("config parse error in " + path + ": " + e.what());
  }
  return j;
}

double num(const json& j, const char* key, double fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number()) fail(std::string("'") + key + "' must be a number");
  return j.at(key).get<double>();
}

int integer(const json& j, const char* key, int fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_number_integer())
    fail(std::string("'") + key + "' must be an integer");
  return j.at(key).get<int>();
}

bool boolean(const json& j, const char* key, bool fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_boolean()) fail(std::string("'") + key + "' must be a boolean");
  return j.at(key).get<bool>();
}

std::string text(const json& j, const char* key, const std::string& fallback) {
  if (!j.contains(key)) return fallback;
  if (!j.at(key).is_string()) fail(std::string("'") + key + "' must be a string");
  return j.at(key).get<std::string>();
}

MaterialParams parse_material(const json& j) {
  MaterialParams p;
  p.young = num(j, "young", p.young);
  p.poisson = num(j, "poisson", p.poisson);
  if (j.contains("hardening")) {
    const auto& h = j.at("hardening");
    if (!h.is_array() || h.empty()) fail("'hardening' must be a non-empty array");
    p.hardening.clear();
    for (const auto& row : h) {
      if (!row.is_array() || row.size() != 2)
        fail("'hardening' rows must be [ebar, sy] pairs");
      p.hardening.emplace_back(row[0].get<double>(), row[1].get<double>());
    }
  }
  p.eps_d = num(j, "eps_d", p.eps_d);
  p.alpha = num(j, "alpha", p.alpha);
  p.eps_f = num(j, "eps_f", p.eps_f);
  if (j.contains("g_f")) p.g_f = j.at("g_f").get<double>() * 1e-3; // N/m -> N/mm
  const std::string law = text(j, "law", "exponential");
  if (law == "exponential")
    p.law = DamageLaw::Exponential;
  else if (law == "energy")
    p.law = DamageLaw::Energy;
  else
    fail("'law' must be 'exponential' or 'energy'");
  try {
    p.validate();
  } catch (const std::invalid_argument& e) {
    fail(std::string("material: ") + e.what());
  }
  return p;
}

ClusteringConfig parse_clustering(const json& j) {
  ClusteringConfig c;
  c.n_cl = integer(j, "n_cl", c.n_cl);
  c.n_g = integer(j, "n_g", c.n_g);
  c.s_f = num(j, "s_f", c.s_f);
  c.seed = static_cast<std::uint64_t>(integer(j, "seed", static_cast<int>(c.seed)));
  const std::string mode = text(j, "mode", "stress");
  if (mode == "stress")
    c.stress_informed = true;
  else if (mode == "position")
    c.stress_informed = false;
  else
    fail("clustering 'mode' must be 'stress' or 'position'");
  c.ch_floor = boolean(j, "ch_floor", c.ch_floor);
  c.ch_k_max = integer(j, "ch_k_max", c.ch_k_max);
  const std::string dyn = text(j, "dynamic", "off");
  if (dyn == "off")
    c.dynamic = DynamicMode::Off;
  else if (dyn == "uniform")
    c.dynamic = DynamicMode::Uniform;
  else if (dyn == "error")
    c.dynamic = DynamicMode::ErrorControlled;
  else
    fail("clustering 'dynamic' must be 'off', 'uniform' or 'error'");
  c.n_cl_user = integer(j, "n_cl_user", c.n_cl_user);
  c.n_cl_0 = integer(j, "n_cl_0", c.n_cl_0);
  c.refine.anomaly_quantile = num(j, "anomaly_quantile", c.refine.anomaly_quantile);
  c.refine.discontinuity_factor =
      num(j, "discontinuity_factor", c.refine.discontinuity_factor);
  if (c.n_cl < 1) fail("clustering 'n_cl' must be >= 1");
  if (c.n_g < 1) fail("clustering 'n_g' must be >= 1");
  if (c.n_cl < c.n_g) fail("clustering requires n_cl >= n_g");
  return c;
}

LoadPath parse_loads(const json& j) {
  LoadPath path;
  if (j.contains("dirichlet")) {
    for (const auto& d : j.at("dirichlet")) {
      LoadPath::BC bc;
      bc.set = text(d, "set", "");
      if (bc.set.empty()) fail("dirichlet entries need a 'set'");
      bc.dof = integer(d, "dof", 0);
      bc.target = num(d, "value", 0.0);
      path.dirichlet.push_back(bc);
    }
  }
  if (j.contains("fixed")) {
    for (const auto& d : j.at("fixed")) {
      LoadPath::BC bc;
      bc.set = text(d, "set", "");
      if (bc.set.empty()) fail("fixed entries need a 'set'");
      bc.dof = integer(d, "dof", 0);
      bc.target = 0.0;
      path.dirichlet.push_back(bc);
    }
  }
  if (path.dirichlet.empty()) fail("'loads' needs dirichlet or fixed entries");
  if (j.contains("measure")) {
    path.measure_set = text(j.at("measure"), "set", "");
    path.measure_dof = integer(j.at("measure"), "dof", 0);
  }
  return path;
}

} // namespace

ScenarioConfig load_scenario(const std::string& path) {
  const json j = load_json(path);
  ScenarioConfig cfg;
  cfg.source_path = path;
  cfg.name = text(j, "name", "scenario");
  const std::string kind = text(j, "kind", "");
  if (kind == "monoscale")
    cfg.kind = ScenarioKind::Monoscale;
  else if (kind == "rve")
    cfg.kind = ScenarioKind::Rve;
  else if (kind == "multiscale")
    cfg.kind = ScenarioKind::Multiscale;
  else
    fail("'kind' must be 'monoscale', 'rve' or 'multiscale'");

  cfg.mesh_path = text(j, "mesh", "");
  if (cfg.mesh_path.empty()) fail("'mesh' path is required");
  {
    std::ifstream probe(cfg.mesh_path);
    if (!probe) fail("mesh file does not exist: " + cfg.mesh_path);
  }

  if (!j.contains("material")) fail("'material' section is required");
  cfg.material = parse_material(j.at("material"));

  if (j.contains("integrator")) {
    const auto& ji = j.at("integrator");
    cfg.scheme = scheme_from_string(text(ji, "scheme", "aaf-ie"));
    cfg.n_steps = integer(ji, "n_steps", cfg.n_steps);
    if (cfg.n_steps < 1) fail("'n_steps' must be >= 1");
    cfg.controller.dt0 = num(ji, "dt0", cfg.controller.dt0);
    cfg.controller.xi = num(ji, "xi", cfg.controller.xi);
    cfg.controller.e_ref = num(ji, "e_ref", cfg.controller.e_ref);
    cfg.controller.dt_min = num(ji, "dt_min", cfg.controller.dt_min);
    cfg.controller.dt_max = num(ji, "dt_max", cfg.controller.dt_max);
    cfg.controller.safety = num(ji, "safety", cfg.controller.safety);
    cfg.controller.growth = num(ji, "growth", cfg.controller.growth);
    cfg.newton_tol = num(ji, "newton_tol", cfg.newton_tol);
    cfg.max_newton = integer(ji, "max_newton", cfg.max_newton);
    cfg.enable_damage = boolean(ji, "enable_damage", cfg.enable_damage);
    cfg.implicit_substeps = boolean(ji, "implicit_substeps", cfg.implicit_substeps);
  }

  if (cfg.kind == ScenarioKind::Rve) {
    if (!j.contains("rve")) fail("'rve' section required for kind 'rve'");
    const auto& jr = j.at("rve");
    if (jr.contains("macro_strain")) {
      const auto& a = jr.at("macro_strain");
      if (!a.is_array() || a.size() != 6)
        fail("'macro_strain' must have 6 Voigt components");
      for (int i = 0; i < 6; ++i) cfg.macro_strain[i] = a[static_cast<std::size_t>(i)].get<double>();
    } else if (jr.contains("deformation_gradient")) {
      const auto& f = jr.at("deformation_gradient");
      if (!f.is_array() || f.size() != 3) fail("'deformation_gradient' must be 3x3");
      Eigen::Matrix3d fm;
      for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c) fm(r, c) = f[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)].get<double>();
      const Eigen::Matrix3d e = 0.5 * (fm + fm.transpose()) - Eigen::Matrix3d::Identity();
      cfg.macro_strain << e(0, 0), e(1, 1), e(2, 2), 2.0 * e(0, 1), 2.0 * e(0, 2),
          2.0 * e(1, 2);
    } else {
      fail("'rve' needs 'macro_strain' or 'deformation_gradient'");
    }
  } else {
    if (!j.contains("loads")) fail("'loads' section is required");
    cfg.loads = parse_loads(j.at("loads"));
  }

  if (j.contains("nonlocal")) cfg.l0 = num(j.at("nonlocal"), "l0", 0.0);
  if (j.contains("clustering")) cfg.clustering = parse_clustering(j.at("clustering"));

  if (cfg.kind == ScenarioKind::Multiscale) {
    if (!j.contains("multiscale")) fail("'multiscale' section required");
    const auto& jm = j.at("multiscale");
    if (!jm.contains("region") || !jm.at("region").is_array() ||
        jm.at("region").size() != 4)
      fail("'multiscale.region' must be [x0, y0, x1, y1]");
    const auto& r = jm.at("region");
    cfg.region_lo = {r[0].get<double>(), r[1].get<double>(), -1e300};
    cfg.region_hi = {r[2].get<double>(), r[3].get<double>(), 1e300};
    if (!jm.contains("rve_library") || jm.at("rve_library").empty())
      fail("'multiscale.rve_library' must be non-empty");
    for (const auto& e : jm.at("rve_library")) {
      RveLibraryEntry entry;
      entry.mesh_path = text(e, "mesh", "");
      if (entry.mesh_path.empty()) fail("rve_library entries need a 'mesh'");
      std::ifstream probe(entry.mesh_path);
      if (!probe) fail("RVE mesh does not exist: " + entry.mesh_path);
      entry.clustering =
          e.contains("clustering") ? parse_clustering(e.at("clustering")) : cfg.clustering;
      cfg.rve_library.push_back(entry);
    }
    cfg.assignment_seed = static_cast<std::uint64_t>(
        integer(jm, "assignment_seed", static_cast<int>(cfg.assignment_seed)));
    cfg.ms_newton_tol = num(jm, "newton_tol", cfg.ms_newton_tol);
  }

  if (j.contains("outputs")) {
    cfg.write_fields = boolean(j.at("outputs"), "fields", cfg.write_fields);
    cfg.field_every = integer(j.at("outputs"), "every", cfg.field_every);
  }
  cfg.seed = static_cast<std::uint64_t>(integer(j, "seed", static_cast<int>(cfg.seed)));
  return cfg;
}

std::uint64_t scenario_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open config file " + path);
  std::uint64_t h = 1469598103934665603ull;
  char ch;
  while (in.get(ch)) {
    h ^= static_cast<unsigned char>(ch);
    h *= 1099511628211ull;
  }
  return h;
}

RveOptions rve_options_from(const ScenarioConfig& cfg,
                            const ClusteringConfig& cl) {
  RveOptions opt;
  opt.scheme = cfg.scheme;
  opt.n_steps = cfg.n_steps;
  opt.controller = cfg.controller;
  opt.newton_tol = cfg.newton_tol;
  opt.max_newton = cfg.max_newton;
  opt.enable_damage = cfg.enable_damage;
  opt.dynamic = cl.dynamic;
  opt.n_cl_user = cl.n_cl_user > 0 ? cl.n_cl_user : cl.n_cl;
  opt.n_cl_0 = cl.n_cl_0;
  opt.seed = cl.seed;
  opt.refine = cl.refine;
  return opt;
}

} // namespace poro
