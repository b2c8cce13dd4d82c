#include "poro/runio.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace poro {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

} // namespace

double curve_toughness(const std::vector<CurvePoint>& curve) {
  double t = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i)
    t += 0.5 * (curve[i].load + curve[i - 1].load) *
         (curve[i].displacement - curve[i - 1].displacement);
  return t;
}

double curve_uts(const std::vector<CurvePoint>& curve) {
  double u = 0.0;
  for (const auto& p : curve) u = std::max(u, p.load);
  return u;
}

double curve_energy_from(const std::vector<CurvePoint>& curve, int first_step) {
  double t = 0.0;
  for (std::size_t i = 1; i < curve.size(); ++i) {
    if (curve[i].step < first_step) continue;
    t += 0.5 * (curve[i].load + curve[i - 1].load) *
         (curve[i].displacement - curve[i - 1].displacement);
  }
  return t;
}

void finalize_record(RunRecord& rec) {
  rec.uts = curve_uts(rec.curve);
  rec.toughness = curve_toughness(rec.curve);
  rec.post_init_energy = rec.initiation_step >= 0
                             ? curve_energy_from(rec.curve, rec.initiation_step)
                             : 0.0;
}

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "step,time,dt,load,displacement,newton_iters,max_extrap_err\n";
  for (const auto& p : curve)
    out << p.step << ',' << fmt(p.time) << ',' << fmt(p.dt) << ','
        << fmt(p.load) << ',' << fmt(p.displacement) << ',' << p.newton_iters
        << ',' << fmt(p.max_extrap_err) << '\n';
}

std::vector<CurvePoint> read_curve_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("empty curve file");
  std::vector<CurvePoint> curve;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::replace(line.begin(), line.end(), ',', ' ');
    std::istringstream ss(line);
    CurvePoint p;
    ss >> p.step >> p.time >> p.dt >> p.load >> p.displacement >>
        p.newton_iters >> p.max_extrap_err;
    if (ss.fail()) throw std::runtime_error("malformed curve row: " + line);
    curve.push_back(p);
  }
  return curve;
}

void write_clusters_csv(const std::string& path, const Decomposition& decomp) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "entity_id,cluster_id,group_id\n";
  for (std::size_t e = 0; e < decomp.elem_cluster.size(); ++e) {
    const int c = decomp.elem_cluster[e];
    out << (e + 1) << ',' << c << ','
        << decomp.cluster_group[static_cast<std::size_t>(c)] + 1 << '\n';
  }
}

void write_vtk(const std::string& path, const Mesh& mesh,
               const std::map<std::string, std::vector<double>>& cell_fields) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << "# vtk DataFile Version 3.0\n";
  out << "porosolve fields\n";
  out << "ASCII\n";
  out << "DATASET UNSTRUCTURED_GRID\n";
  out << "POINTS " << mesh.n_nodes() << " double\n";
  for (const auto& x : mesh.nodes)
    out << fmt(x.x()) << ' ' << fmt(x.y()) << ' ' << fmt(x.z()) << '\n';
  const int npe = mesh.nodes_per_element();
  out << "CELLS " << mesh.n_elements() << ' '
      << mesh.n_elements() * (npe + 1) << '\n';
  for (int e = 0; e < mesh.n_elements(); ++e) {
    out << npe;
    for (int k = 0; k < npe; ++k)
      out << ' ' << mesh.elements[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
    out << '\n';
  }
  out << "CELL_TYPES " << mesh.n_elements() << '\n';
  const int cell_type = mesh.dim == 2 ? 5 : 10; // triangle / tetra
  for (int e = 0; e < mesh.n_elements(); ++e) out << cell_type << '\n';
  if (!cell_fields.empty()) {
    out << "CELL_DATA " << mesh.n_elements() << '\n';
    for (const auto& [name, values] : cell_fields) {
      if (static_cast<int>(values.size()) != mesh.n_elements())
        throw std::runtime_error("cell field '" + name + "' size mismatch");
      out << "SCALARS " << name << " double 1\n";
      out << "LOOKUP_TABLE default\n";
      for (double v : values) out << fmt(v) << '\n';
    }
  }
}

std::map<std::string, std::vector<double>> read_vtk_cell_fields(
    const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read " + path);
  std::map<std::string, std::vector<double>> fields;
  std::string tok;
  int n_cells = 0;
  while (in >> tok) {
    if (tok == "CELL_DATA") {
      in >> n_cells;
    } else if (tok == "SCALARS" && n_cells > 0) {
      std::string name, type;
      int comps;
      in >> name >> type >> comps;
      in >> tok >> tok; // LOOKUP_TABLE default
      std::vector<double> vals(static_cast<std::size_t>(n_cells));
      for (int i = 0; i < n_cells; ++i) in >> vals[static_cast<std::size_t>(i)];
      fields[name] = std::move(vals);
    }
  }
  return fields;
}

void write_report_json(const std::string& path, const RunRecord& rec) {
  nlohmann::json j;
  j["scenario"] = rec.scenario_name;
  j["scenario_hash"] = rec.scenario_hash;
  j["scheme"] = rec.scheme;
  j["completed"] = rec.completed;
  j["message"] = rec.message;
  j["wall_offline_s"] = rec.wall_offline;
  j["wall_online_s"] = rec.wall_online;
  j["steps"] = rec.curve.size();
  j["uts"] = rec.uts;
  j["toughness"] = rec.toughness;
  j["post_initiation_energy"] = rec.post_init_energy;
  j["initiation_step"] = rec.initiation_step;
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path);
  out << j.dump(2) << '\n';
}

CurveComparison compare_curves(const RunRecord& a, const RunRecord& b) {
  CurveComparison cmp;
  const auto& ca = a.curve;
  const auto& cb = b.curve;
  if (ca.size() < 2 || cb.size() < 2)
    throw std::invalid_argument("compare_curves: curves need >= 2 samples");

  cmp.uts_error = std::abs(curve_uts(cb) - curve_uts(ca)) /
                  std::max(1e-300, curve_uts(ca));
  cmp.toughness_error = std::abs(curve_toughness(cb) - curve_toughness(ca)) /
                        std::max(1e-300, std::abs(curve_toughness(ca)));

  const double lo = std::max(ca.front().displacement, cb.front().displacement);
  const double hi = std::min(ca.back().displacement, cb.back().displacement);
  if (!(hi > lo))
    throw std::invalid_argument("compare_curves: abscissa ranges do not overlap");

  auto interp = [](const std::vector<CurvePoint>& c, double x) {
    if (x <= c.front().displacement) return c.front().load;
    for (std::size_t i = 1; i < c.size(); ++i)
      if (x <= c[i].displacement) {
        const double x0 = c[i - 1].displacement, x1 = c[i].displacement;
        const double w = x1 > x0 ? (x - x0) / (x1 - x0) : 0.0;
        return (1.0 - w) * c[i - 1].load + w * c[i].load;
      }
    return c.back().load;
  };

  std::set<double> xs;
  for (const auto& p : ca)
    if (p.displacement >= lo && p.displacement <= hi) xs.insert(p.displacement);
  for (const auto& p : cb)
    if (p.displacement >= lo && p.displacement <= hi) xs.insert(p.displacement);
  xs.insert(lo);
  xs.insert(hi);

  double l2 = 0.0, ref = 0.0;
  double x_prev = 0.0, d_prev = 0.0, r_prev = 0.0;
  bool first = true;
  for (double x : xs) {
    const double fa = interp(ca, x), fb = interp(cb, x);
    const double d = (fa - fb) * (fa - fb);
    const double r = fa * fa;
    if (!first) {
      l2 += 0.5 * (d + d_prev) * (x - x_prev);
      ref += 0.5 * (r + r_prev) * (x - x_prev);
    }
    x_prev = x;
    d_prev = d;
    r_prev = r;
    first = false;
  }
  cmp.l2_distance = std::sqrt(l2);
  cmp.l2_relative = ref > 0.0 ? std::sqrt(l2 / ref) : 0.0;
  cmp.speedup = a.wall_online > 0.0 ? b.wall_online / a.wall_online : 0.0;
  return cmp;
}

} // namespace poro
