#pragma once

// Run records, curve/report/field emitters and the curve comparison used by
// the benchmark harness. CSV and VTK values are printed with %.17g so files
// re-parse to the exact stored doubles.

#include "poro/clustering.hpp"
#include "poro/integrate.hpp"
#include "poro/mesh.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace poro {

struct CurvePoint {
  int step = 0;
  double time = 0.0;
  double dt = 0.0;
  double load = 0.0;
  double displacement = 0.0;
  int newton_iters = 0;
  double max_extrap_err = 0.0;
};

struct RunRecord {
  std::uint64_t scenario_hash = 0;
  std::string scheme;
  std::string scenario_name;
  double wall_offline = 0.0;
  double wall_online = 0.0;
  std::vector<CurvePoint> curve;
  double uts = 0.0;             // peak load (or homogenized stress)
  double toughness = 0.0;       // trapezoid over the full curve
  double post_init_energy = 0.0; // trapezoid after the initiation step
  int initiation_step = -1;
  bool completed = true;
  std::string message;
};

double curve_toughness(const std::vector<CurvePoint>& curve);
double curve_uts(const std::vector<CurvePoint>& curve);
double curve_energy_from(const std::vector<CurvePoint>& curve, int first_step);

// finalizes uts/toughness/post-initiation energy from the stored curve
void finalize_record(RunRecord& rec);

void write_curve_csv(const std::string& path,
                     const std::vector<CurvePoint>& curve);
std::vector<CurvePoint> read_curve_csv(const std::string& path);

void write_clusters_csv(const std::string& path, const Decomposition& decomp);

void write_vtk(const std::string& path, const Mesh& mesh,
               const std::map<std::string, std::vector<double>>& cell_fields);
std::map<std::string, std::vector<double>> read_vtk_cell_fields(
    const std::string& path);

void write_report_json(const std::string& path, const RunRecord& rec);

struct CurveComparison {
  double uts_error = 0.0;       // relative
  double toughness_error = 0.0; // relative
  double l2_distance = 0.0;     // absolute, common-abscissa interpolation
  double l2_relative = 0.0;     // l2 / L2 of record A
  double speedup = 0.0;         // wall(B) / wall(A)
};

CurveComparison compare_curves(const RunRecord& a, const RunRecord& b);

} // namespace poro
