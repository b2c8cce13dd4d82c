#pragma once

// Deterministic structured-simplex generators for the bundled scenarios:
// rectangles, plates with holes/notches, and porous RVEs in 2D and 3D.
// Rectangle-based meshes carry the node sets left/right/bottom/top.

#include "poro/mesh.hpp"

#include <vector>

namespace poro {

struct Pore {
  double x = 0.0, y = 0.0, z = 0.0;
  double r = 0.0;
};

Mesh make_unit_triangle();
Mesh make_unit_tet();

Mesh make_rect_mesh(double w, double h, int nx, int ny);

// Quarter plate with a quarter hole of radius r at the (0,0) corner.
Mesh make_plate_hole(double w, double h, int nx, int ny, double r);

// Edge slot from x = 0 to x = len at mid height, half-width hw.
Mesh make_notched_plate(double w, double h, int nx, int ny, double len,
                        double hw);

// Square RVE [0,L]^2 minus circular pores.
Mesh make_pore_rve_2d(double l, int n, const std::vector<Pore>& pores);

// Cube RVE [0,L]^3 minus spherical pores (6 tets per cell).
Mesh make_pore_rve_3d(double l, int n, const std::vector<Pore>& pores);

// Writes the full bundled mesh library used by the shipped scenarios.
void write_bundled_meshes(const std::string& dir);

} // namespace poro
