#pragma once

// Meshing primitives: linear simplices (3-node triangles, 4-node tetrahedra)
// with one integration point at the centroid. 2D models are plane strain.

#include "poro/voigt.hpp"

#include <Eigen/Dense>

#include <array>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace poro {

struct MeshError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct Mesh {
  int dim = 2;
  std::vector<Eigen::Vector3d> nodes;            // z = 0 in 2D
  std::vector<std::array<int, 4>> elements;      // 0-based; [3] = -1 in 2D
  std::map<std::string, std::vector<int>> node_sets;

  int n_nodes() const { return static_cast<int>(nodes.size()); }
  int n_elements() const { return static_cast<int>(elements.size()); }
  int nodes_per_element() const { return dim + 1; }
  int n_dofs() const { return dim * n_nodes(); }

  double element_volume(int e) const { return volumes_[static_cast<std::size_t>(e)]; }
  Eigen::Vector3d element_centroid(int e) const;

  const std::vector<int>& boundary_nodes() const { return boundary_nodes_; }
  // Elements sharing a facet (edge in 2D, face in 3D) with e.
  const std::vector<int>& element_neighbors(int e) const {
    return elem_neighbors_[static_cast<std::size_t>(e)];
  }
  const std::vector<int>& node_elements(int n) const {
    return node_elems_[static_cast<std::size_t>(n)];
  }

  // Validates invariants and fills the caches; throws MeshError.
  void finalize();

private:
  std::vector<double> volumes_;
  std::vector<int> boundary_nodes_;
  std::vector<std::vector<int>> elem_neighbors_;
  std::vector<std::vector<int>> node_elems_;
};

struct ElementGeometry {
  Eigen::Matrix<double, 6, Eigen::Dynamic> b; // strain-displacement, eng rows
  double volume = 0.0;
  double l_e = 0.0; // |Omega_e|^(1/dim)
};

double signed_volume(const Mesh& mesh, const std::array<int, 4>& elem, int dim);

ElementGeometry element_geometry(const Mesh& mesh, int element_id);

Mesh load_mesh(const std::string& path);
Mesh parse_mesh(std::istream& in, const std::string& origin);
void save_mesh(const Mesh& mesh, const std::string& path);

} // namespace poro
