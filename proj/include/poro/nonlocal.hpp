#pragma once

// Integral-type nonlocal averaging with the polynomial bell-shaped kernel
// omega_inf(r) = <1 - 4 r^2 / l0^2>^2, support radius l0/2. Discrete weights
// are tributary-volume weighted and normalized to a partition of unity.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace poro {

struct Mesh;

struct NeighborTable {
  double l0 = 0.0;
  // CSR layout: neighbors of IP i are idx[offset[i] .. offset[i+1])
  std::vector<std::int32_t> offset;
  std::vector<std::int32_t> idx;
  std::vector<double> weight;

  int n_points() const { return static_cast<int>(offset.size()) - 1; }
};

double bell_kernel(double r, double l0);

NeighborTable build_neighbor_table(const std::vector<Eigen::Vector3d>& points,
                                   const std::vector<double>& volumes, double l0);

// Convenience: IPs at element centroids with element volumes as tributary.
NeighborTable build_neighbor_table(const Mesh& mesh, double l0);

std::vector<double> nonlocal_average(const NeighborTable& table,
                                     const std::vector<double>& field);

} // namespace poro
