#include "poro/nonlocal.hpp"

#include "poro/kernels.hpp"
#include "poro/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <stdexcept>

namespace poro {

double bell_kernel(double r, double l0) {
  const double t = 1.0 - 4.0 * r * r / (l0 * l0);
  const double m = t > 0.0 ? t : 0.0;
  return m * m;
}

NeighborTable build_neighbor_table(const std::vector<Eigen::Vector3d>& points,
                                   const std::vector<double>& volumes, double l0) {
  if (!(l0 > 0.0)) throw std::invalid_argument("l0 must be > 0");
  const int n = static_cast<int>(points.size());
  const double radius = 0.5 * l0;

  // Uniform hash grid with cell size l0/2; deterministic iteration by IP id.
  using Key = std::array<long, 3>;
  std::map<Key, std::vector<int>> grid;
  auto cell_of = [&](const Eigen::Vector3d& p) {
    return Key{static_cast<long>(std::floor(p.x() / radius)),
               static_cast<long>(std::floor(p.y() / radius)),
               static_cast<long>(std::floor(p.z() / radius))};
  };
  for (int i = 0; i < n; ++i) grid[cell_of(points[static_cast<std::size_t>(i)])].push_back(i);

  NeighborTable table;
  table.l0 = l0;
  table.offset.assign(static_cast<std::size_t>(n) + 1, 0);

  std::vector<std::int32_t> nbr;
  std::vector<double> raw;
  for (int i = 0; i < n; ++i) {
    nbr.clear();
    raw.clear();
    const Eigen::Vector3d& xi = points[static_cast<std::size_t>(i)];
    const Key c = cell_of(xi);
    for (long dx = -1; dx <= 1; ++dx)
      for (long dy = -1; dy <= 1; ++dy)
        for (long dz = -1; dz <= 1; ++dz) {
          const auto it = grid.find(Key{c[0] + dx, c[1] + dy, c[2] + dz});
          if (it == grid.end()) continue;
          for (int j : it->second) {
            const double r = (points[static_cast<std::size_t>(j)] - xi).norm();
            if (r < radius) {
              nbr.push_back(j);
              raw.push_back(bell_kernel(r, l0) * volumes[static_cast<std::size_t>(j)]);
            }
          }
        }
    // sort by neighbor id for deterministic storage
    std::vector<std::size_t> order(nbr.size());
    for (std::size_t k = 0; k < order.size(); ++k) order[k] = k;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return nbr[a] < nbr[b]; });
    double sum = 0.0;
    for (double v : raw) sum += v;
    if (sum <= 0.0) { // isolated IP: weight 1 on itself
      nbr = {i};
      raw = {1.0};
      order = {0};
      sum = 1.0;
    }
    for (std::size_t k : order) {
      table.idx.push_back(nbr[k]);
      table.weight.push_back(raw[k] / sum);
    }
    table.offset[static_cast<std::size_t>(i) + 1] =
        static_cast<std::int32_t>(table.idx.size());
  }
  return table;
}

NeighborTable build_neighbor_table(const Mesh& mesh, double l0) {
  std::vector<Eigen::Vector3d> pts;
  std::vector<double> vols;
  pts.reserve(static_cast<std::size_t>(mesh.n_elements()));
  vols.reserve(static_cast<std::size_t>(mesh.n_elements()));
  for (int e = 0; e < mesh.n_elements(); ++e) {
    pts.push_back(mesh.element_centroid(e));
    vols.push_back(mesh.element_volume(e));
  }
  return build_neighbor_table(pts, vols, l0);
}

std::vector<double> nonlocal_average(const NeighborTable& table,
                                     const std::vector<double>& field) {
  const int n = table.n_points();
  if (static_cast<int>(field.size()) != n)
    throw std::invalid_argument("field size does not match neighbor table");
  std::vector<double> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const std::size_t b = static_cast<std::size_t>(table.offset[static_cast<std::size_t>(i)]);
    const std::size_t e = static_cast<std::size_t>(table.offset[static_cast<std::size_t>(i) + 1]);
    out[static_cast<std::size_t>(i)] = kern::gather_weighted(
        table.weight.data() + b, table.idx.data() + b, field.data(), e - b);
  }
  return out;
}

} // namespace poro
