#include "poro/meshgen.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace poro {

namespace {

// Drops elements flagged for removal, compacts node ids and rebuilds the
// rectangle boundary sets from the surviving node coordinates.
Mesh compact(int dim, const std::vector<Eigen::Vector3d>& nodes,
             const std::vector<std::array<int, 4>>& elements,
             const std::vector<char>& keep, double w, double h,
             bool rect_sets) {
  Mesh mesh;
  mesh.dim = dim;
  std::vector<int> remap(nodes.size(), -1);
  for (std::size_t e = 0; e < elements.size(); ++e) {
    if (!keep[e]) continue;
    for (int k = 0; k < dim + 1; ++k) {
      const int n = elements[e][static_cast<std::size_t>(k)];
      if (remap[static_cast<std::size_t>(n)] < 0) {
        remap[static_cast<std::size_t>(n)] = mesh.n_nodes();
        mesh.nodes.push_back(nodes[static_cast<std::size_t>(n)]);
      }
    }
    std::array<int, 4> el = {-1, -1, -1, -1};
    for (int k = 0; k < dim + 1; ++k)
      el[static_cast<std::size_t>(k)] =
          remap[static_cast<std::size_t>(elements[e][static_cast<std::size_t>(k)])];
    mesh.elements.push_back(el);
  }
  if (rect_sets) {
    const double tol = 1e-9 * std::max(w, h);
    std::vector<int> left, right, bottom, top;
    for (int n = 0; n < mesh.n_nodes(); ++n) {
      const auto& x = mesh.nodes[static_cast<std::size_t>(n)];
      if (std::abs(x.x()) < tol) left.push_back(n);
      if (std::abs(x.x() - w) < tol) right.push_back(n);
      if (std::abs(x.y()) < tol) bottom.push_back(n);
      if (std::abs(x.y() - h) < tol) top.push_back(n);
    }
    mesh.node_sets["left"] = left;
    mesh.node_sets["right"] = right;
    mesh.node_sets["bottom"] = bottom;
    mesh.node_sets["top"] = top;
  }
  mesh.finalize();
  return mesh;
}

void rect_grid(double w, double h, int nx, int ny,
               std::vector<Eigen::Vector3d>& nodes,
               std::vector<std::array<int, 4>>& elements) {
  nodes.clear();
  elements.clear();
  auto id = [&](int i, int j) { return j * (nx + 1) + i; };
  for (int j = 0; j <= ny; ++j)
    for (int i = 0; i <= nx; ++i)
      nodes.emplace_back(w * i / nx, h * j / ny, 0.0);
  for (int j = 0; j < ny; ++j)
    for (int i = 0; i < nx; ++i) {
      const int a = id(i, j), b = id(i + 1, j), c = id(i + 1, j + 1),
                d = id(i, j + 1);
      // alternate the diagonal for a symmetric pattern
      if ((i + j) % 2 == 0) {
        elements.push_back({a, b, c, -1});
        elements.push_back({a, c, d, -1});
      } else {
        elements.push_back({a, b, d, -1});
        elements.push_back({b, c, d, -1});
      }
    }
}

} // namespace

Mesh make_unit_triangle() {
  Mesh mesh;
  mesh.dim = 2;
  mesh.nodes = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}};
  mesh.elements = {{0, 1, 2, -1}};
  mesh.node_sets["all"] = {0, 1, 2};
  mesh.finalize();
  return mesh;
}

Mesh make_unit_tet() {
  Mesh mesh;
  mesh.dim = 3;
  mesh.nodes = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {0, 0, 1}};
  mesh.elements = {{0, 1, 2, 3}};
  mesh.node_sets["all"] = {0, 1, 2, 3};
  mesh.finalize();
  return mesh;
}

Mesh make_rect_mesh(double w, double h, int nx, int ny) {
  std::vector<Eigen::Vector3d> nodes;
  std::vector<std::array<int, 4>> elements;
  rect_grid(w, h, nx, ny, nodes, elements);
  return compact(2, nodes, elements, std::vector<char>(elements.size(), 1), w,
                 h, true);
}

Mesh make_plate_hole(double w, double h, int nx, int ny, double r) {
  std::vector<Eigen::Vector3d> nodes;
  std::vector<std::array<int, 4>> elements;
  rect_grid(w, h, nx, ny, nodes, elements);
  std::vector<char> keep(elements.size(), 1);
  for (std::size_t e = 0; e < elements.size(); ++e) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) c += nodes[static_cast<std::size_t>(elements[e][static_cast<std::size_t>(k)])];
    c /= 3.0;
    if (c.head<2>().norm() < r) keep[e] = 0;
  }
  return compact(2, nodes, elements, keep, w, h, true);
}

Mesh make_notched_plate(double w, double h, int nx, int ny, double len,
                        double hw) {
  std::vector<Eigen::Vector3d> nodes;
  std::vector<std::array<int, 4>> elements;
  rect_grid(w, h, nx, ny, nodes, elements);
  std::vector<char> keep(elements.size(), 1);
  for (std::size_t e = 0; e < elements.size(); ++e) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) c += nodes[static_cast<std::size_t>(elements[e][static_cast<std::size_t>(k)])];
    c /= 3.0;
    if (c.x() < len && std::abs(c.y() - 0.5 * h) < hw) keep[e] = 0;
  }
  return compact(2, nodes, elements, keep, w, h, true);
}

Mesh make_pore_rve_2d(double l, int n, const std::vector<Pore>& pores) {
  std::vector<Eigen::Vector3d> nodes;
  std::vector<std::array<int, 4>> elements;
  rect_grid(l, l, n, n, nodes, elements);
  std::vector<char> keep(elements.size(), 1);
  for (std::size_t e = 0; e < elements.size(); ++e) {
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int k = 0; k < 3; ++k) c += nodes[static_cast<std::size_t>(elements[e][static_cast<std::size_t>(k)])];
    c /= 3.0;
    for (const auto& p : pores)
      if ((c - Eigen::Vector3d(p.x, p.y, 0.0)).head<2>().norm() < p.r) keep[e] = 0;
  }
  return compact(2, nodes, elements, keep, l, l, true);
}

Mesh make_pore_rve_3d(double l, int n, const std::vector<Pore>& pores) {
  std::vector<Eigen::Vector3d> nodes;
  auto id = [&](int i, int j, int k) {
    return (k * (n + 1) + j) * (n + 1) + i;
  };
  for (int k = 0; k <= n; ++k)
    for (int j = 0; j <= n; ++j)
      for (int i = 0; i <= n; ++i)
        nodes.emplace_back(l * i / n, l * j / n, l * k / n);

  // Kuhn subdivision: six tets per cell along the main diagonal.
  static const int perms[6][3] = {{0, 1, 2}, {0, 2, 1}, {1, 0, 2},
                                  {1, 2, 0}, {2, 0, 1}, {2, 1, 0}};
  std::vector<std::array<int, 4>> elements;
  for (int k = 0; k < n; ++k)
    for (int j = 0; j < n; ++j)
      for (int i = 0; i < n; ++i)
        for (const auto& p : perms) {
          int v[3] = {0, 0, 0};
          std::array<int, 4> el;
          el[0] = id(i, j, k);
          for (int s = 0; s < 3; ++s) {
            v[p[s]] = 1;
            el[static_cast<std::size_t>(s + 1)] =
                id(i + v[0], j + v[1], k + v[2]);
          }
          elements.push_back(el);
        }

  Mesh probe;
  probe.dim = 3;
  probe.nodes = nodes;
  std::vector<char> keep(elements.size(), 1);
  for (std::size_t e = 0; e < elements.size(); ++e) {
    if (signed_volume(probe, elements[e], 3) < 0.0)
      std::swap(elements[e][2], elements[e][3]);
    Eigen::Vector3d c = Eigen::Vector3d::Zero();
    for (int kk = 0; kk < 4; ++kk)
      c += nodes[static_cast<std::size_t>(elements[e][static_cast<std::size_t>(kk)])];
    c /= 4.0;
    for (const auto& p : pores)
      if ((c - Eigen::Vector3d(p.x, p.y, p.z)).norm() < p.r) keep[e] = 0;
  }
  Mesh mesh = compact(3, nodes, elements, keep, l, l, false);
  const double tol = 1e-9 * l;
  std::vector<int> bottom, top;
  for (int nn = 0; nn < mesh.n_nodes(); ++nn) {
    if (std::abs(mesh.nodes[static_cast<std::size_t>(nn)].z()) < tol)
      bottom.push_back(nn);
    if (std::abs(mesh.nodes[static_cast<std::size_t>(nn)].z() - l) < tol)
      top.push_back(nn);
  }
  mesh.node_sets["bottom"] = bottom;
  mesh.node_sets["top"] = top;
  return mesh;
}

void write_bundled_meshes(const std::string& dir) {
  auto put = [&](const std::string& name, const Mesh& mesh) {
    save_mesh(mesh, dir + "/" + name + ".pmesh");
  };

  {
    Mesh m = make_unit_triangle();
    m.node_sets["left"] = {0, 2};
    m.node_sets["bottom"] = {0, 1};
    m.node_sets["right"] = {1};
    m.node_sets["top"] = {2};
    save_mesh(m, dir + "/one_elem.pmesh");
  }

  put("plate_hole", make_plate_hole(30.0, 30.0, 16, 16, 7.5));
  put("notched_coarse", make_notched_plate(30.0, 30.0, 24, 24, 10.0, 1.25));
  put("notched_mid", make_notched_plate(30.0, 30.0, 36, 36, 10.0, 1.25));
  put("notched_fine", make_notched_plate(30.0, 30.0, 48, 48, 10.0, 1.25));

  const std::vector<Pore> two_pores = {{0.035, 0.05, 0.0, 0.015},
                                       {0.065, 0.05, 0.0, 0.015}};
  put("rve2p_coarse", make_pore_rve_2d(0.1, 22, two_pores));
  put("rve2p_std", make_pore_rve_2d(0.1, 32, two_pores));
  put("rve2p_fine", make_pore_rve_2d(0.1, 48, two_pores));

  for (const auto& [tag, r] :
       std::vector<std::pair<std::string, double>>{
           {"r06", 0.006}, {"r10", 0.010}, {"r14", 0.014}, {"r18", 0.018}}) {
    const std::vector<Pore> p = {{0.030, 0.05, 0.0, r}, {0.070, 0.05, 0.0, r}};
    put("ladder_" + tag, make_pore_rve_2d(0.1, 32, p));
  }

  const std::vector<Pore> complex_pores = {
      {0.022, 0.031, 0.0, 0.011}, {0.055, 0.024, 0.0, 0.008},
      {0.081, 0.042, 0.0, 0.010}, {0.035, 0.062, 0.0, 0.012},
      {0.067, 0.071, 0.0, 0.009}, {0.050, 0.047, 0.0, 0.006},
      {0.018, 0.080, 0.0, 0.007}};
  put("complex", make_pore_rve_2d(0.1, 36, complex_pores));

  put("rve3d", make_pore_rve_3d(0.1, 6, {{0.05, 0.05, 0.05, 0.03}}));

  put("ms_plate", make_rect_mesh(30.0, 30.0, 12, 12));
  put("msrve_solid", make_pore_rve_2d(0.1, 16, {}));
  put("msrve_a", make_pore_rve_2d(0.1, 16, {{0.05, 0.05, 0.0, 0.0144}}));
  put("msrve_b", make_pore_rve_2d(0.1, 16,
                                  {{0.034, 0.046, 0.0, 0.0102},
                                   {0.068, 0.058, 0.0, 0.0102}}));
  put("msrve_c", make_pore_rve_2d(0.1, 16,
                                  {{0.028, 0.036, 0.0, 0.0083},
                                   {0.060, 0.050, 0.0, 0.0083},
                                   {0.040, 0.072, 0.0, 0.0083}}));
  put("msrve_d", make_pore_rve_2d(0.1, 16,
                                  {{0.026, 0.030, 0.0, 0.0072},
                                   {0.062, 0.034, 0.0, 0.0072},
                                   {0.036, 0.064, 0.0, 0.0072},
                                   {0.072, 0.068, 0.0, 0.0072}}));
}

} // namespace poro
