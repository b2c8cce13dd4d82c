#include "poro/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <istream>
#include <map>
#include <sstream>

namespace poro {

Eigen::Vector3d Mesh::element_centroid(int e) const {
  Eigen::Vector3d c = Eigen::Vector3d::Zero();
  const auto& el = elements[static_cast<std::size_t>(e)];
  for (int k = 0; k < nodes_per_element(); ++k) c += nodes[static_cast<std::size_t>(el[static_cast<std::size_t>(k)])];
  return c / nodes_per_element();
}

double signed_volume(const Mesh& mesh, const std::array<int, 4>& elem, int dim) {
  const auto& x = mesh.nodes;
  if (dim == 2) {
    const Eigen::Vector3d a = x[static_cast<std::size_t>(elem[1])] - x[static_cast<std::size_t>(elem[0])];
    const Eigen::Vector3d b = x[static_cast<std::size_t>(elem[2])] - x[static_cast<std::size_t>(elem[0])];
    return 0.5 * (a.x() * b.y() - a.y() * b.x());
  }
  Eigen::Matrix3d j;
  for (int c = 0; c < 3; ++c)
    j.col(c) = x[static_cast<std::size_t>(elem[static_cast<std::size_t>(c + 1)])] - x[static_cast<std::size_t>(elem[0])];
  return j.determinant() / 6.0;
}

void Mesh::finalize() {
  if (dim != 2 && dim != 3) throw MeshError("mesh dimension must be 2 or 3");
  const int npe = nodes_per_element();
  volumes_.resize(elements.size());
  node_elems_.assign(nodes.size(), {});
  for (std::size_t e = 0; e < elements.size(); ++e) {
    const auto& el = elements[e];
    for (int k = 0; k < npe; ++k) {
      const int n = el[static_cast<std::size_t>(k)];
      if (n < 0 || n >= n_nodes())
        throw MeshError("element " + std::to_string(e + 1) +
                        " references missing node " + std::to_string(n + 1));
      for (int l = k + 1; l < npe; ++l)
        if (el[static_cast<std::size_t>(l)] == n)
          throw MeshError("element " + std::to_string(e + 1) +
                          " has repeated node ids");
      node_elems_[static_cast<std::size_t>(n)].push_back(static_cast<int>(e));
    }
    const double v = signed_volume(*this, el, dim);
    if (!(v > 0.0))
      throw MeshError("inverted or degenerate element " + std::to_string(e + 1));
    volumes_[e] = v;
  }
  for (const auto& [name, ids] : node_sets)
    for (int n : ids)
      if (n < 0 || n >= n_nodes())
        throw MeshError("node set '" + name + "' references missing node " +
                        std::to_string(n + 1));

  // Facet incidence: boundary facets appear exactly once.
  std::map<std::vector<int>, std::vector<int>> facets;
  const int nfacets = npe; // simplex: one facet opposite each node
  for (std::size_t e = 0; e < elements.size(); ++e) {
    for (int f = 0; f < nfacets; ++f) {
      std::vector<int> key;
      for (int k = 0; k < npe; ++k)
        if (k != f) key.push_back(elements[e][static_cast<std::size_t>(k)]);
      std::sort(key.begin(), key.end());
      facets[key].push_back(static_cast<int>(e));
    }
  }
  elem_neighbors_.assign(elements.size(), {});
  std::vector<char> on_boundary(nodes.size(), 0);
  for (const auto& [key, els] : facets) {
    if (els.size() == 1) {
      for (int n : key) on_boundary[static_cast<std::size_t>(n)] = 1;
    } else {
      for (std::size_t i = 0; i < els.size(); ++i)
        for (std::size_t j = 0; j < els.size(); ++j)
          if (i != j) elem_neighbors_[static_cast<std::size_t>(els[i])].push_back(els[j]);
    }
  }
  boundary_nodes_.clear();
  for (int n = 0; n < n_nodes(); ++n)
    if (on_boundary[static_cast<std::size_t>(n)]) boundary_nodes_.push_back(n);
  for (auto& nb : elem_neighbors_) {
    std::sort(nb.begin(), nb.end());
    nb.erase(std::unique(nb.begin(), nb.end()), nb.end());
  }
}

ElementGeometry element_geometry(const Mesh& mesh, int element_id) {
  if (element_id < 0 || element_id >= mesh.n_elements())
    throw MeshError("invalid element id " + std::to_string(element_id + 1));
  const auto& el = mesh.elements[static_cast<std::size_t>(element_id)];
  const int dim = mesh.dim;
  const int npe = mesh.nodes_per_element();

  ElementGeometry geo;
  geo.volume = mesh.element_volume(element_id);
  if (!(geo.volume > 0.0))
    throw MeshError("degenerate element " + std::to_string(element_id + 1));
  geo.l_e = std::pow(geo.volume, 1.0 / dim);

  // Constant shape-function gradients of the linear simplex.
  Eigen::MatrixXd grads(npe, dim); // row k: grad N_k
  if (dim == 2) {
    Eigen::Matrix2d j;
    for (int c = 0; c < 2; ++c)
      j.col(c) = (mesh.nodes[static_cast<std::size_t>(el[static_cast<std::size_t>(c + 1)])] -
                  mesh.nodes[static_cast<std::size_t>(el[0])])
                     .head<2>();
    const Eigen::Matrix2d jinv = j.inverse();
    for (int k = 1; k < 3; ++k)
      grads.row(k) = jinv.row(k - 1);
    grads.row(0) = -grads.row(1) - grads.row(2);
  } else {
    Eigen::Matrix3d j;
    for (int c = 0; c < 3; ++c)
      j.col(c) = mesh.nodes[static_cast<std::size_t>(el[static_cast<std::size_t>(c + 1)])] -
                 mesh.nodes[static_cast<std::size_t>(el[0])];
    const Eigen::Matrix3d jinv = j.inverse();
    for (int k = 1; k < 4; ++k)
      grads.row(k) = jinv.row(k - 1);
    grads.row(0) = -grads.row(1) - grads.row(2) - grads.row(3);
  }

  geo.b.setZero(6, dim * npe);
  for (int k = 0; k < npe; ++k) {
    const int cx = dim * k, cy = dim * k + 1;
    const double dx = grads(k, 0), dy = grads(k, 1);
    geo.b(0, cx) = dx;
    geo.b(1, cy) = dy;
    geo.b(3, cx) = dy; // engineering gamma_12
    geo.b(3, cy) = dx;
    if (dim == 3) {
      const int cz = dim * k + 2;
      const double dz = grads(k, 2);
      geo.b(2, cz) = dz;
      geo.b(4, cx) = dz; // gamma_13
      geo.b(4, cz) = dx;
      geo.b(5, cy) = dz; // gamma_23
      geo.b(5, cz) = dy;
    }
  }
  return geo;
}

namespace {

struct Tokenizer {
  std::istream& in;
  std::string origin;
  int line = 0;
  std::istringstream current;

  explicit Tokenizer(std::istream& s, std::string o) : in(s), origin(std::move(o)) {}

  bool next(std::string& tok) {
    while (true) {
      if (current >> tok) {
        if (!tok.empty() && tok[0] == '#') { // comment: drop rest of line
          current.str("");
          current.clear();
          continue;
        }
        return true;
      }
      std::string l;
      if (!std::getline(in, l)) return false;
      ++line;
      current.str(l);
      current.clear();
    }
  }

  [[noreturn]] void fail(const std::string& msg) const {
    throw MeshError(origin + ":" + std::to_string(line) + ": " + msg);
  }

  int expect_int(const char* what) {
    std::string t;
    if (!next(t)) fail(std::string("unexpected end of file, expected ") + what);
    try {
      std::size_t pos = 0;
      const int v = std::stoi(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail("expected integer " + std::string(what) + ", got '" + t + "'");
    }
  }

  double expect_double(const char* what) {
    std::string t;
    if (!next(t)) fail(std::string("unexpected end of file, expected ") + what);
    try {
      std::size_t pos = 0;
      const double v = std::stod(t, &pos);
      if (pos != t.size()) throw std::invalid_argument(t);
      return v;
    } catch (const std::exception&) {
      fail("expected number " + std::string(what) + ", got '" + t + "'");
    }
  }
};

} // namespace

Mesh parse_mesh(std::istream& in, const std::string& origin) {
  Tokenizer tk(in, origin);
  std::string tok;
  if (!tk.next(tok) || tok != "pmesh") tk.fail("expected 'pmesh' header");
  if (tk.expect_int("format version") != 1) tk.fail("unsupported pmesh version");
  Mesh mesh;
  mesh.dim = tk.expect_int("dimension");
  if (mesh.dim != 2 && mesh.dim != 3) tk.fail("dimension must be 2 or 3");
  const int n_nodes = tk.expect_int("node count");
  const int n_elems = tk.expect_int("element count");
  const int n_sets = tk.expect_int("set count");
  mesh.nodes.assign(static_cast<std::size_t>(n_nodes), Eigen::Vector3d::Zero());
  mesh.elements.assign(static_cast<std::size_t>(n_elems), {-1, -1, -1, -1});
  std::vector<char> node_seen(static_cast<std::size_t>(n_nodes), 0);
  std::vector<char> elem_seen(static_cast<std::size_t>(n_elems), 0);
  int sets_read = 0;

  while (tk.next(tok)) {
    if (tok == "n") {
      const int id = tk.expect_int("node id");
      if (id < 1 || id > n_nodes) tk.fail("node id out of range");
      Eigen::Vector3d x = Eigen::Vector3d::Zero();
      x.x() = tk.expect_double("x");
      x.y() = tk.expect_double("y");
      if (mesh.dim == 3) x.z() = tk.expect_double("z");
      mesh.nodes[static_cast<std::size_t>(id - 1)] = x;
      node_seen[static_cast<std::size_t>(id - 1)] = 1;
    } else if (tok == "e") {
      const int id = tk.expect_int("element id");
      if (id < 1 || id > n_elems) tk.fail("element id out of range");
      std::array<int, 4> el = {-1, -1, -1, -1};
      for (int k = 0; k < mesh.dim + 1; ++k) {
        const int n = tk.expect_int("element node id");
        if (n < 1 || n > n_nodes)
          tk.fail("element " + std::to_string(id) + " references node " +
                  std::to_string(n) + " of a " + std::to_string(n_nodes) +
                  "-node mesh");
        el[static_cast<std::size_t>(k)] = n - 1;
      }
      mesh.elements[static_cast<std::size_t>(id - 1)] = el;
      elem_seen[static_cast<std::size_t>(id - 1)] = 1;
    } else if (tok == "s") {
      std::string name;
      if (!tk.next(name)) tk.fail("expected set name");
      const int count = tk.expect_int("set size");
      std::vector<int> ids;
      ids.reserve(static_cast<std::size_t>(count));
      for (int k = 0; k < count; ++k) {
        const int n = tk.expect_int("set node id");
        if (n < 1 || n > n_nodes) tk.fail("set '" + name + "' node id out of range");
        ids.push_back(n - 1);
      }
      mesh.node_sets[name] = std::move(ids);
      ++sets_read;
    } else {
      tk.fail("unknown record '" + tok + "'");
    }
  }
  for (int i = 0; i < n_nodes; ++i)
    if (!node_seen[static_cast<std::size_t>(i)])
      throw MeshError(origin + ": node " + std::to_string(i + 1) + " missing");
  for (int i = 0; i < n_elems; ++i)
    if (!elem_seen[static_cast<std::size_t>(i)])
      throw MeshError(origin + ": element " + std::to_string(i + 1) + " missing");
  if (sets_read != n_sets)
    throw MeshError(origin + ": declared " + std::to_string(n_sets) +
                    " sets, found " + std::to_string(sets_read));
  mesh.finalize();
  return mesh;
}

Mesh load_mesh(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file " + path);
  return parse_mesh(in, path);
}

void save_mesh(const Mesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot write mesh file " + path);
  char buf[64];
  out << "pmesh 1 " << mesh.dim << "\n";
  out << mesh.n_nodes() << " " << mesh.n_elements() << " "
      << mesh.node_sets.size() << "\n";
  for (int i = 0; i < mesh.n_nodes(); ++i) {
    out << "n " << (i + 1);
    for (int d = 0; d < mesh.dim; ++d) {
      std::snprintf(buf, sizeof buf, " %.17g", mesh.nodes[static_cast<std::size_t>(i)][d]);
      out << buf;
    }
    out << "\n";
  }
  for (int e = 0; e < mesh.n_elements(); ++e) {
    out << "e " << (e + 1);
    for (int k = 0; k < mesh.nodes_per_element(); ++k)
      out << " " << (mesh.elements[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)] + 1);
    out << "\n";
  }
  for (const auto& [name, ids] : mesh.node_sets) {
    out << "s " << name << " " << ids.size();
    for (int n : ids) out << " " << (n + 1);
    out << "\n";
  }
}

} // namespace poro
