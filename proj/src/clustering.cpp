#include "poro/clustering.hpp"

#include "poro/sparse.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace poro {

namespace {

// Portable uniform draw in [0,1): mt19937_64 output is standard-specified, so
// results are identical across platforms.
double rand_u01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

int rand_index(std::mt19937_64& rng, int n) {
  return std::min(n - 1, static_cast<int>(rand_u01(rng) * n));
}

double row_dist2(const Eigen::MatrixXd& a, int i, const Eigen::MatrixXd& b, int j) {
  return (a.row(i) - b.row(j)).squaredNorm();
}

} // namespace

FeatureTable element_position_table(const Mesh& mesh) {
  std::vector<int> all(static_cast<std::size_t>(mesh.n_elements()));
  std::iota(all.begin(), all.end(), 0);
  return element_position_table(mesh, all);
}

FeatureTable element_position_table(const Mesh& mesh,
                                    const std::vector<int>& elements) {
  FeatureTable t;
  t.ids = elements;
  t.features.resize(static_cast<int>(elements.size()), mesh.dim);
  for (std::size_t r = 0; r < elements.size(); ++r) {
    const Eigen::Vector3d c = mesh.element_centroid(elements[r]);
    for (int d = 0; d < mesh.dim; ++d) t.features(static_cast<int>(r), d) = c[d];
  }
  return t;
}

KmeansResult kmeans(const FeatureTable& table, int k, std::uint64_t seed) {
  const int n = table.rows();
  if (k < 1 || k > n) throw std::invalid_argument("kmeans: k out of range");
  std::mt19937_64 rng(seed);
  const Eigen::MatrixXd& x = table.features;

  KmeansResult res;
  res.centroids.resize(k, x.cols());

  // k-means++ seeding
  std::vector<double> d2(static_cast<std::size_t>(n),
                         std::numeric_limits<double>::infinity());
  int first = rand_index(rng, n);
  res.centroids.row(0) = x.row(first);
  for (int c = 1; c < k; ++c) {
    double total = 0.0;
    for (int i = 0; i < n; ++i) {
      d2[static_cast<std::size_t>(i)] = std::min(
          d2[static_cast<std::size_t>(i)], row_dist2(x, i, res.centroids, c - 1));
      total += d2[static_cast<std::size_t>(i)];
    }
    int pick = 0;
    if (total > 0.0) {
      const double target = rand_u01(rng) * total;
      double acc = 0.0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += d2[static_cast<std::size_t>(i)];
        if (acc >= target) {
          pick = i;
          break;
        }
      }
    } else {
      pick = rand_index(rng, n); // all points coincide with chosen centers
    }
    res.centroids.row(c) = x.row(pick);
  }

  res.assignment.assign(static_cast<std::size_t>(n), -1);
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  const int max_iters = 300;
  for (int it = 0; it < max_iters; ++it) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0;
      double best_d = row_dist2(x, i, res.centroids, 0);
      for (int c = 1; c < k; ++c) {
        const double d = row_dist2(x, i, res.centroids, c);
        if (d < best_d) {
          best_d = d;
          best = c;
        }
      }
      if (res.assignment[static_cast<std::size_t>(i)] != best) {
        res.assignment[static_cast<std::size_t>(i)] = best;
        changed = true;
      }
    }
    res.iterations = it + 1;
    if (!changed && it > 0) break;

    // recompute means; repair empty clusters by reseeding at the farthest point
    res.centroids.setZero();
    std::fill(counts.begin(), counts.end(), 0);
    for (int i = 0; i < n; ++i) {
      res.centroids.row(res.assignment[static_cast<std::size_t>(i)]) += x.row(i);
      counts[static_cast<std::size_t>(res.assignment[static_cast<std::size_t>(i)])]++;
    }
    for (int c = 0; c < k; ++c) {
      if (counts[static_cast<std::size_t>(c)] > 0) {
        res.centroids.row(c) /= counts[static_cast<std::size_t>(c)];
      } else {
        int far = 0;
        double far_d = -1.0;
        for (int i = 0; i < n; ++i) {
          const double d =
              row_dist2(x, i, res.centroids,
                        res.assignment[static_cast<std::size_t>(i)]);
          if (d > far_d) {
            far_d = d;
            far = i;
          }
        }
        res.centroids.row(c) = x.row(far);
        changed = true;
      }
    }
    if (!changed) break;
  }

  res.objective = 0.0;
  for (int i = 0; i < n; ++i)
    res.objective +=
        row_dist2(x, i, res.centroids, res.assignment[static_cast<std::size_t>(i)]);
  return res;
}

IntensityField stress_intensity(const Mesh& mesh, const MaterialParams& params) {
  params.validate();
  const FemModel model(mesh);
  const Mat6 c_el = elastic_tangent(params);
  std::vector<Mat6> tangents(static_cast<std::size_t>(mesh.n_elements()), c_el);
  SparseSystem sys = SparseSystem::assemble(model, tangents);

  const int dim = mesh.dim;
  const int n_modes = voigt_count(dim);
  const double mag = 1e-3;
  const auto& bnodes = mesh.boundary_nodes();
  std::vector<int> bdofs;
  for (int n : bnodes)
    for (int d = 0; d < dim; ++d) bdofs.push_back(dim * n + d);

  IntensityField field;
  field.raw.assign(static_cast<std::size_t>(mesh.n_elements()), 0.0);
  std::vector<std::vector<double>> mode_vm(
      static_cast<std::size_t>(n_modes),
      std::vector<double>(static_cast<std::size_t>(mesh.n_elements()), 0.0));

  bool first = true;
  for (int m = 0; m < n_modes; ++m) {
    Vec6 eps = Vec6::Zero();
    eps[voigt_component(dim, m)] = mag;
    // engineering shear: tensor eps_ij = gamma/2 off-diagonal
    Eigen::Matrix3d e = Eigen::Matrix3d::Zero();
    e(0, 0) = eps[0];
    e(1, 1) = eps[1];
    e(2, 2) = eps[2];
    e(0, 1) = e(1, 0) = 0.5 * eps[3];
    e(0, 2) = e(2, 0) = 0.5 * eps[4];
    e(1, 2) = e(2, 1) = 0.5 * eps[5];

    std::vector<double> vals;
    vals.reserve(bdofs.size());
    for (int n : bnodes) {
      const Eigen::Vector3d u = e * mesh.nodes[static_cast<std::size_t>(n)];
      for (int d = 0; d < dim; ++d) vals.push_back(u[d]);
    }
    if (first) {
      sys.set_dirichlet(bdofs, vals);
      first = false;
    } else {
      sys.set_prescribed_values(bdofs, vals); // factor reused across modes
    }
    const Eigen::VectorXd u =
        sys.solve_direct(Eigen::VectorXd::Zero(mesh.n_dofs()));

    for (int el = 0; el < mesh.n_elements(); ++el) {
      const auto& geo = model.geo[static_cast<std::size_t>(el)];
      Eigen::VectorXd ue(dim * mesh.nodes_per_element());
      for (int a = 0; a < mesh.nodes_per_element(); ++a)
        for (int d = 0; d < dim; ++d)
          ue[dim * a + d] =
              u[dim * mesh.elements[static_cast<std::size_t>(el)][static_cast<std::size_t>(a)] + d];
      const Vec6 strain = geo.b * ue;
      mode_vm[static_cast<std::size_t>(m)][static_cast<std::size_t>(el)] =
          von_mises(c_el * strain);
    }
  }

  for (int el = 0; el < mesh.n_elements(); ++el) {
    double s2 = 0.0;
    for (int m = 0; m < n_modes; ++m) {
      const double v = mode_vm[static_cast<std::size_t>(m)][static_cast<std::size_t>(el)];
      s2 += v * v;
    }
    field.raw[static_cast<std::size_t>(el)] = std::sqrt(s2);
  }

  const auto [mn_it, mx_it] = std::minmax_element(field.raw.begin(), field.raw.end());
  const double mn = *mn_it, mx = *mx_it;
  field.scaled.resize(field.raw.size());
  if (mx - mn > 1e-12 * std::max(1.0, mx)) {
    for (std::size_t i = 0; i < field.raw.size(); ++i)
      field.scaled[i] = (field.raw[i] - mn) / (mx - mn);
  } else {
    std::fill(field.scaled.begin(), field.scaled.end(), 0.0); // uniform field
  }
  return field;
}

std::vector<int> make_groups(const IntensityField& intensity, int n_g) {
  const int ne = static_cast<int>(intensity.raw.size());
  if (n_g < 1) throw std::invalid_argument("make_groups: N_g must be >= 1");
  if (n_g > ne) throw std::invalid_argument("make_groups: N_g exceeds element count");
  std::vector<int> order(static_cast<std::size_t>(ne));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    const double ia = intensity.raw[static_cast<std::size_t>(a)];
    const double ib = intensity.raw[static_cast<std::size_t>(b)];
    return ia < ib || (ia == ib && a < b);
  });
  std::vector<int> group(static_cast<std::size_t>(ne), 0);
  const int base = ne / n_g;
  const int rem = ne % n_g;
  int pos = 0;
  for (int g = 0; g < n_g; ++g) {
    const int size = base + (g < rem ? 1 : 0);
    for (int i = 0; i < size; ++i) group[static_cast<std::size_t>(order[static_cast<std::size_t>(pos++)])] = g;
  }
  return group;
}

std::vector<int> allocate_clusters(int n_cl, int n_g, double s_f,
                                   const std::vector<int>& floors) {
  if (n_cl < n_g) throw std::invalid_argument("allocate_clusters: N_cl < N_g");
  std::vector<double> theta(static_cast<std::size_t>(n_g));
  double sum = 0.0;
  for (int i = 0; i < n_g; ++i) {
    theta[static_cast<std::size_t>(i)] =
        std::pow(static_cast<double>(i + 1) / n_g, s_f);
    sum += theta[static_cast<std::size_t>(i)];
  }
  std::vector<int> counts(static_cast<std::size_t>(n_g));
  std::vector<std::pair<double, int>> rema(static_cast<std::size_t>(n_g));
  int assigned = 0;
  for (int i = 0; i < n_g; ++i) {
    const double raw = theta[static_cast<std::size_t>(i)] / sum * n_cl;
    counts[static_cast<std::size_t>(i)] = static_cast<int>(std::floor(raw));
    rema[static_cast<std::size_t>(i)] = {raw - std::floor(raw), i};
    assigned += counts[static_cast<std::size_t>(i)];
  }
  std::sort(rema.begin(), rema.end(), [](const auto& a, const auto& b) {
    return a.first > b.first || (a.first == b.first && a.second < b.second);
  });
  for (int k = 0; k < n_cl - assigned; ++k)
    counts[static_cast<std::size_t>(rema[static_cast<std::size_t>(k)].second)] += 1;

  // lower bounds: 1 per group, optionally the Calinski-Harabasz floor
  std::vector<int> lows(static_cast<std::size_t>(n_g), 1);
  if (!floors.empty()) {
    long total = 0;
    for (int i = 0; i < n_g; ++i) total += std::max(1, floors[static_cast<std::size_t>(i)]);
    if (total <= n_cl)
      for (int i = 0; i < n_g; ++i)
        lows[static_cast<std::size_t>(i)] = std::max(1, floors[static_cast<std::size_t>(i)]);
  }
  // re-balance: raise deficits, taking from the largest surplus
  for (int i = 0; i < n_g; ++i) {
    while (counts[static_cast<std::size_t>(i)] < lows[static_cast<std::size_t>(i)]) {
      int donor = -1, donor_slack = 0;
      for (int j = 0; j < n_g; ++j) {
        const int slack = counts[static_cast<std::size_t>(j)] - lows[static_cast<std::size_t>(j)];
        if (slack > donor_slack) {
          donor_slack = slack;
          donor = j;
        }
      }
      if (donor < 0) break;
      counts[static_cast<std::size_t>(donor)] -= 1;
      counts[static_cast<std::size_t>(i)] += 1;
    }
  }
  return counts;
}

double ch_index(const FeatureTable& table, const std::vector<int>& assignment,
                int k) {
  const int n = table.rows();
  if (k <= 1 || k >= n)
    throw std::invalid_argument("ch_index: need 1 < k < rows");
  const Eigen::MatrixXd& x = table.features;
  const Eigen::RowVectorXd grand = x.colwise().mean();
  Eigen::MatrixXd means = Eigen::MatrixXd::Zero(k, x.cols());
  std::vector<int> counts(static_cast<std::size_t>(k), 0);
  for (int i = 0; i < n; ++i) {
    means.row(assignment[static_cast<std::size_t>(i)]) += x.row(i);
    counts[static_cast<std::size_t>(assignment[static_cast<std::size_t>(i)])]++;
  }
  for (int c = 0; c < k; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) means.row(c) /= counts[static_cast<std::size_t>(c)];
  double vb = 0.0, vw = 0.0;
  for (int c = 0; c < k; ++c)
    vb += counts[static_cast<std::size_t>(c)] * (means.row(c) - grand).squaredNorm();
  for (int i = 0; i < n; ++i)
    vw += (x.row(i) - means.row(assignment[static_cast<std::size_t>(i)])).squaredNorm();
  if (vb == 0.0) return 0.0;
  if (vw == 0.0) return std::numeric_limits<double>::infinity();
  return (vb / vw) * static_cast<double>(n - k) / (k - 1);
}

int optimal_k(const FeatureTable& table, int k_max, std::uint64_t seed) {
  if (table.rows() < 3) throw std::invalid_argument("optimal_k: need >= 3 rows");
  if (k_max < 3) throw std::invalid_argument("optimal_k: k_max must be >= 3");
  const int hi = std::min(k_max, table.rows() - 1);
  int best_k = 2;
  double best_ch = -1.0;
  for (int k = 2; k <= hi; ++k) {
    const KmeansResult km = kmeans(table, k, seed);
    const double ch = ch_index(table, km.assignment, k);
    if (ch > best_ch) {
      best_ch = ch;
      best_k = k;
    }
  }
  return best_k;
}

std::vector<int> Decomposition::cluster_members(int c) const {
  std::vector<int> out;
  for (std::size_t e = 0; e < elem_cluster.size(); ++e)
    if (elem_cluster[e] == c) out.push_back(static_cast<int>(e));
  return out;
}

std::vector<double> Decomposition::cluster_volumes(const Mesh& mesh) const {
  std::vector<double> v(static_cast<std::size_t>(n_clusters), 0.0);
  for (int e = 0; e < mesh.n_elements(); ++e)
    v[static_cast<std::size_t>(elem_cluster[static_cast<std::size_t>(e)])] +=
        mesh.element_volume(e);
  return v;
}

void connectivity_repair(const Mesh& mesh, std::vector<int>& elem_cluster,
                         int n_clusters) {
  const int ne = mesh.n_elements();
  // position centroids per cluster, recomputed per pass
  for (int pass = 0; pass < 32; ++pass) {
    Eigen::MatrixXd cent = Eigen::MatrixXd::Zero(n_clusters, 3);
    std::vector<int> counts(static_cast<std::size_t>(n_clusters), 0);
    for (int e = 0; e < ne; ++e) {
      cent.row(elem_cluster[static_cast<std::size_t>(e)]) +=
          mesh.element_centroid(e).transpose();
      counts[static_cast<std::size_t>(elem_cluster[static_cast<std::size_t>(e)])]++;
    }
    for (int c = 0; c < n_clusters; ++c)
      if (counts[static_cast<std::size_t>(c)] > 0) cent.row(c) /= counts[static_cast<std::size_t>(c)];

    bool moved = false;
    std::vector<int> comp(static_cast<std::size_t>(ne), -1);
    for (int c = 0; c < n_clusters; ++c) {
      // connected components of cluster c over facet adjacency
      std::vector<std::vector<int>> comps;
      for (int e = 0; e < ne; ++e) {
        if (elem_cluster[static_cast<std::size_t>(e)] != c || comp[static_cast<std::size_t>(e)] >= 0)
          continue;
        comps.emplace_back();
        std::vector<int> stack = {e};
        comp[static_cast<std::size_t>(e)] = static_cast<int>(comps.size()) - 1;
        while (!stack.empty()) {
          const int cur = stack.back();
          stack.pop_back();
          comps.back().push_back(cur);
          for (int nb : mesh.element_neighbors(cur)) {
            if (elem_cluster[static_cast<std::size_t>(nb)] == c &&
                comp[static_cast<std::size_t>(nb)] < 0) {
              comp[static_cast<std::size_t>(nb)] = comp[static_cast<std::size_t>(cur)];
              stack.push_back(nb);
            }
          }
        }
      }
      if (comps.size() <= 1) continue;
      // keep the largest component (ties: lowest leading element id)
      std::size_t keep = 0;
      for (std::size_t i = 1; i < comps.size(); ++i)
        if (comps[i].size() > comps[keep].size()) keep = i;
      for (std::size_t i = 0; i < comps.size(); ++i) {
        if (i == keep) continue;
        // adjacent foreign clusters of this component
        Eigen::Vector3d cc = Eigen::Vector3d::Zero();
        for (int e : comps[i]) cc += mesh.element_centroid(e);
        cc /= static_cast<double>(comps[i].size());
        int best = -1;
        double best_d = std::numeric_limits<double>::infinity();
        for (int e : comps[i])
          for (int nb : mesh.element_neighbors(e)) {
            const int oc = elem_cluster[static_cast<std::size_t>(nb)];
            if (oc == c) continue;
            const double d = (cent.row(oc).transpose() - cc).squaredNorm();
            if (d < best_d || (d == best_d && oc < best)) {
              best_d = d;
              best = oc;
            }
          }
        if (best >= 0) {
          for (int e : comps[i]) elem_cluster[static_cast<std::size_t>(e)] = best;
          moved = true;
        }
      }
    }
    if (!moved) return;
  }
}

namespace {

Eigen::MatrixXd cluster_centroids(const Mesh& mesh,
                                  const std::vector<int>& elem_cluster,
                                  int n_clusters) {
  Eigen::MatrixXd cent = Eigen::MatrixXd::Zero(n_clusters, 3);
  std::vector<int> counts(static_cast<std::size_t>(n_clusters), 0);
  for (int e = 0; e < mesh.n_elements(); ++e) {
    cent.row(elem_cluster[static_cast<std::size_t>(e)]) += mesh.element_centroid(e).transpose();
    counts[static_cast<std::size_t>(elem_cluster[static_cast<std::size_t>(e)])]++;
  }
  for (int c = 0; c < n_clusters; ++c)
    if (counts[static_cast<std::size_t>(c)] > 0) cent.row(c) /= counts[static_cast<std::size_t>(c)];
  return cent;
}

} // namespace

Decomposition position_clustering(const Mesh& mesh, int n_cl, std::uint64_t seed) {
  const FeatureTable table = element_position_table(mesh);
  const KmeansResult km = kmeans(table, n_cl, seed);
  Decomposition d;
  d.n_clusters = n_cl;
  d.elem_cluster = km.assignment;
  connectivity_repair(mesh, d.elem_cluster, n_cl);
  d.cluster_group.assign(static_cast<std::size_t>(n_cl), 0);
  d.centroids = cluster_centroids(mesh, d.elem_cluster, n_cl);
  d.unsplittable.assign(static_cast<std::size_t>(n_cl), 0);
  return d;
}

Decomposition static_hierarchical_clustering(const Mesh& mesh,
                                             const MaterialParams& params,
                                             int n_cl, int n_g, double s_f,
                                             std::uint64_t seed,
                                             const StaticClusteringOptions& opt) {
  const IntensityField intensity = stress_intensity(mesh, params);
  const std::vector<int> group = make_groups(intensity, n_g);

  std::vector<std::vector<int>> members(static_cast<std::size_t>(n_g));
  for (int e = 0; e < mesh.n_elements(); ++e)
    members[static_cast<std::size_t>(group[static_cast<std::size_t>(e)])].push_back(e);

  std::vector<int> floors;
  if (opt.ch_floor) {
    floors.resize(static_cast<std::size_t>(n_g), 1);
    for (int g = 0; g < n_g; ++g) {
      const auto& mem = members[static_cast<std::size_t>(g)];
      if (static_cast<int>(mem.size()) >= 4) {
        const FeatureTable t = element_position_table(mesh, mem);
        floors[static_cast<std::size_t>(g)] =
            optimal_k(t, std::min(opt.ch_k_max, static_cast<int>(mem.size()) - 1),
                      seed + 77u * static_cast<std::uint64_t>(g));
      }
    }
  }
  std::vector<int> counts = allocate_clusters(n_cl, n_g, s_f, floors);
  // never ask a group for more clusters than it has elements
  for (int g = 0; g < n_g; ++g) {
    const int cap = static_cast<int>(members[static_cast<std::size_t>(g)].size());
    while (counts[static_cast<std::size_t>(g)] > cap) {
      counts[static_cast<std::size_t>(g)] -= 1;
      int recv = -1, recv_room = 0;
      for (int j = 0; j < n_g; ++j) {
        const int room = static_cast<int>(members[static_cast<std::size_t>(j)].size()) -
                         counts[static_cast<std::size_t>(j)];
        if (room > recv_room) {
          recv_room = room;
          recv = j;
        }
      }
      if (recv >= 0) counts[static_cast<std::size_t>(recv)] += 1;
    }
  }

  Decomposition d;
  d.n_clusters = n_cl;
  d.elem_cluster.assign(static_cast<std::size_t>(mesh.n_elements()), -1);
  d.cluster_group.assign(static_cast<std::size_t>(n_cl), 0);
  int next = 0;
  for (int g = 0; g < n_g; ++g) {
    const auto& mem = members[static_cast<std::size_t>(g)];
    const int kg = counts[static_cast<std::size_t>(g)];
    const FeatureTable t = element_position_table(mesh, mem);
    const KmeansResult km = kmeans(t, kg, seed + 1000u * static_cast<std::uint64_t>(g));
    for (std::size_t r = 0; r < mem.size(); ++r)
      d.elem_cluster[static_cast<std::size_t>(mem[r])] = next + km.assignment[r];
    for (int c = 0; c < kg; ++c) d.cluster_group[static_cast<std::size_t>(next + c)] = g;
    next += kg;
  }
  connectivity_repair(mesh, d.elem_cluster, n_cl);
  d.centroids = cluster_centroids(mesh, d.elem_cluster, n_cl);
  d.unsplittable.assign(static_cast<std::size_t>(n_cl), 0);
  return d;
}

std::vector<int> node_clusters_from_elements(const Mesh& mesh,
                                             const Decomposition& decomp) {
  std::vector<int> node_cluster(static_cast<std::size_t>(mesh.n_nodes()), 0);
  for (int n = 0; n < mesh.n_nodes(); ++n) {
    std::vector<std::pair<int, int>> votes; // (cluster, count)
    for (int e : mesh.node_elements(n)) {
      const int c = decomp.elem_cluster[static_cast<std::size_t>(e)];
      bool found = false;
      for (auto& v : votes)
        if (v.first == c) {
          v.second++;
          found = true;
        }
      if (!found) votes.emplace_back(c, 1);
    }
    int best = votes.front().first, best_n = votes.front().second;
    for (const auto& [c, cnt] : votes)
      if (cnt > best_n || (cnt == best_n && c < best)) {
        best = c;
        best_n = cnt;
      }
    node_cluster[static_cast<std::size_t>(n)] = best;
  }

  // Connectivity repair on the node graph (nodes adjacent when they share an
  // element): minority components join the most-voted adjacent cluster.
  std::vector<int> comp(static_cast<std::size_t>(mesh.n_nodes()), -1);
  for (int c = 0; c < decomp.n_clusters; ++c) {
    std::vector<std::vector<int>> comps;
    for (int n = 0; n < mesh.n_nodes(); ++n) {
      if (node_cluster[static_cast<std::size_t>(n)] != c || comp[static_cast<std::size_t>(n)] >= 0)
        continue;
      comps.emplace_back();
      std::vector<int> stack = {n};
      comp[static_cast<std::size_t>(n)] = static_cast<int>(comps.size()) - 1;
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        comps.back().push_back(cur);
        for (int e : mesh.node_elements(cur))
          for (int k = 0; k < mesh.nodes_per_element(); ++k) {
            const int nb = mesh.elements[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
            if (node_cluster[static_cast<std::size_t>(nb)] == c && comp[static_cast<std::size_t>(nb)] < 0) {
              comp[static_cast<std::size_t>(nb)] = comp[static_cast<std::size_t>(cur)];
              stack.push_back(nb);
            }
          }
      }
    }
    if (comps.size() <= 1) continue;
    std::size_t keep = 0;
    for (std::size_t i = 1; i < comps.size(); ++i)
      if (comps[i].size() > comps[keep].size()) keep = i;
    for (std::size_t i = 0; i < comps.size(); ++i) {
      if (i == keep) continue;
      std::vector<std::pair<int, int>> votes;
      for (int n : comps[i])
        for (int e : mesh.node_elements(n))
          for (int k = 0; k < mesh.nodes_per_element(); ++k) {
            const int nb = mesh.elements[static_cast<std::size_t>(e)][static_cast<std::size_t>(k)];
            const int oc = node_cluster[static_cast<std::size_t>(nb)];
            if (oc == c) continue;
            bool found = false;
            for (auto& v : votes)
              if (v.first == oc) {
                v.second++;
                found = true;
              }
            if (!found) votes.emplace_back(oc, 1);
          }
      if (votes.empty()) continue;
      int best = votes.front().first, best_n = votes.front().second;
      for (const auto& [oc, cnt] : votes)
        if (cnt > best_n || (cnt == best_n && oc < best)) {
          best = oc;
          best_n = cnt;
        }
      for (int n : comps[i]) node_cluster[static_cast<std::size_t>(n)] = best;
    }
  }
  return node_cluster;
}

std::vector<std::vector<int>> cluster_adjacency(const Mesh& mesh,
                                                const Decomposition& decomp) {
  std::vector<std::vector<int>> adj(static_cast<std::size_t>(decomp.n_clusters));
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const int c = decomp.elem_cluster[static_cast<std::size_t>(e)];
    for (int nb : mesh.element_neighbors(e)) {
      const int oc = decomp.elem_cluster[static_cast<std::size_t>(nb)];
      if (oc != c) adj[static_cast<std::size_t>(c)].push_back(oc);
    }
  }
  for (auto& a : adj) {
    std::sort(a.begin(), a.end());
    a.erase(std::unique(a.begin(), a.end()), a.end());
  }
  return adj;
}

RefineResult dynamic_refine(const Mesh& mesh, Decomposition& decomp,
                            const std::vector<double>& cluster_ebar,
                            double gamma, int n_cl_user, int n_cl_0,
                            std::uint64_t seed, const RefineParams& rp) {
  RefineResult res;
  if (decomp.n_clusters >= n_cl_user) return res; // budget exhausted: no-op
  if (!(gamma > 0.0)) return res;

  const int budget = n_cl_user - decomp.n_clusters;
  res.n_requested =
      std::min(budget, static_cast<int>(std::lround(n_cl_0 / gamma)));
  if (res.n_requested <= 0) return res;

  const int k = decomp.n_clusters;
  const auto adj = cluster_adjacency(mesh, decomp);

  double mn = std::numeric_limits<double>::infinity(), mx = -mn;
  for (double v : cluster_ebar) {
    mn = std::min(mn, v);
    mx = std::max(mx, v);
  }
  const double spread = mx - mn;
  if (!(spread > 0.0)) return res; // uniform field: no indicators fire

  // anomaly threshold: quantile of per-cluster ebar
  std::vector<double> sorted = cluster_ebar;
  std::sort(sorted.begin(), sorted.end());
  const std::size_t qi = static_cast<std::size_t>(
      std::min<double>(static_cast<double>(k) - 1.0,
                       std::floor(rp.anomaly_quantile * k)));
  const double anom_thresh = sorted[qi];

  std::vector<int> member_count(static_cast<std::size_t>(k), 0);
  for (int c : decomp.elem_cluster) member_count[static_cast<std::size_t>(c)]++;

  std::vector<int> candidates;
  for (int c = 0; c < k; ++c) {
    if (decomp.unsplittable[static_cast<std::size_t>(c)]) continue;
    if (member_count[static_cast<std::size_t>(c)] < 2) continue;
    bool pick = cluster_ebar[static_cast<std::size_t>(c)] >= anom_thresh &&
                cluster_ebar[static_cast<std::size_t>(c)] > mn;
    if (!pick && !adj[static_cast<std::size_t>(c)].empty()) {
      double mean_nb = 0.0;
      for (int nb : adj[static_cast<std::size_t>(c)])
        mean_nb += cluster_ebar[static_cast<std::size_t>(nb)];
      mean_nb /= static_cast<double>(adj[static_cast<std::size_t>(c)].size());
      pick = std::abs(cluster_ebar[static_cast<std::size_t>(c)] - mean_nb) >
             rp.discontinuity_factor * spread;
    }
    if (pick) candidates.push_back(c);
  }
  std::sort(candidates.begin(), candidates.end(), [&](int a, int b) {
    const double ea = cluster_ebar[static_cast<std::size_t>(a)];
    const double eb = cluster_ebar[static_cast<std::size_t>(b)];
    return ea > eb || (ea == eb && a < b);
  });
  if (static_cast<int>(candidates.size()) > res.n_requested)
    candidates.resize(static_cast<std::size_t>(res.n_requested));

  for (int parent : candidates) {
    const std::vector<int> mem = decomp.cluster_members(parent);
    const FeatureTable t = element_position_table(mesh, mem);
    const KmeansResult km =
        kmeans(t, 2, seed + 31u * static_cast<std::uint64_t>(parent));
    const int child_b = decomp.n_clusters;
    bool any_b = false, any_a = false;
    for (std::size_t r = 0; r < mem.size(); ++r) {
      if (km.assignment[r] == 1) {
        decomp.elem_cluster[static_cast<std::size_t>(mem[r])] = child_b;
        any_b = true;
      } else {
        any_a = true;
      }
    }
    if (!any_a || !any_b) continue; // degenerate split, skip
    decomp.n_clusters += 1;
    decomp.cluster_group.push_back(decomp.cluster_group[static_cast<std::size_t>(parent)]);
    decomp.unsplittable[static_cast<std::size_t>(parent)] = 1;
    decomp.unsplittable.push_back(1);
    decomp.genealogy.push_back({parent, parent, child_b});
    res.transfer.push_back({parent, parent, child_b});
    res.n_split += 1;

    // keep both children topologically connected
    std::vector<int>& ec = decomp.elem_cluster;
    for (int child : {parent, child_b}) {
      std::vector<int> cm = decomp.cluster_members(child);
      // component split within the child: move minor components to the sibling
      std::vector<int> comp_id(cm.size(), -1);
      std::vector<std::vector<int>> comps;
      for (std::size_t s = 0; s < cm.size(); ++s) {
        if (comp_id[s] >= 0) continue;
        comps.emplace_back();
        std::vector<int> stack = {cm[s]};
        comp_id[s] = static_cast<int>(comps.size()) - 1;
        while (!stack.empty()) {
          const int cur = stack.back();
          stack.pop_back();
          comps.back().push_back(cur);
          for (int nb : mesh.element_neighbors(cur)) {
            if (ec[static_cast<std::size_t>(nb)] != child) continue;
            const auto it = std::find(cm.begin(), cm.end(), nb);
            const std::size_t si = static_cast<std::size_t>(it - cm.begin());
            if (comp_id[si] < 0) {
              comp_id[si] = comp_id[static_cast<std::size_t>(
                  std::find(cm.begin(), cm.end(), cur) - cm.begin())];
              stack.push_back(nb);
            }
          }
        }
      }
      if (comps.size() <= 1) continue;
      std::size_t keep = 0;
      for (std::size_t i = 1; i < comps.size(); ++i)
        if (comps[i].size() > comps[keep].size()) keep = i;
      const int sibling = child == parent ? child_b : parent;
      for (std::size_t i = 0; i < comps.size(); ++i)
        if (i != keep)
          for (int e : comps[i]) ec[static_cast<std::size_t>(e)] = sibling;
    }
  }
  decomp.centroids = cluster_centroids(mesh, decomp.elem_cluster, decomp.n_clusters);
  return res;
}

} // namespace poro
