#pragma once

// k-means machinery and the three decomposition strategies: position-based,
// offline stress-informed hierarchical, and online dynamic refinement.
// All operations are deterministic functions of (inputs, seed).

#include "poro/material.hpp"
#include "poro/mesh.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <utility>
#include <vector>

namespace poro {

struct FeatureTable {
  Eigen::MatrixXd features; // one row per entity
  std::vector<int> ids;     // entity ids

  int rows() const { return static_cast<int>(features.rows()); }
};

FeatureTable element_position_table(const Mesh& mesh);
FeatureTable element_position_table(const Mesh& mesh, const std::vector<int>& elements);

struct KmeansResult {
  std::vector<int> assignment; // row -> cluster
  Eigen::MatrixXd centroids;   // k x n_features
  double objective = 0.0;      // Eq-38 within-cluster sum of squares
  int iterations = 0;
};

// Lloyd iterations from k-means++ style seeding; empty clusters are reseeded
// at the farthest point; convergence when assignments stop changing.
KmeansResult kmeans(const FeatureTable& table, int k, std::uint64_t seed);

struct IntensityField {
  std::vector<double> raw;    // per-element stress intensity S^n (MPa)
  std::vector<double> scaled; // rescaled to [0,1]
};

// Six (three in 2D) orthogonal unit elastic loads imposed as linear
// displacement boundary data of magnitude 1e-3; per-element von Mises
// stresses condensed to the L2-norm intensity.
IntensityField stress_intensity(const Mesh& mesh, const MaterialParams& params);

// Contiguous quantile groups of near-equal size (+-1), indexed ascending by
// mean intensity; returns element -> group (0-based, I_g = group + 1).
std::vector<int> make_groups(const IntensityField& intensity, int n_g);

// Eqs 40-41 power shares with largest-remainder apportionment; counts sum to
// n_cl exactly and are each >= max(1, floor). `floors` are optional per-group
// minimum counts (Eq 42); dropped if they are infeasible in total.
std::vector<int> allocate_clusters(int n_cl, int n_g, double s_f,
                                   const std::vector<int>& floors = {});

// Calinski-Harabasz index of a k-clustering (1 < k < rows).
double ch_index(const FeatureTable& table, const std::vector<int>& assignment,
                int k);

// argmax of CH_k over k in [2, k_max].
int optimal_k(const FeatureTable& table, int k_max, std::uint64_t seed);

struct Decomposition {
  int n_clusters = 0;
  std::vector<int> elem_cluster;  // element -> cluster
  std::vector<int> cluster_group; // cluster -> group (0-based)
  Eigen::MatrixXd centroids;      // position centroids per cluster
  std::vector<char> unsplittable; // children of a dynamic split
  // genealogy: (parent, first child, second child); the first child keeps the
  // parent's label.
  std::vector<std::array<int, 3>> genealogy;

  std::vector<int> cluster_members(int c) const;
  std::vector<double> cluster_volumes(const Mesh& mesh) const;
};

// Reassigns disconnected components of every cluster to the adjacent cluster
// with the nearest centroid; iterates to a fixed point.
void connectivity_repair(const Mesh& mesh, std::vector<int>& elem_cluster,
                         int n_clusters);

Decomposition position_clustering(const Mesh& mesh, int n_cl, std::uint64_t seed);

struct StaticClusteringOptions {
  bool ch_floor = false; // apply the Eq-42 Calinski-Harabasz floor per group
  int ch_k_max = 8;
};

Decomposition static_hierarchical_clustering(const Mesh& mesh,
                                             const MaterialParams& params,
                                             int n_cl, int n_g, double s_f,
                                             std::uint64_t seed,
                                             const StaticClusteringOptions& opt = {});

// element clusters -> node clusters by majority vote over each node's
// adjacent elements, with connectivity repair on the node graph.
std::vector<int> node_clusters_from_elements(const Mesh& mesh,
                                             const Decomposition& decomp);

// Symmetric cluster adjacency (clusters sharing a mesh facet).
std::vector<std::vector<int>> cluster_adjacency(const Mesh& mesh,
                                                const Decomposition& decomp);

struct RefineParams {
  double anomaly_quantile = 0.95; // top 5% by cluster ebar_pl
  double discontinuity_factor = 0.5;
};

struct RefineResult {
  int n_requested = 0;
  int n_split = 0;
  std::vector<std::array<int, 3>> transfer; // (parent, child_a, child_b)
};

// Online dynamic refinement (Algorithm-1 online stage): budget-checked,
// gamma-driven number of new clusters, anomaly/discontinuity parent
// selection, position-based two-way splits with state inheritance.
RefineResult dynamic_refine(const Mesh& mesh, Decomposition& decomp,
                            const std::vector<double>& cluster_ebar,
                            double gamma, int n_cl_user, int n_cl_0,
                            std::uint64_t seed, const RefineParams& rp = {});

} // namespace poro
