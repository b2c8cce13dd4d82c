#pragma once

// Plain and deflated conjugate-gradient solvers. Deflation vectors are
// per-cluster translation indicators restricted to free DOFs; projecting them
// out removes the near-zero coarse modes and lowers the condition number.

#include "poro/sparse.hpp"

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <vector>

namespace poro {

struct DeflationSpace {
  // Orthonormalized cluster/direction indicator vectors over the free DOFs,
  // one column each; empty matrix means plain CG.
  Eigen::MatrixXd w;
  int n_clusters = 0;
  int dim = 0;
};

// node_cluster: cluster id per mesh node. Columns with no free support are
// dropped; disjoint supports make normalization a full orthonormalization.
DeflationSpace build_deflation_space(const SparseSystem& system,
                                     const std::vector<int>& node_cluster,
                                     int n_clusters, int dim);

struct CgResult {
  Eigen::VectorXd x;
  int iterations = 0;
  bool converged = false;
  int breakdown_iteration = -1; // >= 0 when negative curvature was detected
  double residual = 0.0;        // final relative residual
};

CgResult cg_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                  double tol, int max_iterations);

CgResult deflated_cg(const Eigen::SparseMatrix<double>& a,
                     const Eigen::VectorXd& b, const Eigen::MatrixXd& w,
                     double tol, int max_iterations);

// fem-core surface operation: solves the constrained system and returns the
// full nodal vector (prescribed DOFs carry their imposed values).
CgResult deflated_cg_solve(const SparseSystem& system, const Eigen::VectorXd& rhs,
                           const DeflationSpace& deflation, double tol);

} // namespace poro
