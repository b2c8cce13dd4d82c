#pragma once

// Sparse symmetric assembly, cached Cholesky factorization, and Dirichlet
// handling by row/column elimination with reaction recovery.

#include "poro/mesh.hpp"
#include "poro/voigt.hpp"

#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include <memory>
#include <stdexcept>
#include <vector>

namespace poro {

struct SolverError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Mesh plus cached per-element geometry; the substrate shared by the
// assembly, the drivers and the ROM.
struct FemModel {
  const Mesh* mesh = nullptr;
  std::vector<ElementGeometry> geo;

  FemModel() = default;
  explicit FemModel(const Mesh& m) : mesh(&m) {
    geo.reserve(static_cast<std::size_t>(m.n_elements()));
    for (int e = 0; e < m.n_elements(); ++e) geo.push_back(element_geometry(m, e));
  }
  int n_dofs() const { return mesh->n_dofs(); }
  int dim() const { return mesh->dim; }
};

struct SolveCounters {
  long assemblies = 0;           // full scatter passes
  long incremental_updates = 0;  // update_incremental calls
  long factorizations = 0;
  long solves = 0;
};

class SparseSystem {
public:
  SparseSystem() = default;

  // K = sum_e B^T C_e B |Omega_e|; rejects asymmetric tangents (> 1e-12 rel).
  static SparseSystem assemble(const FemModel& model,
                               const std::vector<Mat6>& tangents);

  // Full re-scatter with new tangents; pattern unchanged.
  void reassemble(const std::vector<Mat6>& tangents);

  // K += sum over changed elements of B^T (C_new - C_old) B |Omega_e|.
  // `tangents` holds the new per-element tangents for the changed ids.
  void update_incremental(const std::vector<int>& changed_elements,
                          const std::vector<Mat6>& tangents);

  // Dirichlet data; invalidates the factor when the constrained set changes.
  void set_dirichlet(const std::vector<int>& dofs,
                     const std::vector<double>& values);
  void set_prescribed_values(const std::vector<int>& dofs,
                             const std::vector<double>& values);

  // Direct solve with the cached Cholesky factor (refactors only when the
  // matrix or constraint pattern changed). Prescribed DOFs carry their
  // imposed values. Throws SolverError on a non-SPD free-free block.
  Eigen::VectorXd solve_direct(const Eigen::VectorXd& rhs) const;

  Eigen::VectorXd matvec(const Eigen::VectorXd& u) const { return k_ * u; }
  const Eigen::SparseMatrix<double>& matrix() const { return k_; }
  const std::vector<Mat6>& tangents() const { return tangents_; }

  // Free-DOF reduction used by the CG solvers.
  const Eigen::SparseMatrix<double>& free_matrix() const;
  Eigen::VectorXd reduce_rhs(const Eigen::VectorXd& rhs) const;
  Eigen::VectorXd expand_free(const Eigen::VectorXd& x_free) const;
  Eigen::VectorXd restrict_free(const Eigen::VectorXd& full) const;
  const std::vector<int>& free_dofs() const { return free_dofs_; }
  bool is_constrained(int dof) const { return constrained_[static_cast<std::size_t>(dof)] != 0; }
  int n_dofs() const { return static_cast<int>(constrained_.size()); }

  SolveCounters& counters() const { return counters_; }
  const FemModel& model() const { return *model_; }

private:
  void ensure_factor() const;
  void rebuild_free() const;
  void init_free_sets();

  const FemModel* model_ = nullptr;
  Eigen::SparseMatrix<double> k_;
  std::vector<Mat6> tangents_;
  std::vector<char> constrained_;
  std::vector<double> prescribed_;
  std::vector<int> free_dofs_;
  std::vector<int> free_index_; // dof -> position in free_dofs_, or -1

  mutable Eigen::SparseMatrix<double> k_ff_;
  mutable std::unique_ptr<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>> llt_;
  mutable bool factor_valid_ = false;
  mutable bool free_valid_ = false;
  mutable SolveCounters counters_;
};

} // namespace poro
