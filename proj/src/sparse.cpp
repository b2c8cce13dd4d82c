#include "poro/sparse.hpp"

#include <algorithm>
#include <cmath>

namespace poro {

namespace {

void check_symmetric(const Mat6& c, int element_id) {
  const double scale = std::max(1.0, c.cwiseAbs().maxCoeff());
  for (int i = 0; i < 6; ++i)
    for (int j = i + 1; j < 6; ++j)
      if (std::abs(c(i, j) - c(j, i)) > 1e-12 * scale)
        throw SolverError("asymmetric tangent for element " +
                          std::to_string(element_id + 1));
}

} // namespace

SparseSystem SparseSystem::assemble(const FemModel& model,
                                    const std::vector<Mat6>& tangents) {
  if (static_cast<int>(tangents.size()) != model.mesh->n_elements())
    throw SolverError("tangent count does not match element count");
  SparseSystem sys;
  sys.model_ = &model;
  sys.tangents_ = tangents;
  const int n = model.n_dofs();
  sys.constrained_.assign(static_cast<std::size_t>(n), 0);
  sys.prescribed_.assign(static_cast<std::size_t>(n), 0.0);

  const Mesh& mesh = *model.mesh;
  const int dim = mesh.dim;
  const int npe = mesh.nodes_per_element();
  std::vector<Eigen::Triplet<double>> trips;
  trips.reserve(static_cast<std::size_t>(mesh.n_elements()) *
                static_cast<std::size_t>(npe * dim) *
                static_cast<std::size_t>(npe * dim));
  for (int e = 0; e < mesh.n_elements(); ++e) {
    check_symmetric(tangents[static_cast<std::size_t>(e)], e);
    const auto& geo = model.geo[static_cast<std::size_t>(e)];
    const Eigen::MatrixXd ke = geo.b.transpose() *
                               tangents[static_cast<std::size_t>(e)] * geo.b *
                               geo.volume;
    const auto& el = mesh.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int i = 0; i < dim; ++i)
        for (int b = 0; b < npe; ++b)
          for (int j = 0; j < dim; ++j)
            trips.emplace_back(dim * el[static_cast<std::size_t>(a)] + i,
                               dim * el[static_cast<std::size_t>(b)] + j,
                               ke(dim * a + i, dim * b + j));
  }
  sys.k_.resize(n, n);
  sys.k_.setFromTriplets(trips.begin(), trips.end());
  sys.k_.makeCompressed();
  sys.counters_.assemblies += 1;
  sys.init_free_sets();
  return sys;
}

void SparseSystem::reassemble(const std::vector<Mat6>& tangents) {
  if (tangents.size() != tangents_.size())
    throw SolverError("tangent count does not match element count");
  const Mesh& mesh = *model_->mesh;
  const int dim = mesh.dim;
  const int npe = mesh.nodes_per_element();
  for (double* v = k_.valuePtr(); v != k_.valuePtr() + k_.nonZeros(); ++v) *v = 0.0;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    check_symmetric(tangents[static_cast<std::size_t>(e)], e);
    const auto& geo = model_->geo[static_cast<std::size_t>(e)];
    const Eigen::MatrixXd ke = geo.b.transpose() *
                               tangents[static_cast<std::size_t>(e)] * geo.b *
                               geo.volume;
    const auto& el = mesh.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int i = 0; i < dim; ++i)
        for (int b = 0; b < npe; ++b)
          for (int j = 0; j < dim; ++j)
            k_.coeffRef(dim * el[static_cast<std::size_t>(a)] + i,
                        dim * el[static_cast<std::size_t>(b)] + j) +=
                ke(dim * a + i, dim * b + j);
  }
  tangents_ = tangents;
  counters_.assemblies += 1;
  factor_valid_ = false;
  free_valid_ = false;
}

void SparseSystem::update_incremental(const std::vector<int>& changed_elements,
                                      const std::vector<Mat6>& tangents) {
  const Mesh& mesh = *model_->mesh;
  const int dim = mesh.dim;
  const int npe = mesh.nodes_per_element();
  for (std::size_t c = 0; c < changed_elements.size(); ++c) {
    const int e = changed_elements[c];
    if (e < 0 || e >= mesh.n_elements())
      throw SolverError("incremental update: element " + std::to_string(e + 1) +
                        " outside the mesh");
    const Mat6& c_new = tangents[c];
    check_symmetric(c_new, e);
    const Mat6 dc = c_new - tangents_[static_cast<std::size_t>(e)];
    const auto& geo = model_->geo[static_cast<std::size_t>(e)];
    const Eigen::MatrixXd dke = geo.b.transpose() * dc * geo.b * geo.volume;
    const auto& el = mesh.elements[static_cast<std::size_t>(e)];
    for (int a = 0; a < npe; ++a)
      for (int i = 0; i < dim; ++i)
        for (int b = 0; b < npe; ++b)
          for (int j = 0; j < dim; ++j)
            k_.coeffRef(dim * el[static_cast<std::size_t>(a)] + i,
                        dim * el[static_cast<std::size_t>(b)] + j) +=
                dke(dim * a + i, dim * b + j);
    tangents_[static_cast<std::size_t>(e)] = c_new;
  }
  if (!changed_elements.empty()) {
    factor_valid_ = false;
    free_valid_ = false;
  }
  counters_.incremental_updates += 1;
}

void SparseSystem::set_dirichlet(const std::vector<int>& dofs,
                                 const std::vector<double>& values) {
  std::fill(constrained_.begin(), constrained_.end(), 0);
  std::fill(prescribed_.begin(), prescribed_.end(), 0.0);
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    constrained_[static_cast<std::size_t>(dofs[i])] = 1;
    prescribed_[static_cast<std::size_t>(dofs[i])] = values[i];
  }
  init_free_sets();
}

void SparseSystem::init_free_sets() {
  const int n = n_dofs();
  free_dofs_.clear();
  free_index_.assign(static_cast<std::size_t>(n), -1);
  for (int d = 0; d < n; ++d)
    if (!constrained_[static_cast<std::size_t>(d)]) {
      free_index_[static_cast<std::size_t>(d)] = static_cast<int>(free_dofs_.size());
      free_dofs_.push_back(d);
    }
  factor_valid_ = false;
  free_valid_ = false;
}

void SparseSystem::set_prescribed_values(const std::vector<int>& dofs,
                                         const std::vector<double>& values) {
  // Values only: the constrained set (and so the factor) is untouched.
  for (std::size_t i = 0; i < dofs.size(); ++i) {
    if (!constrained_[static_cast<std::size_t>(dofs[i])])
      throw SolverError("set_prescribed_values on an unconstrained DOF");
    prescribed_[static_cast<std::size_t>(dofs[i])] = values[i];
  }
}

void SparseSystem::rebuild_free() const {
  // free-free block extraction
  std::vector<Eigen::Triplet<double>> trips;
  for (int col = 0; col < k_.outerSize(); ++col) {
    const int jc = free_index_[static_cast<std::size_t>(col)];
    if (jc < 0) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(k_, col); it; ++it) {
      const int ir = free_index_[static_cast<std::size_t>(it.row())];
      if (ir >= 0) trips.emplace_back(ir, jc, it.value());
    }
  }
  k_ff_.resize(static_cast<int>(free_dofs_.size()),
               static_cast<int>(free_dofs_.size()));
  k_ff_.setFromTriplets(trips.begin(), trips.end());
  k_ff_.makeCompressed();
  free_valid_ = true;
}

const Eigen::SparseMatrix<double>& SparseSystem::free_matrix() const {
  if (!free_valid_) rebuild_free();
  return k_ff_;
}

void SparseSystem::ensure_factor() const {
  if (factor_valid_) return;
  llt_ = std::make_unique<Eigen::SimplicialLLT<Eigen::SparseMatrix<double>>>();
  llt_->compute(free_matrix());
  if (llt_->info() != Eigen::Success)
    throw SolverError("Cholesky factorization failed: free-free block not SPD");
  factor_valid_ = true;
  counters_.factorizations += 1;
}

Eigen::VectorXd SparseSystem::reduce_rhs(const Eigen::VectorXd& rhs) const {
  const int n = n_dofs();
  Eigen::VectorXd uc = Eigen::VectorXd::Zero(n);
  for (int d = 0; d < n; ++d)
    if (constrained_[static_cast<std::size_t>(d)]) uc[d] = prescribed_[static_cast<std::size_t>(d)];
  const Eigen::VectorXd kuc = k_ * uc;
  Eigen::VectorXd out(static_cast<int>(free_dofs_.size()));
  for (std::size_t i = 0; i < free_dofs_.size(); ++i)
    out[static_cast<int>(i)] = rhs[free_dofs_[i]] - kuc[free_dofs_[i]];
  return out;
}

Eigen::VectorXd SparseSystem::expand_free(const Eigen::VectorXd& x_free) const {
  Eigen::VectorXd u(n_dofs());
  for (int d = 0; d < n_dofs(); ++d)
    u[d] = constrained_[static_cast<std::size_t>(d)] ? prescribed_[static_cast<std::size_t>(d)] : 0.0;
  for (std::size_t i = 0; i < free_dofs_.size(); ++i)
    u[free_dofs_[i]] = x_free[static_cast<int>(i)];
  return u;
}

Eigen::VectorXd SparseSystem::restrict_free(const Eigen::VectorXd& full) const {
  Eigen::VectorXd out(static_cast<int>(free_dofs_.size()));
  for (std::size_t i = 0; i < free_dofs_.size(); ++i)
    out[static_cast<int>(i)] = full[free_dofs_[i]];
  return out;
}

Eigen::VectorXd SparseSystem::solve_direct(const Eigen::VectorXd& rhs) const {
  ensure_factor();
  const Eigen::VectorXd b = reduce_rhs(rhs);
  const Eigen::VectorXd x = llt_->solve(b);
  counters_.solves += 1;
  return expand_free(x);
}

} // namespace poro
