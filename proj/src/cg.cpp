#include "poro/cg.hpp"

#include "poro/kernels.hpp"

#include <cmath>

namespace poro {

DeflationSpace build_deflation_space(const SparseSystem& system,
                                     const std::vector<int>& node_cluster,
                                     int n_clusters, int dim) {
  const auto& free_dofs = system.free_dofs();
  const int nf = static_cast<int>(free_dofs.size());
  DeflationSpace ds;
  ds.n_clusters = n_clusters;
  ds.dim = dim;
  Eigen::MatrixXd w = Eigen::MatrixXd::Zero(nf, n_clusters * dim);
  for (int i = 0; i < nf; ++i) {
    const int dof = free_dofs[static_cast<std::size_t>(i)];
    const int node = dof / dim;
    const int d = dof % dim;
    const int c = node_cluster[static_cast<std::size_t>(node)];
    w(i, c * dim + d) = 1.0;
  }
  // Drop empty columns (clusters fully constrained in a direction) and
  // normalize; supports are disjoint so the columns are already orthogonal.
  std::vector<int> keep;
  for (int c = 0; c < w.cols(); ++c) {
    const double nrm = w.col(c).norm();
    if (nrm > 0.0) {
      w.col(c) /= nrm;
      keep.push_back(c);
    }
  }
  ds.w.resize(nf, static_cast<int>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) ds.w.col(static_cast<int>(k)) = w.col(keep[k]);
  return ds;
}

namespace {

CgResult run_cg(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                const Eigen::MatrixXd* w, double tol, int max_iterations) {
  const int n = static_cast<int>(b.size());
  CgResult res;
  res.x = Eigen::VectorXd::Zero(n);
  const double bnorm = b.norm();
  if (bnorm == 0.0) {
    res.converged = true;
    return res;
  }

  // Deflated CG in the projector form: CG runs on P A with
  // P = I - A W (W^T A W)^-1 W^T, which keeps the residual deflated every
  // iteration; the coarse component is solved exactly up front.
  const bool deflated = w != nullptr && w->cols() > 0;
  Eigen::MatrixXd aw;
  Eigen::LLT<Eigen::MatrixXd> coarse;
  Eigen::VectorXd x_base = Eigen::VectorXd::Zero(n);
  auto project = [&](Eigen::VectorXd& v) {
    if (deflated) v -= aw * coarse.solve(w->transpose() * v);
  };
  if (deflated) {
    aw = a * (*w);
    coarse.compute(w->transpose() * aw);
    if (coarse.info() != Eigen::Success)
      throw SolverError("deflation coarse matrix not SPD");
    x_base = (*w) * coarse.solve(w->transpose() * b);
  }

  Eigen::VectorXd xhat = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd r = b - a * x_base;
  project(r);
  Eigen::VectorXd p = r;
  Eigen::VectorXd ap(n);

  auto finalize = [&]() {
    if (deflated) {
      // x = x_base + P^T xhat
      res.x = x_base + xhat - (*w) * coarse.solve(aw.transpose() * xhat);
    } else {
      res.x = xhat;
    }
  };

  double rr = kern::nrm2sq(r.data(), static_cast<std::size_t>(n));
  res.residual = std::sqrt(rr) / bnorm;
  if (res.residual <= tol) {
    res.converged = true;
    finalize();
    return res;
  }

  for (int it = 0; it < max_iterations; ++it) {
    ap.noalias() = a * p;
    project(ap);
    const double pap = kern::dot(p.data(), ap.data(), static_cast<std::size_t>(n));
    if (pap <= 0.0) {
      res.breakdown_iteration = it;
      res.iterations = it;
      finalize();
      return res;
    }
    const double alpha = rr / pap;
    kern::axpy(alpha, p.data(), xhat.data(), static_cast<std::size_t>(n));
    kern::axpy(-alpha, ap.data(), r.data(), static_cast<std::size_t>(n));
    const double rr_new = kern::nrm2sq(r.data(), static_cast<std::size_t>(n));
    res.iterations = it + 1;
    res.residual = std::sqrt(rr_new) / bnorm;
    if (res.residual <= tol) {
      res.converged = true;
      finalize();
      return res;
    }
    const double beta = rr_new / rr;
    rr = rr_new;
    kern::xpby(r.data(), beta, p.data(), static_cast<std::size_t>(n));
  }
  finalize();
  return res;
}

} // namespace

CgResult cg_solve(const Eigen::SparseMatrix<double>& a, const Eigen::VectorXd& b,
                  double tol, int max_iterations) {
  return run_cg(a, b, nullptr, tol, max_iterations);
}

CgResult deflated_cg(const Eigen::SparseMatrix<double>& a,
                     const Eigen::VectorXd& b, const Eigen::MatrixXd& w,
                     double tol, int max_iterations) {
  return run_cg(a, b, &w, tol, max_iterations);
}

CgResult deflated_cg_solve(const SparseSystem& system, const Eigen::VectorXd& rhs,
                           const DeflationSpace& deflation, double tol) {
  const auto& a = system.free_matrix();
  const Eigen::VectorXd b = system.reduce_rhs(rhs);
  const int maxit = 4 * static_cast<int>(b.size()) + 100;
  CgResult res = deflation.w.cols() > 0 ? deflated_cg(a, b, deflation.w, tol, maxit)
                                        : cg_solve(a, b, tol, maxit);
  if (res.breakdown_iteration >= 0)
    throw SolverError("CG breakdown (negative curvature) at iteration " +
                      std::to_string(res.breakdown_iteration));
  res.x = system.expand_free(res.x);
  system.counters().solves += 1;
  return res;
}

} // namespace poro
