#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poro/cg.hpp"
#include "poro/material.hpp"
#include "poro/meshgen.hpp"
#include "poro/sparse.hpp"

#include <random>

using namespace poro;

namespace {

// independent dense CST assembly for the one-element oracle
Eigen::MatrixXd dense_cst_stiffness(const Mesh& mesh, const Mat6& c6) {
  const auto& el = mesh.elements[0];
  const double x0 = mesh.nodes[static_cast<std::size_t>(el[0])].x(),
               y0 = mesh.nodes[static_cast<std::size_t>(el[0])].y();
  const double x1 = mesh.nodes[static_cast<std::size_t>(el[1])].x(),
               y1 = mesh.nodes[static_cast<std::size_t>(el[1])].y();
  const double x2 = mesh.nodes[static_cast<std::size_t>(el[2])].x(),
               y2 = mesh.nodes[static_cast<std::size_t>(el[2])].y();
  const double area =
      0.5 * ((x1 - x0) * (y2 - y0) - (x2 - x0) * (y1 - y0));
  const double inv2a = 1.0 / (2.0 * area);
  const double b0 = (y1 - y2) * inv2a, c0 = (x2 - x1) * inv2a;
  const double b1 = (y2 - y0) * inv2a, c1 = (x0 - x2) * inv2a;
  const double b2 = (y0 - y1) * inv2a, c2 = (x1 - x0) * inv2a;
  Eigen::MatrixXd b(3, 6);
  b << b0, 0, b1, 0, b2, 0, 0, c0, 0, c1, 0, c2, c0, b0, c1, b1, c2, b2;
  Eigen::Matrix3d c;
  const int map[3] = {0, 1, 3}; // plane-strain rows of the 6x6 tensor
  for (int i = 0; i < 3; ++i)
    for (int j = 0; j < 3; ++j) c(i, j) = c6(map[i], map[j]);
  return b.transpose() * c * b * area;
}

SparseSystem elastic_system(const FemModel& model, const MaterialParams& p) {
  return SparseSystem::assemble(
      model, std::vector<Mat6>(static_cast<std::size_t>(model.mesh->n_elements()),
                               elastic_tangent(p)));
}

} // namespace

TEST_CASE("one-element assembly equals the dense hand oracle") {
  const Mesh mesh = make_unit_triangle();
  const FemModel model(mesh);
  MaterialParams p;
  const Mat6 c6 = elastic_tangent(p);
  SparseSystem sys = SparseSystem::assemble(model, {c6});
  const Eigen::MatrixXd k = Eigen::MatrixXd(sys.matrix());
  const Eigen::MatrixXd oracle = dense_cst_stiffness(mesh, c6);
  CHECK((k - oracle).norm() < 1e-12 * oracle.norm());
}

TEST_CASE("disjoint elements assemble block-diagonally; zero tangent zero K") {
  Mesh mesh;
  mesh.dim = 2;
  mesh.nodes = {{0, 0, 0}, {1, 0, 0}, {0, 1, 0},
                {5, 5, 0}, {6, 5, 0}, {5, 6, 0}};
  mesh.elements = {{0, 1, 2, -1}, {3, 4, 5, -1}};
  mesh.finalize();
  const FemModel model(mesh);
  MaterialParams p;
  SparseSystem sys = elastic_system(model, p);
  const Eigen::MatrixXd k = Eigen::MatrixXd(sys.matrix());
  CHECK(k.block(0, 6, 6, 6).norm() == 0.0);
  CHECK(k.block(6, 0, 6, 6).norm() == 0.0);

  SparseSystem zero = SparseSystem::assemble(
      model, std::vector<Mat6>(2, Mat6::Zero()));
  CHECK(Eigen::MatrixXd(zero.matrix()).norm() == 0.0);
}

TEST_CASE("asymmetric tangents are rejected") {
  const Mesh mesh = make_unit_triangle();
  const FemModel model(mesh);
  Mat6 bad = elastic_tangent(MaterialParams{});
  bad(0, 1) += 1e-3 * bad(0, 0);
  CHECK_THROWS_AS(SparseSystem::assemble(model, {bad}), SolverError);
}

TEST_CASE("incremental update matches full re-assembly") {
  const Mesh mesh = make_rect_mesh(2.0, 1.0, 5, 3);
  const FemModel model(mesh);
  MaterialParams p;
  const Mat6 c_el = elastic_tangent(p);
  std::vector<Mat6> tangents(static_cast<std::size_t>(mesh.n_elements()), c_el);
  SparseSystem sys = SparseSystem::assemble(model, tangents);

  SUBCASE("empty changed set leaves K untouched") {
    const Eigen::MatrixXd before = Eigen::MatrixXd(sys.matrix());
    sys.update_incremental({}, {});
    CHECK((Eigen::MatrixXd(sys.matrix()) - before).norm() == 0.0);
  }

  SUBCASE("damage scaling of a few elements equals full re-assembly") {
    std::vector<int> changed = {2, 7, 11};
    std::vector<Mat6> fresh;
    for (int e : changed) {
      tangents[static_cast<std::size_t>(e)] = 0.35 * c_el;
      fresh.push_back(0.35 * c_el);
    }
    sys.update_incremental(changed, fresh);
    SparseSystem ref = SparseSystem::assemble(model, tangents);
    const Eigen::MatrixXd a = Eigen::MatrixXd(sys.matrix());
    const Eigen::MatrixXd b = Eigen::MatrixXd(ref.matrix());
    CHECK((a - b).norm() < 1e-13 * b.norm());
  }

  SUBCASE("any partition of changed elements composes to one re-assembly") {
    std::mt19937_64 rng(5);
    std::vector<Mat6> target(tangents);
    for (int e = 0; e < mesh.n_elements(); ++e)
      target[static_cast<std::size_t>(e)] =
          (0.2 + 0.8 * (static_cast<double>(rng() >> 11) * 0x1.0p-53)) * c_el;
    // three chunks
    std::vector<int> all(static_cast<std::size_t>(mesh.n_elements()));
    std::iota(all.begin(), all.end(), 0);
    for (int chunk = 0; chunk < 3; ++chunk) {
      std::vector<int> ids;
      std::vector<Mat6> vals;
      for (int e = chunk; e < mesh.n_elements(); e += 3) {
        ids.push_back(e);
        vals.push_back(target[static_cast<std::size_t>(e)]);
      }
      sys.update_incremental(ids, vals);
    }
    SparseSystem ref = SparseSystem::assemble(model, target);
    const Eigen::MatrixXd a = Eigen::MatrixXd(sys.matrix());
    const Eigen::MatrixXd b = Eigen::MatrixXd(ref.matrix());
    CHECK((a - b).norm() < 1e-13 * b.norm());
  }

  SUBCASE("all elements changed equals re-assembly") {
    std::vector<int> all(static_cast<std::size_t>(mesh.n_elements()));
    std::iota(all.begin(), all.end(), 0);
    std::vector<Mat6> vals(all.size(), 0.75 * c_el);
    sys.update_incremental(all, vals);
    SparseSystem ref = SparseSystem::assemble(
        model, std::vector<Mat6>(all.size(), 0.75 * c_el));
    CHECK((Eigen::MatrixXd(sys.matrix()) - Eigen::MatrixXd(ref.matrix())).norm() <
          1e-13 * Eigen::MatrixXd(ref.matrix()).norm());
  }

  SUBCASE("element outside the mesh is rejected") {
    CHECK_THROWS_AS(sys.update_incremental({mesh.n_elements()}, {c_el}),
                    SolverError);
  }
}

TEST_CASE("direct solve: prescribed values, residual, factor reuse") {
  const Mesh mesh = make_rect_mesh(3.0, 1.0, 6, 2);
  const FemModel model(mesh);
  MaterialParams p;
  SparseSystem sys = elastic_system(model, p);

  SUBCASE("fully constrained mesh returns the prescribed values") {
    std::vector<int> dofs;
    std::vector<double> vals;
    for (int n = 0; n < mesh.n_nodes(); ++n)
      for (int d = 0; d < 2; ++d) {
        dofs.push_back(2 * n + d);
        vals.push_back(0.01 * n + 0.5 * d);
      }
    sys.set_dirichlet(dofs, vals);
    const Eigen::VectorXd u = sys.solve_direct(Eigen::VectorXd::Zero(mesh.n_dofs()));
    for (std::size_t i = 0; i < dofs.size(); ++i)
      CHECK(u[dofs[i]] == doctest::Approx(vals[i]));
  }

  SUBCASE("random SPD system matches the dense oracle; factor reused") {
    std::vector<int> dofs;
    std::vector<double> vals;
    for (int n : mesh.node_sets.at("left")) {
      dofs.push_back(2 * n);
      vals.push_back(0.0);
      dofs.push_back(2 * n + 1);
      vals.push_back(0.0);
    }
    sys.set_dirichlet(dofs, vals);

    std::mt19937_64 rng(17);
    Eigen::VectorXd f(mesh.n_dofs());
    for (int i = 0; i < f.size(); ++i)
      f[i] = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;

    const Eigen::VectorXd u = sys.solve_direct(f);
    // dense oracle on the reduced block
    const Eigen::MatrixXd kff = Eigen::MatrixXd(sys.free_matrix());
    const Eigen::VectorXd bf = sys.reduce_rhs(f);
    const Eigen::VectorXd xf = kff.ldlt().solve(bf);
    const Eigen::VectorXd uf = sys.restrict_free(u);
    CHECK((uf - xf).norm() < 1e-10 * xf.norm());
    // residual contract
    CHECK((kff * uf - bf).norm() <= 1e-10 * bf.norm());
    // factor reproduces the matvec
    CHECK((kff * sys.restrict_free(sys.solve_direct(f)) - bf).norm() <
          1e-10 * bf.norm());

    const long before = sys.counters().factorizations;
    (void)sys.solve_direct(f);
    (void)sys.solve_direct(2.0 * f);
    CHECK(sys.counters().factorizations == before); // K unchanged: reuse
  }
}

TEST_CASE("deflated CG") {
  // ill-conditioned two-material bar: alternating stiff/soft slabs under a
  // pure axial constraint (uy pinned). The near-zero modes are the stiff-slab
  // translations, exactly the span of the per-cluster indicators.
  const Mesh mesh = make_rect_mesh(8.0, 1.0, 64, 1);
  const FemModel model(mesh);
  MaterialParams stiff, soft;
  soft.young = stiff.young / 1e5;
  std::vector<Mat6> tangents;
  for (int e = 0; e < mesh.n_elements(); ++e) {
    const int slab = std::min(7, static_cast<int>(mesh.element_centroid(e).x()));
    tangents.push_back(elastic_tangent(slab % 2 == 0 ? stiff : soft));
  }
  SparseSystem sys = SparseSystem::assemble(model, tangents);
  std::vector<int> dofs;
  std::vector<double> vals;
  for (int n = 0; n < mesh.n_nodes(); ++n) { // roller everywhere: axial chain
    dofs.push_back(2 * n + 1);
    vals.push_back(0.0);
  }
  for (int n : mesh.node_sets.at("left")) {
    dofs.push_back(2 * n);
    vals.push_back(0.0);
  }
  sys.set_dirichlet(dofs, vals);

  Eigen::VectorXd f = Eigen::VectorXd::Zero(mesh.n_dofs());
  for (int n : mesh.node_sets.at("right")) f[2 * n] = 1.0;

  std::vector<int> node_cluster(static_cast<std::size_t>(mesh.n_nodes()));
  for (int n = 0; n < mesh.n_nodes(); ++n)
    node_cluster[static_cast<std::size_t>(n)] = std::min(
        7, static_cast<int>(mesh.nodes[static_cast<std::size_t>(n)].x() / 1.0));
  const DeflationSpace ds = build_deflation_space(sys, node_cluster, 8, 2);
  CHECK(ds.w.cols() == 8); // one x-translation per slab, minus the pinned one
  CHECK((ds.w.transpose() * ds.w -
         Eigen::MatrixXd::Identity(ds.w.cols(), ds.w.cols()))
            .norm() < 1e-12);

  const auto& a = sys.free_matrix();
  const Eigen::VectorXd b = sys.reduce_rhs(f);

  SUBCASE("empty deflation equals plain CG trajectory") {
    const CgResult plain = cg_solve(a, b, 1e-8, 50000);
    const CgResult empty =
        deflated_cg(a, b, Eigen::MatrixXd(b.size(), 0), 1e-8, 50000);
    CHECK(plain.converged);
    CHECK(empty.converged);
    CHECK(plain.iterations == empty.iterations);
    CHECK((plain.x - empty.x).norm() == 0.0);
  }

  SUBCASE("solution in the deflation span converges in the coarse solve") {
    Eigen::VectorXd y = Eigen::VectorXd::Zero(ds.w.cols());
    y[0] = 1.0;
    y[ds.w.cols() - 1] = -2.0;
    const Eigen::VectorXd rhs = a * (ds.w * y);
    const CgResult res = deflated_cg(a, rhs, ds.w, 1e-10, 100);
    CHECK(res.converged);
    CHECK(res.iterations <= 1);
    CHECK((res.x - ds.w * y).norm() < 1e-8 * y.norm());
  }

  SUBCASE("cluster deflation beats plain CG by 2x and agrees with direct") {
    const CgResult plain = cg_solve(a, b, 1e-8, 50000);
    const CgResult defl = deflated_cg(a, b, ds.w, 1e-8, 50000);
    REQUIRE(plain.converged);
    REQUIRE(defl.converged);
    MESSAGE("plain " << plain.iterations << " vs deflated " << defl.iterations);
    CHECK(defl.iterations * 2 <= plain.iterations);
    const Eigen::VectorXd exact =
        Eigen::MatrixXd(a).ldlt().solve(Eigen::VectorXd(b));
    CHECK((defl.x - exact).norm() <= 1e-8 * exact.norm());
    // surface operation: full nodal vector with prescribed values
    const CgResult full = deflated_cg_solve(sys, f, ds, 1e-8);
    for (std::size_t i = 0; i < dofs.size(); ++i)
      CHECK(full.x[dofs[i]] == doctest::Approx(vals[i]));
  }

  SUBCASE("deflated CG agrees with the direct solve on SPD systems") {
    // residual -> displacement error scales with the condition number, so the
    // 1e-8 agreement is checked on the uniform-material system and the
    // ill-conditioned one is held to the energy-consistent bound
    // the ill-conditioned system: deflation removes the bad modes, so the
    // 1e-8-residual solution is already accurate far beyond plain CG
    const Eigen::VectorXd direct_hard = sys.solve_direct(f);
    const CgResult defl_hard = deflated_cg_solve(sys, f, ds, 1e-8);
    CHECK((defl_hard.x - direct_hard).norm() <= 1e-7 * direct_hard.norm());

    SparseSystem uni = SparseSystem::assemble(
        model, std::vector<Mat6>(static_cast<std::size_t>(mesh.n_elements()),
                                 elastic_tangent(stiff)));
    uni.set_dirichlet(dofs, vals);
    const Eigen::VectorXd direct = uni.solve_direct(f);
    const DeflationSpace ds_uni = build_deflation_space(uni, node_cluster, 8, 2);
    const CgResult defl = deflated_cg_solve(uni, f, ds_uni, 1e-12);
    CHECK((defl.x - direct).norm() <= 1e-8 * direct.norm());
  }
}

TEST_CASE("CG breakdown on an indefinite system is reported") {
  Eigen::SparseMatrix<double> a(2, 2);
  a.insert(0, 0) = 1.0;
  a.insert(1, 1) = -1.0;
  a.makeCompressed();
  Eigen::VectorXd b(2);
  b << 0.0, 1.0;
  const CgResult res = cg_solve(a, b, 1e-10, 50);
  CHECK_FALSE(res.converged);
  CHECK(res.breakdown_iteration >= 0);
}
