#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poro/meshgen.hpp"
#include "poro/nonlocal.hpp"

#include <random>

using namespace poro;

TEST_CASE("bell kernel values") {
  const double l0 = 2.0;
  CHECK(bell_kernel(0.0, l0) == doctest::Approx(1.0));
  CHECK(bell_kernel(0.5 * l0, l0) == doctest::Approx(0.0));
  CHECK(bell_kernel(0.25 * l0, l0) == doctest::Approx(0.5625)); // (1-1/4)^2
  CHECK(bell_kernel(0.75 * l0, l0) == 0.0); // outside the support
  // symmetry in r is structural: the kernel depends on ||X - X'|| only
  CHECK(bell_kernel(0.3, l0) == bell_kernel(0.3, l0));
}

TEST_CASE("hand-summed three-point line") {
  const std::vector<Eigen::Vector3d> pts = {{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  const std::vector<double> vols = {1.0, 1.0, 1.0};
  const double l0 = 3.0; // radius 1.5: immediate neighbors only
  const NeighborTable table = build_neighbor_table(pts, vols, l0);

  const double w1 = bell_kernel(1.0, l0); // (1 - 4/9)^2 = 25/81
  CHECK(w1 == doctest::Approx(25.0 / 81.0));

  // damaged center IP among intact neighbors
  const std::vector<double> d = {0.0, 1.0, 0.0};
  const auto dbar = nonlocal_average(table, d);
  // IP 0: neighbors {0,1}: w = [1, w1]/(1+w1); value = w1/(1+w1)
  CHECK(dbar[0] == doctest::Approx(w1 / (1.0 + w1)).epsilon(1e-12));
  // IP 1: neighbors {0,1,2}: self weight = 1/(1+2w1)
  CHECK(dbar[1] == doctest::Approx(1.0 / (1.0 + 2.0 * w1)).epsilon(1e-12));
  CHECK(dbar[2] == doctest::Approx(w1 / (1.0 + w1)).epsilon(1e-12));
}

TEST_CASE("partition of unity and bounded averaging") {
  const Mesh mesh = make_plate_hole(30.0, 30.0, 12, 12, 7.5);
  const NeighborTable table = build_neighbor_table(mesh, 6.0);
  REQUIRE(table.n_points() == mesh.n_elements());
  for (int i = 0; i < table.n_points(); ++i) {
    double sum = 0.0;
    bool self = false;
    for (int k = table.offset[static_cast<std::size_t>(i)];
         k < table.offset[static_cast<std::size_t>(i) + 1]; ++k) {
      sum += table.weight[static_cast<std::size_t>(k)];
      if (table.idx[static_cast<std::size_t>(k)] == i) self = true;
    }
    CHECK(sum == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(self);
  }

  std::mt19937_64 rng(4);
  std::vector<double> field(static_cast<std::size_t>(mesh.n_elements()));
  for (auto& v : field) v = static_cast<double>(rng() >> 11) * 0x1.0p-53;
  const auto avg = nonlocal_average(table, field);
  const double lo = *std::min_element(field.begin(), field.end());
  const double hi = *std::max_element(field.begin(), field.end());
  for (double v : avg) {
    CHECK(v >= lo - 1e-14);
    CHECK(v <= hi + 1e-14);
  }

  SUBCASE("uniform field is a fixed point") {
    std::vector<double> c(field.size(), 0.42);
    for (double v : nonlocal_average(table, c))
      CHECK(v == doctest::Approx(0.42).epsilon(1e-13));
  }

  SUBCASE("support below the IP spacing degenerates to the identity") {
    const NeighborTable tiny = build_neighbor_table(mesh, 1e-6);
    const auto same = nonlocal_average(tiny, field);
    for (std::size_t i = 0; i < field.size(); ++i) CHECK(same[i] == field[i]);
  }
}
