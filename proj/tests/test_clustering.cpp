#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poro/clustering.hpp"
#include "poro/meshgen.hpp"

#include <limits>
#include <numeric>
#include <random>
#include <set>

using namespace poro;

namespace {

FeatureTable table_1d(const std::vector<double>& vals) {
  FeatureTable t;
  t.features.resize(static_cast<int>(vals.size()), 1);
  t.ids.resize(vals.size());
  for (std::size_t i = 0; i < vals.size(); ++i) {
    t.features(static_cast<int>(i), 0) = vals[i];
    t.ids[i] = static_cast<int>(i);
  }
  return t;
}

} // namespace

TEST_CASE("kmeans basics") {
  SUBCASE("k = 1 returns the feature mean") {
    const FeatureTable t = table_1d({1.0, 2.0, 6.0});
    const KmeansResult r = kmeans(t, 1, 7);
    CHECK(r.centroids(0, 0) == doctest::Approx(3.0));
    CHECK(r.objective == doctest::Approx(14.0));
  }
  SUBCASE("separated pairs split naturally") {
    const FeatureTable t = table_1d({0.0, 0.1, 10.0, 10.1});
    const KmeansResult r = kmeans(t, 2, 3);
    CHECK(r.assignment[0] == r.assignment[1]);
    CHECK(r.assignment[2] == r.assignment[3]);
    CHECK(r.assignment[0] != r.assignment[2]);
  }
  SUBCASE("k out of range") {
    const FeatureTable t = table_1d({0.0, 1.0});
    CHECK_THROWS_AS(kmeans(t, 3, 1), std::invalid_argument);
  }
}

TEST_CASE("kmeans reaches the global optimum of a small 2D instance") {
  FeatureTable t;
  t.features.resize(6, 2);
  t.features << 0.0, 0.0, 0.2, 0.1, 0.1, 0.3, 5.0, 5.0, 5.2, 4.9, 4.8, 5.1;
  t.ids = {0, 1, 2, 3, 4, 5};

  // brute force over all 2-partitions (oracle independent of kmeans)
  double best = std::numeric_limits<double>::infinity();
  for (int mask = 1; mask < 63; ++mask) {
    Eigen::RowVector2d m0 = Eigen::RowVector2d::Zero(),
                       m1 = Eigen::RowVector2d::Zero();
    int n0 = 0, n1 = 0;
    for (int i = 0; i < 6; ++i)
      if (mask & (1 << i)) {
        m0 += t.features.row(i);
        ++n0;
      } else {
        m1 += t.features.row(i);
        ++n1;
      }
    if (n0 == 0 || n1 == 0) continue;
    m0 /= n0;
    m1 /= n1;
    double obj = 0.0;
    for (int i = 0; i < 6; ++i)
      obj += (mask & (1 << i)) ? (t.features.row(i) - m0).squaredNorm()
                               : (t.features.row(i) - m1).squaredNorm();
    best = std::min(best, obj);
  }
  const KmeansResult r = kmeans(t, 2, 11);
  CHECK(r.objective == doctest::Approx(best).epsilon(1e-12));
}

TEST_CASE("kmeans fixed point and determinism") {
  FeatureTable t;
  t.features.resize(40, 2);
  std::mt19937_64 rng(2);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  for (int i = 0; i < 40; ++i) {
    t.features(i, 0) = u01() + (i % 4);
    t.features(i, 1) = u01() + (i % 3) * 2.0;
  }
  t.ids.resize(40);
  std::iota(t.ids.begin(), t.ids.end(), 0);
  const KmeansResult a = kmeans(t, 5, 123);
  const KmeansResult b = kmeans(t, 5, 123);
  CHECK(a.assignment == b.assignment);
  CHECK(a.objective == b.objective);
  // fixed point: no point is strictly closer to another centroid
  for (int i = 0; i < 40; ++i) {
    const double own =
        (t.features.row(i) - a.centroids.row(a.assignment[static_cast<std::size_t>(i)]))
            .squaredNorm();
    for (int c = 0; c < 5; ++c)
      CHECK(own <= (t.features.row(i) - a.centroids.row(c)).squaredNorm() + 1e-12);
  }
}

TEST_CASE("Calinski-Harabasz index") {
  const FeatureTable t = table_1d({0.0, 0.1, 10.0, 10.1});
  SUBCASE("hand evaluation of the natural split") {
    const std::vector<int> natural = {0, 0, 1, 1};
    CHECK(ch_index(t, natural, 2) == doctest::Approx(20000.0).epsilon(1e-9));
    const std::vector<int> bad = {0, 1, 1, 1};
    CHECK(ch_index(t, bad, 2) < 20000.0);
  }
  SUBCASE("identical points give CH = 0") {
    const FeatureTable z = table_1d({1.0, 1.0, 1.0, 1.0});
    CHECK(ch_index(z, {0, 0, 1, 1}, 2) == 0.0);
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(ch_index(t, {0, 0, 0, 0}, 1), std::invalid_argument);
    CHECK_THROWS_AS(ch_index(t, {0, 1, 2, 3}, 4), std::invalid_argument);
  }
}

namespace {

FeatureTable blobs_2d(int n_blobs, int per_blob, double sep, double sigma,
                      std::uint64_t seed) {
  FeatureTable t;
  t.features.resize(n_blobs * per_blob, 2);
  std::mt19937_64 rng(seed);
  auto u01 = [&] { return static_cast<double>(rng() >> 11) * 0x1.0p-53; };
  int row = 0;
  for (int b = 0; b < n_blobs; ++b)
    for (int i = 0; i < per_blob; ++i, ++row) {
      t.features(row, 0) = sep * b + sigma * (2.0 * u01() - 1.0);
      t.features(row, 1) = sep * (b % 2) + sigma * (2.0 * u01() - 1.0);
    }
  t.ids.resize(static_cast<std::size_t>(row));
  std::iota(t.ids.begin(), t.ids.end(), 0);
  return t;
}

int brute_force_ch_argmax(const FeatureTable& t, int k_max, std::uint64_t seed) {
  int best_k = 2;
  double best = -1.0;
  for (int k = 2; k <= k_max; ++k) {
    const KmeansResult km = kmeans(t, k, seed);
    const double ch = ch_index(t, km.assignment, k);
    if (ch > best) {
      best = ch;
      best_k = k;
    }
  }
  return best_k;
}

} // namespace

TEST_CASE("optimal cluster count via CH") {
  SUBCASE("two well-separated blobs") {
    const FeatureTable t = blobs_2d(2, 40, 20.0, 0.6, 13);
    CHECK(optimal_k(t, 6, 5) == 2);
    CHECK(optimal_k(t, 6, 5) == brute_force_ch_argmax(t, 6, 5));
  }
  SUBCASE("three well-separated blobs") {
    const FeatureTable t = blobs_2d(3, 40, 20.0, 0.6, 29);
    CHECK(optimal_k(t, 6, 5) == 3);
    CHECK(optimal_k(t, 6, 5) == brute_force_ch_argmax(t, 6, 5));
  }
  SUBCASE("uniform grid stays in range") {
    std::vector<double> v;
    for (int i = 0; i < 30; ++i) v.push_back(i);
    const int k = optimal_k(table_1d(v), 8, 5);
    CHECK(k >= 2);
    CHECK(k <= 8);
  }
  SUBCASE("domain errors") {
    CHECK_THROWS_AS(optimal_k(table_1d({1.0, 2.0}), 6, 5), std::invalid_argument);
    CHECK_THROWS_AS(optimal_k(table_1d({1.0, 2.0, 3.0}), 2, 5), std::invalid_argument);
  }
}

TEST_CASE("make_groups quantiles") {
  IntensityField f;
  for (int i = 0; i < 5000; ++i) f.raw.push_back(0.001 * ((i * 37) % 5000));
  f.scaled = f.raw;
  const auto g = make_groups(f, 5);
  std::vector<int> counts(5, 0);
  for (int gi : g) counts[static_cast<std::size_t>(gi)]++;
  for (int c : counts) CHECK(c == 1000); // five groups of 1000
  // groups ascend in intensity
  std::vector<double> mean(5, 0.0);
  for (std::size_t i = 0; i < f.raw.size(); ++i)
    mean[static_cast<std::size_t>(g[i])] += f.raw[i] / 1000.0;
  for (int gi = 1; gi < 5; ++gi) CHECK(mean[static_cast<std::size_t>(gi)] >
                                       mean[static_cast<std::size_t>(gi - 1)]);

  SUBCASE("single group") {
    const auto g1 = make_groups(f, 1);
    for (int gi : g1) CHECK(gi == 0);
  }
  SUBCASE("ties split near-equally") {
    IntensityField flat;
    flat.raw.assign(103, 1.0);
    flat.scaled = flat.raw;
    const auto gt = make_groups(flat, 4);
    std::vector<int> c(4, 0);
    for (int gi : gt) c[static_cast<std::size_t>(gi)]++;
    for (int ci : c) CHECK(std::abs(ci - 103 / 4) <= 1);
  }
  SUBCASE("too many groups") {
    IntensityField tiny;
    tiny.raw = {1.0, 2.0};
    CHECK_THROWS_AS(make_groups(tiny, 3), std::invalid_argument);
  }
}

TEST_CASE("cluster allocation (Eqs 40-41 with largest remainder)") {
  SUBCASE("s_f = 0 gives equal counts") {
    const auto c = allocate_clusters(100, 5, 0.0);
    for (int v : c) CHECK(v == 20);
  }
  SUBCASE("paper example s_f = 1") {
    const auto c = allocate_clusters(400, 3, 1.0);
    CHECK(c[0] == 67);
    CHECK(c[1] == 133);
    CHECK(c[2] == 200);
  }
  SUBCASE("paper example s_f = -1 within +-1") {
    const auto c = allocate_clusters(400, 3, -1.0);
    CHECK(std::abs(c[0] - 219) <= 1);
    CHECK(std::abs(c[1] - 109) <= 1);
    CHECK(std::abs(c[2] - 72) <= 1);
    CHECK(c[0] + c[1] + c[2] == 400);
  }
  SUBCASE("counts sum exactly and respect floors") {
    const auto c = allocate_clusters(37, 4, 2.5, {3, 3, 3, 3});
    CHECK(std::accumulate(c.begin(), c.end(), 0) == 37);
    for (int v : c) CHECK(v >= 3);
  }
  SUBCASE("every count at least one even for extreme s_f") {
    const auto c = allocate_clusters(12, 5, 10.0);
    CHECK(std::accumulate(c.begin(), c.end(), 0) == 12);
    for (int v : c) CHECK(v >= 1);
  }
  SUBCASE("scale invariance holds by construction (sorted indices only)") {
    CHECK(allocate_clusters(100, 4, 1.5) == allocate_clusters(100, 4, 1.5));
  }
}

TEST_CASE("stress intensity on a homogeneous RVE is uniform") {
  const Mesh mesh = make_rect_mesh(0.1, 0.1, 8, 8);
  MaterialParams p;
  const IntensityField f = stress_intensity(mesh, p);
  const double ref = f.raw.front();
  CHECK(ref > 0.0);
  for (double v : f.raw) CHECK(v == doctest::Approx(ref).epsilon(1e-8));
  for (double v : f.scaled) CHECK(v == 0.0); // degenerate rescale
}

TEST_CASE("static hierarchical clustering") {
  const Mesh mesh = make_pore_rve_2d(
      0.1, 16, {{0.035, 0.05, 0.0, 0.015}, {0.065, 0.05, 0.0, 0.015}});
  MaterialParams p;

  SUBCASE("N_g = 1 reduces to position-based clustering") {
    const Decomposition a = static_hierarchical_clustering(mesh, p, 12, 1, 1.0, 9);
    const Decomposition b = position_clustering(mesh, 12, 9);
    CHECK(a.elem_cluster == b.elem_cluster);
  }

  SUBCASE("partition, grouping and stress-informed ordering") {
    const int n_cl = 24, n_g = 3;
    const Decomposition d =
        static_hierarchical_clustering(mesh, p, n_cl, n_g, 1.0, 9);
    CHECK(d.n_clusters == n_cl);
    // partition property
    std::set<int> seen;
    for (int c : d.elem_cluster) {
      CHECK(c >= 0);
      CHECK(c < n_cl);
      seen.insert(c);
    }
    CHECK(static_cast<int>(seen.size()) == n_cl);
    // s_f = 1: higher-intensity groups receive at least as many clusters
    std::vector<int> per_group(static_cast<std::size_t>(n_g), 0);
    for (int c = 0; c < n_cl; ++c)
      per_group[static_cast<std::size_t>(d.cluster_group[static_cast<std::size_t>(c)])]++;
    CHECK(per_group[2] >= per_group[1]);
    CHECK(per_group[1] >= per_group[0]);
    // clusters are topologically connected
    for (int c = 0; c < d.n_clusters; ++c) {
      const auto mem = d.cluster_members(c);
      REQUIRE(!mem.empty());
      std::set<int> in(mem.begin(), mem.end());
      std::vector<int> stack = {mem[0]};
      std::set<int> visited = {mem[0]};
      while (!stack.empty()) {
        const int cur = stack.back();
        stack.pop_back();
        for (int nb : mesh.element_neighbors(cur))
          if (in.count(nb) && !visited.count(nb)) {
            visited.insert(nb);
            stack.push_back(nb);
          }
      }
      CHECK(visited.size() == mem.size());
    }
  }

  SUBCASE("deterministic for a fixed seed") {
    const Decomposition a = static_hierarchical_clustering(mesh, p, 20, 3, 1.0, 33);
    const Decomposition b = static_hierarchical_clustering(mesh, p, 20, 3, 1.0, 33);
    CHECK(a.elem_cluster == b.elem_cluster);
  }
}

TEST_CASE("node clusters from elements cover every node") {
  const Mesh mesh = make_pore_rve_2d(0.1, 12, {{0.05, 0.05, 0.0, 0.02}});
  const Decomposition d = position_clustering(mesh, 10, 3);
  const auto nc = node_clusters_from_elements(mesh, d);
  REQUIRE(static_cast<int>(nc.size()) == mesh.n_nodes());
  for (int c : nc) {
    CHECK(c >= 0);
    CHECK(c < d.n_clusters);
  }
}

TEST_CASE("dynamic refinement") {
  const Mesh mesh = make_rect_mesh(1.0, 1.0, 10, 10);
  Decomposition d = position_clustering(mesh, 10, 21);
  std::vector<double> ebar(static_cast<std::size_t>(d.n_clusters), 0.0);

  SUBCASE("uniform field never selects parents") {
    const RefineResult r = dynamic_refine(mesh, d, ebar, 1.0, 20, 4, 1);
    CHECK(r.n_split == 0);
    CHECK(d.n_clusters == 10);
  }

  SUBCASE("budget exhaustion is a silent no-op") {
    ebar[3] = 1.0;
    const RefineResult r = dynamic_refine(mesh, d, ebar, 1.0, 10, 4, 1);
    CHECK(r.n_split == 0);
  }

  SUBCASE("gamma = 1 requests n_cl_0 new clusters; children inherit and stay connected") {
    ebar[3] = 1.0;
    ebar[7] = 0.8;
    Decomposition before = d;
    const RefineResult r = dynamic_refine(mesh, d, ebar, 1.0, 30, 4, 1);
    CHECK(r.n_requested == 4);
    CHECK(r.n_split >= 1);
    CHECK(d.n_clusters == 10 + r.n_split);
    // partition is preserved
    std::vector<int> count(static_cast<std::size_t>(d.n_clusters), 0);
    for (int c : d.elem_cluster) count[static_cast<std::size_t>(c)]++;
    for (int c = 0; c < d.n_clusters; ++c) CHECK(count[static_cast<std::size_t>(c)] >= 1);
    int total = 0;
    for (int c : count) total += c;
    CHECK(total == mesh.n_elements());
    // children marked unsplittable; genealogy recorded
    for (const auto& [parent, a, b] : r.transfer) {
      CHECK(a == parent);
      CHECK(d.unsplittable[static_cast<std::size_t>(a)]);
      CHECK(d.unsplittable[static_cast<std::size_t>(b)]);
    }
    (void)before;
  }
}
