#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "poro/kernels.hpp"

#include <cmath>
#include <random>
#include <vector>

using namespace poro;

namespace {

std::vector<double> random_vec(std::mt19937_64& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * (static_cast<double>(rng() >> 11) * 0x1.0p-53) - 1.0;
  return v;
}

struct IsaGuard {
  ~IsaGuard() { kern::force_isa(kern::Isa::Avx2); }
};

} // namespace

TEST_CASE("scalar and simd kernels agree") {
  IsaGuard guard;
  std::mt19937_64 rng(1234);
  for (std::size_t n : {std::size_t{1}, std::size_t{3}, std::size_t{4},
                        std::size_t{17}, std::size_t{1024}, std::size_t{1029}}) {
    const auto a = random_vec(rng, n);
    const auto b = random_vec(rng, n);
    std::vector<std::int32_t> idx(n);
    for (std::size_t i = 0; i < n; ++i)
      idx[i] = static_cast<std::int32_t>((i * 7) % n);

    kern::force_isa(kern::Isa::Scalar);
    const double dot_s = kern::dot(a.data(), b.data(), n);
    const double nrm_s = kern::nrm2sq(a.data(), n);
    const double gw_s = kern::gather_weighted(a.data(), idx.data(), b.data(), n);
    const double mad_s = kern::max_abs_diff(a.data(), b.data(), n);
    auto y_s = b;
    kern::axpy(0.37, a.data(), y_s.data(), n);
    auto p_s = b;
    kern::xpby(a.data(), -1.91, p_s.data(), n);

    kern::force_isa(kern::Isa::Avx2);
    const bool have_avx2 = kern::active_isa() == kern::Isa::Avx2;
    const double dot_v = kern::dot(a.data(), b.data(), n);
    const double nrm_v = kern::nrm2sq(a.data(), n);
    const double gw_v = kern::gather_weighted(a.data(), idx.data(), b.data(), n);
    const double mad_v = kern::max_abs_diff(a.data(), b.data(), n);
    auto y_v = b;
    kern::axpy(0.37, a.data(), y_v.data(), n);
    auto p_v = b;
    kern::xpby(a.data(), -1.91, p_v.data(), n);

    INFO("n=" << n << " isa=" << kern::isa_name(kern::active_isa()));
    // reductions may reassociate; elementwise ops must match exactly
    CHECK(dot_v == doctest::Approx(dot_s).epsilon(1e-13));
    CHECK(nrm_v == doctest::Approx(nrm_s).epsilon(1e-13));
    CHECK(gw_v == doctest::Approx(gw_s).epsilon(1e-13));
    CHECK(mad_v == mad_s);
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(y_v[i] == y_s[i]);
      CHECK(p_v[i] == p_s[i]);
    }
    if (!have_avx2) MESSAGE("avx2 unavailable; scalar fallback verified");
  }
}

TEST_CASE("kernel reference semantics") {
  std::vector<double> a = {1.0, 2.0, -3.0};
  std::vector<double> b = {4.0, -5.0, 6.0};
  CHECK(kern::dot(a.data(), b.data(), 3) == doctest::Approx(4.0 - 10.0 - 18.0));
  CHECK(kern::nrm2sq(a.data(), 3) == doctest::Approx(14.0));
  CHECK(kern::max_abs_diff(a.data(), b.data(), 3) == doctest::Approx(9.0));
  std::vector<std::int32_t> idx = {2, 0};
  std::vector<double> w = {0.5, 2.0};
  CHECK(kern::gather_weighted(w.data(), idx.data(), b.data(), 2) ==
        doctest::Approx(0.5 * 6.0 + 2.0 * 4.0));
}

TEST_CASE("env override is honored at least as scalar") {
  // force_isa(Scalar) always works regardless of cpu
  kern::force_isa(kern::Isa::Scalar);
  CHECK(kern::active_isa() == kern::Isa::Scalar);
  kern::force_isa(kern::Isa::Avx2);
}
