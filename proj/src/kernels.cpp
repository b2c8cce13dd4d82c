#include "poro/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <cstring>

namespace poro::kern {

namespace scalar {

double dot(const double* a, const double* b, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * b[i];
  return s;
}

double nrm2sq(const double* a, std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += a[i] * a[i];
  return s;
}

void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void xpby(const double* x, double beta, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] = x[i] + beta * y[i];
}

double gather_weighted(const double* w, const std::int32_t* idx, const double* v,
                       std::size_t n) {
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += w[i] * v[idx[i]];
  return s;
}

double max_abs_diff(const double* a, const double* b, std::size_t n) {
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

} // namespace scalar

#if defined(__x86_64__) || defined(_M_X64)
#define PORO_HAVE_AVX2_TU 1
namespace avx2 {
double dot(const double* a, const double* b, std::size_t n);
double nrm2sq(const double* a, std::size_t n);
void axpy(double alpha, const double* x, double* y, std::size_t n);
void xpby(const double* x, double beta, double* y, std::size_t n);
double gather_weighted(const double* w, const std::int32_t* idx, const double* v,
                       std::size_t n);
double max_abs_diff(const double* a, const double* b, std::size_t n);
} // namespace avx2
#endif

namespace {

struct Vtable {
  double (*dot)(const double*, const double*, std::size_t);
  double (*nrm2sq)(const double*, std::size_t);
  void (*axpy)(double, const double*, double*, std::size_t);
  void (*xpby)(const double*, double, double*, std::size_t);
  double (*gather_weighted)(const double*, const std::int32_t*, const double*,
                            std::size_t);
  double (*max_abs_diff)(const double*, const double*, std::size_t);
};

constexpr Vtable kScalar = {scalar::dot,   scalar::nrm2sq,
                            scalar::axpy,  scalar::xpby,
                            scalar::gather_weighted, scalar::max_abs_diff};

#ifdef PORO_HAVE_AVX2_TU
constexpr Vtable kAvx2 = {avx2::dot,   avx2::nrm2sq,
                          avx2::axpy,  avx2::xpby,
                          avx2::gather_weighted, avx2::max_abs_diff};
#endif

bool cpu_has_avx2() {
#ifdef PORO_HAVE_AVX2_TU
  return __builtin_cpu_supports("avx2") != 0;
#else
  return false;
#endif
}

struct Dispatch {
  const Vtable* vt = &kScalar;
  Isa isa = Isa::Scalar;

  Dispatch() {
    bool want_avx2 = cpu_has_avx2();
    if (const char* env = std::getenv("POROSOLVE_KERNELS")) {
      if (std::strcmp(env, "scalar") == 0) want_avx2 = false;
      // "avx2" keeps the capability-gated default
    }
    set(want_avx2 ? Isa::Avx2 : Isa::Scalar);
  }

  void set(Isa want) {
#ifdef PORO_HAVE_AVX2_TU
    if (want == Isa::Avx2 && cpu_has_avx2()) {
      vt = &kAvx2;
      isa = Isa::Avx2;
      return;
    }
#endif
    (void)want;
    vt = &kScalar;
    isa = Isa::Scalar;
  }
};

Dispatch& dispatch() {
  static Dispatch d;
  return d;
}

} // namespace

Isa active_isa() { return dispatch().isa; }

const char* isa_name(Isa isa) {
  return isa == Isa::Avx2 ? "avx2" : "scalar";
}

void force_isa(Isa isa) { dispatch().set(isa); }

double dot(const double* a, const double* b, std::size_t n) {
  return dispatch().vt->dot(a, b, n);
}
double nrm2sq(const double* a, std::size_t n) {
  return dispatch().vt->nrm2sq(a, n);
}
void axpy(double alpha, const double* x, double* y, std::size_t n) {
  dispatch().vt->axpy(alpha, x, y, n);
}
void xpby(const double* x, double beta, double* y, std::size_t n) {
  dispatch().vt->xpby(x, beta, y, n);
}
double gather_weighted(const double* w, const std::int32_t* idx, const double* v,
                       std::size_t n) {
  return dispatch().vt->gather_weighted(w, idx, v, n);
}
double max_abs_diff(const double* a, const double* b, std::size_t n) {
  return dispatch().vt->max_abs_diff(a, b, n);
}

} // namespace poro::kern
