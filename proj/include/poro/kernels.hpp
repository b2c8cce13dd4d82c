#pragma once

// Runtime-dispatched dense vector kernels.
//
// Every kernel has a portable scalar reference implementation and, on x86-64
// with AVX2, a vectorized variant selected once at startup (overridable with
// POROSOLVE_KERNELS=scalar|avx2 or force_isa()). The two paths are
// equivalence-tested; the scalar path is the semantic reference.

#include <cstddef>
#include <cstdint>

namespace poro::kern {

enum class Isa { Scalar, Avx2 };

Isa active_isa();
const char* isa_name(Isa isa);

// Test hook. Forcing Avx2 on a machine without it is ignored (stays Scalar).
void force_isa(Isa isa);

// dot(a, b) = sum a[i] * b[i]
double dot(const double* a, const double* b, std::size_t n);

// squared Euclidean norm
double nrm2sq(const double* a, std::size_t n);

// y += alpha * x
void axpy(double alpha, const double* x, double* y, std::size_t n);

// y = x + beta * y   (CG direction update)
void xpby(const double* x, double beta, double* y, std::size_t n);

// sum_k w[k] * v[idx[k]]   (weighted gather; nonlocal averaging)
double gather_weighted(const double* w, const std::int32_t* idx, const double* v,
                       std::size_t n);

// max_i |a[i] - b[i]|
double max_abs_diff(const double* a, const double* b, std::size_t n);

} // namespace poro::kern
