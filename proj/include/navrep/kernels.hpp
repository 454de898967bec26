#pragma once

#include <cstddef>
#include <string>

// Dense f64 inner loops behind everything in the tape: dot products for the
// matrix ops, axpy for gradient accumulation, elementwise arithmetic, and the
// reductions used by softmax/layer-norm. Each kernel has a scalar reference
// implementation and an AVX2+FMA variant; the active backend is chosen at
// runtime (cpuid, overridable via NAVREP_KERNELS=scalar|avx2 or set_backend).
//
// Equivalence contract, checked by tests/test_kernels.cpp:
//   - elementwise kernels (add/sub/mul/scale/axpy) are bit-identical across
//     backends (the AVX2 variants use plain mul/add, no FMA contraction, and
//     the scalar TU is built with -ffp-contract=off);
//   - reductions (dot/sum/max) may reassociate, so they are compared against
//     a compensated long-double oracle within 1e-12 of the natural error
//     scale sum(|terms|).

namespace navrep::kern {

enum class Backend { scalar, avx2 };

Backend active_backend();
bool backend_supported(Backend b);
// Throws std::invalid_argument if the backend is not supported on this CPU.
void set_backend(Backend b);
const char* backend_name(Backend b);
// Parse "scalar"/"avx2"; throws std::invalid_argument on anything else.
Backend parse_backend(const std::string& name);

double dot(std::size_t n, const double* x, const double* y);
double sum(std::size_t n, const double* x);
double max_value(std::size_t n, const double* x);  // requires n >= 1

// y[i] += a * x[i]
void axpy(std::size_t n, double a, const double* x, double* y);
// z[i] = a * x[i]
void scale(std::size_t n, double a, const double* x, double* z);
void add(std::size_t n, const double* x, const double* y, double* z);
void sub(std::size_t n, const double* x, const double* y, double* z);
void mul(std::size_t n, const double* x, const double* y, double* z);

bool all_finite(std::size_t n, const double* x);

namespace detail {
struct KernelTable {
    double (*dot)(std::size_t, const double*, const double*);
    double (*sum)(std::size_t, const double*);
    double (*max_value)(std::size_t, const double*);
    void (*axpy)(std::size_t, double, const double*, double*);
    void (*scale)(std::size_t, double, const double*, double*);
    void (*add)(std::size_t, const double*, const double*, double*);
    void (*sub)(std::size_t, const double*, const double*, double*);
    void (*mul)(std::size_t, const double*, const double*, double*);
    bool (*all_finite)(std::size_t, const double*);
};
const KernelTable& scalar_table();
#if defined(__x86_64__) || defined(_M_X64)
const KernelTable& avx2_table();
#endif
}  // namespace detail

}  // namespace navrep::kern
