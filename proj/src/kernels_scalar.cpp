#include <cmath>
#include <cstddef>

#include "navrep/kernels.hpp"

// Reference kernels. Plain loops, one rounding per arithmetic op; this TU is
// compiled with -ffp-contract=off so the compiler cannot fuse mul+add.

namespace navrep::kern::detail {

namespace {

double s_dot(std::size_t n, const double* x, const double* y) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i] * y[i];
    return acc;
}

double s_sum(std::size_t n, const double* x) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += x[i];
    return acc;
}

double s_max(std::size_t n, const double* x) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = x[i] > m ? x[i] : m;
    return m;
}

void s_axpy(std::size_t n, double a, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void s_scale(std::size_t n, double a, const double* x, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = a * x[i];
}

void s_add(std::size_t n, const double* x, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] + y[i];
}

void s_sub(std::size_t n, const double* x, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] - y[i];
}

void s_mul(std::size_t n, const double* x, const double* y, double* z) {
    for (std::size_t i = 0; i < n; ++i) z[i] = x[i] * y[i];
}

bool s_all_finite(std::size_t n, const double* x) {
    for (std::size_t i = 0; i < n; ++i) {
        if (!std::isfinite(x[i])) return false;
    }
    return true;
}

}  // namespace

const KernelTable& scalar_table() {
    static const KernelTable t{s_dot, s_sum, s_max, s_axpy, s_scale, s_add, s_sub, s_mul, s_all_finite};
    return t;
}

}  // namespace navrep::kern::detail
