#include "navrep/kernels.hpp"

#include <cstdlib>
#include <stdexcept>
#include <string>

namespace navrep::kern {

namespace {

using detail::KernelTable;

Backend detect_default() {
    if (const char* env = std::getenv("NAVREP_KERNELS")) {
        Backend b = parse_backend(env);
        if (!backend_supported(b))
            throw std::invalid_argument("NAVREP_KERNELS requests unsupported backend: " + std::string(env));
        return b;
    }
#if defined(__x86_64__) || defined(_M_X64)
    if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Backend::avx2;
#endif
    return Backend::scalar;
}

struct Dispatch {
    Backend backend;
    const KernelTable* table;
    Dispatch() : backend(detect_default()), table(&table_for(backend)) {}
    static const KernelTable& table_for(Backend b) {
#if defined(__x86_64__) || defined(_M_X64)
        if (b == Backend::avx2) return detail::avx2_table();
#endif
        return detail::scalar_table();
    }
};

Dispatch& dispatch() {
    static Dispatch d;
    return d;
}

}  // namespace

Backend active_backend() { return dispatch().backend; }

bool backend_supported(Backend b) {
    if (b == Backend::scalar) return true;
#if defined(__x86_64__) || defined(_M_X64)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

void set_backend(Backend b) {
    if (!backend_supported(b))
        throw std::invalid_argument(std::string("kernel backend not supported on this CPU: ") + backend_name(b));
    dispatch().backend = b;
    dispatch().table = &Dispatch::table_for(b);
}

const char* backend_name(Backend b) { return b == Backend::avx2 ? "avx2" : "scalar"; }

Backend parse_backend(const std::string& name) {
    if (name == "scalar") return Backend::scalar;
    if (name == "avx2") return Backend::avx2;
    throw std::invalid_argument("unknown kernel backend: " + name + " (expected scalar|avx2)");
}

double dot(std::size_t n, const double* x, const double* y) { return dispatch().table->dot(n, x, y); }
double sum(std::size_t n, const double* x) { return dispatch().table->sum(n, x); }
double max_value(std::size_t n, const double* x) { return dispatch().table->max_value(n, x); }
void axpy(std::size_t n, double a, const double* x, double* y) { dispatch().table->axpy(n, a, x, y); }
void scale(std::size_t n, double a, const double* x, double* z) { dispatch().table->scale(n, a, x, z); }
void add(std::size_t n, const double* x, const double* y, double* z) { dispatch().table->add(n, x, y, z); }
void sub(std::size_t n, const double* x, const double* y, double* z) { dispatch().table->sub(n, x, y, z); }
void mul(std::size_t n, const double* x, const double* y, double* z) { dispatch().table->mul(n, x, y, z); }
bool all_finite(std::size_t n, const double* x) { return dispatch().table->all_finite(n, x); }

}  // namespace navrep::kern
