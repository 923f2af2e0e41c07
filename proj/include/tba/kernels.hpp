#pragma once

#include <cstddef>

// Data-parallel primitives over contiguous double spans. Two backends share
// one contract: elementwise kernels round once per element, and reductions
// accumulate in a fixed 4-lane blocked order (lane L sums elements with
// index = L mod 4, lanes combined as (l0+l1)+(l2+l3), scalar tail appended).
// Under that contract the scalar reference and the AVX2 variant are
// bit-identical, so runtime dispatch never changes numerical results.
namespace tba::kernels {

struct Table {
    const char* name;
    void (*add)(double* dst, const double* a, const double* b, std::size_t n);
    void (*sub)(double* dst, const double* a, const double* b, std::size_t n);
    void (*mul)(double* dst, const double* a, const double* b, std::size_t n);
    void (*scale)(double* dst, const double* x, double c, std::size_t n);
    // dst[i] += a * x[i]
    void (*axpy)(double* dst, const double* x, double a, std::size_t n);
    void (*clamp)(double* dst, const double* x, double lo, double hi, std::size_t n);
    void (*relu)(double* dst, const double* x, std::size_t n);
    // dst[i] += (x[i] > 0 ? g[i] : 0)
    void (*relu_grad_acc)(double* dst, const double* x, const double* g, std::size_t n);
    void (*sign)(double* dst, const double* x, std::size_t n);
    double (*sum)(const double* x, std::size_t n);
    double (*dot)(const double* x, const double* y, std::size_t n);
    double (*max_abs)(const double* x, std::size_t n);
};

enum class Backend { Auto, Scalar, Avx2 };

const Table& scalar_table();
const Table* avx2_table();  // nullptr when unavailable on this host

// Active table; first call honors the TBA_KERNELS env var (scalar|avx2).
const Table& active();
// Force a backend (tests); returns false if the backend is unavailable.
bool select(Backend b);
const char* backend_name();

inline void add(double* d, const double* a, const double* b, std::size_t n) { active().add(d, a, b, n); }
inline void sub(double* d, const double* a, const double* b, std::size_t n) { active().sub(d, a, b, n); }
inline void mul(double* d, const double* a, const double* b, std::size_t n) { active().mul(d, a, b, n); }
inline void scale(double* d, const double* x, double c, std::size_t n) { active().scale(d, x, c, n); }
inline void axpy(double* d, const double* x, double a, std::size_t n) { active().axpy(d, x, a, n); }
inline void clamp(double* d, const double* x, double lo, double hi, std::size_t n) { active().clamp(d, x, lo, hi, n); }
inline void relu(double* d, const double* x, std::size_t n) { active().relu(d, x, n); }
inline void relu_grad_acc(double* d, const double* x, const double* g, std::size_t n) { active().relu_grad_acc(d, x, g, n); }
inline void sign(double* d, const double* x, std::size_t n) { active().sign(d, x, n); }
inline double sum(const double* x, std::size_t n) { return active().sum(x, n); }
inline double dot(const double* x, const double* y, std::size_t n) { return active().dot(x, y, n); }
inline double max_abs(const double* x, std::size_t n) { return active().max_abs(x, n); }

}  // namespace tba::kernels
