#include "tba/kernels.hpp"

#include <cmath>

// Reference backend. The branch shapes below are chosen to match the AVX2
// instruction semantics exactly (maxpd/minpd return the second operand on
// equality, 0.0 * x keeps the sign of x, accumulators start at +0.0).
namespace tba::kernels {
namespace {

void k_add(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] + b[i];
}

void k_sub(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] - b[i];
}

void k_mul(double* dst, const double* a, const double* b, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = a[i] * b[i];
}

void k_scale(double* dst, const double* x, double c, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = c * x[i];
}

void k_axpy(double* dst, const double* x, double a, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = dst[i] + a * x[i];
}

void k_clamp(double* dst, const double* x, double lo, double hi, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) {
        double t = x[i] > lo ? x[i] : lo;
        dst[i] = t < hi ? t : hi;
    }
}

void k_relu(double* dst, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void k_relu_grad_acc(double* dst, const double* x, const double* g, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dst[i] = dst[i] + (x[i] > 0.0 ? g[i] : 0.0);
}

void k_sign(double* dst, const double* x, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i)
        dst[i] = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
}

double k_sum(const double* x, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += x[i];
        a1 += x[i + 1];
        a2 += x[i + 2];
        a3 += x[i + 3];
    }
    double s = (a0 + a1) + (a2 + a3);
    for (; i < n; ++i) s += x[i];
    return s;
}

double k_dot(const double* x, const double* y, std::size_t n) {
    double a0 = 0.0, a1 = 0.0, a2 = 0.0, a3 = 0.0;
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        a0 += x[i] * y[i];
        a1 += x[i + 1] * y[i + 1];
        a2 += x[i + 2] * y[i + 2];
        a3 += x[i + 3] * y[i + 3];
    }
    double s = (a0 + a1) + (a2 + a3);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double k_max_abs(const double* x, std::size_t n) {
    double m = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double a = std::fabs(x[i]);
        if (a > m) m = a;
    }
    return m;
}

}  // namespace

const Table& scalar_table() {
    static const Table t = {
        "scalar", k_add,  k_sub,          k_mul,  k_scale, k_axpy, k_clamp,
        k_relu,   k_relu_grad_acc, k_sign, k_sum,  k_dot,   k_max_abs,
    };
    return t;
}

}  // namespace tba::kernels
