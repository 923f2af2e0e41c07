#include "tba/kernels.hpp"

#include <cmath>
#include <immintrin.h>

// AVX2 backend. No fma: mul-then-add keeps per-element rounding identical to
// the scalar reference. Reductions use one 4-lane vector accumulator and the
// same (l0+l1)+(l2+l3) combine as the scalar backend.
namespace tba::kernels {
namespace {

void k_add(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] + b[i];
}

void k_sub(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_sub_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] - b[i];
}

void k_mul(double* dst, const double* a, const double* b, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i)));
    for (; i < n; ++i) dst[i] = a[i] * b[i];
}

void k_scale(double* dst, const double* x, double c, std::size_t n) {
    const __m256d vc = _mm256_set1_pd(c);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_mul_pd(vc, _mm256_loadu_pd(x + i)));
    for (; i < n; ++i) dst[i] = c * x[i];
}

void k_axpy(double* dst, const double* x, double a, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d prod = _mm256_mul_pd(va, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), prod));
    }
    for (; i < n; ++i) dst[i] = dst[i] + a * x[i];
}

void k_clamp(double* dst, const double* x, double lo, double hi, std::size_t n) {
    const __m256d vlo = _mm256_set1_pd(lo), vhi = _mm256_set1_pd(hi);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d t = _mm256_max_pd(_mm256_loadu_pd(x + i), vlo);
        _mm256_storeu_pd(dst + i, _mm256_min_pd(t, vhi));
    }
    for (; i < n; ++i) {
        double t = x[i] > lo ? x[i] : lo;
        dst[i] = t < hi ? t : hi;
    }
}

void k_relu(double* dst, const double* x, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        _mm256_storeu_pd(dst + i, _mm256_max_pd(_mm256_loadu_pd(x + i), z));
    for (; i < n; ++i) dst[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void k_relu_grad_acc(double* dst, const double* x, const double* g, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), z, _CMP_GT_OQ);
        __m256d gated = _mm256_and_pd(mask, _mm256_loadu_pd(g + i));
        _mm256_storeu_pd(dst + i, _mm256_add_pd(_mm256_loadu_pd(dst + i), gated));
    }
    for (; i < n; ++i) dst[i] = dst[i] + (x[i] > 0.0 ? g[i] : 0.0);
}

void k_sign(double* dst, const double* x, std::size_t n) {
    const __m256d z = _mm256_setzero_pd();
    const __m256d one = _mm256_set1_pd(1.0), mone = _mm256_set1_pd(-1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d v = _mm256_loadu_pd(x + i);
        __m256d pos = _mm256_and_pd(_mm256_cmp_pd(v, z, _CMP_GT_OQ), one);
        __m256d neg = _mm256_and_pd(_mm256_cmp_pd(v, z, _CMP_LT_OQ), mone);
        _mm256_storeu_pd(dst + i, _mm256_or_pd(pos, neg));
    }
    for (; i < n; ++i) dst[i] = x[i] > 0.0 ? 1.0 : (x[i] < 0.0 ? -1.0 : 0.0);
}

double combine_tail_sum(__m256d acc, const double* x, std::size_t i, std::size_t n) {
    double lanes[4];
    _mm256_storeu_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += x[i];
    return s;
}

double k_sum(const double* x, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) acc = _mm256_add_pd(acc, _mm256_loadu_pd(x + i));
    return combine_tail_sum(acc, x, i, n);
}

double k_dot(const double* x, const double* y, std::size_t n) {
    __m256d acc = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    double lanes[4];
    _mm256_storeu_pd(lanes, acc);
    double s = (lanes[0] + lanes[1]) + (lanes[2] + lanes[3]);
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

double k_max_abs(const double* x, std::size_t n) {
    const __m256d absmask = _mm256_castsi256_pd(_mm256_set1_epi64x(0x7fffffffffffffffLL));
    __m256d vm = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4)
        vm = _mm256_max_pd(vm, _mm256_and_pd(absmask, _mm256_loadu_pd(x + i)));
    double lanes[4];
    _mm256_storeu_pd(lanes, vm);
    double m = lanes[0];
    for (int l = 1; l < 4; ++l)
        if (lanes[l] > m) m = lanes[l];
    for (; i < n; ++i) {
        double a = std::fabs(x[i]);
        if (a > m) m = a;
    }
    return m;
}

}  // namespace

const Table* avx2_table() {
    if (!__builtin_cpu_supports("avx2")) return nullptr;
    static const Table t = {
        "avx2",  k_add,  k_sub,          k_mul,  k_scale, k_axpy, k_clamp,
        k_relu,  k_relu_grad_acc, k_sign, k_sum,  k_dot,   k_max_abs,
    };
    return &t;
}

}  // namespace tba::kernels
