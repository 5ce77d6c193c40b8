#include "qase/kernels.hpp"

#if defined(__x86_64__) || defined(_M_X64)
#define QASE_HAVE_AVX2_BUILD 1
#include <immintrin.h>
#else
#define QASE_HAVE_AVX2_BUILD 0
#endif

#include <algorithm>
#include <stdexcept>

namespace qase::kernels {

#if QASE_HAVE_AVX2_BUILD

namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    return _mm_cvtsd_f64(_mm_add_sd(lo, sh));
}

double dot_avx2(const double* x, const double* y, std::size_t n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i + 4), _mm256_loadu_pd(y + i + 4), acc1);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i), acc0);
    }
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_avx2(double a, const double* x, double* y, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += a * x[i];
}

void add_avx2(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_add_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_avx2(const double* x, const double* y, double* out, std::size_t n) {
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(_mm256_loadu_pd(x + i), _mm256_loadu_pd(y + i)));
    }
    for (; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_avx2(double a, const double* x, double* out, std::size_t n) {
    const __m256d va = _mm256_set1_pd(a);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_mul_pd(va, _mm256_loadu_pd(x + i)));
    }
    for (; i < n; ++i) out[i] = a * x[i];
}

void relu_avx2(const double* x, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        _mm256_storeu_pd(out + i, _mm256_max_pd(_mm256_loadu_pd(x + i), zero));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_avx2(const double* x, const double* g, double* out, std::size_t n) {
    const __m256d zero = _mm256_setzero_pd();
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d mask = _mm256_cmp_pd(_mm256_loadu_pd(x + i), zero, _CMP_GT_OQ);
        _mm256_storeu_pd(out + i, _mm256_and_pd(mask, _mm256_loadu_pd(g + i)));
    }
    for (; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

double max_avx2(const double* x, std::size_t n) {
    std::size_t i = 0;
    double m = x[0];
    if (n >= 4) {
        __m256d vm = _mm256_loadu_pd(x);
        for (i = 4; i + 4 <= n; i += 4) {
            vm = _mm256_max_pd(vm, _mm256_loadu_pd(x + i));
        }
        alignas(32) double lane[4];
        _mm256_store_pd(lane, vm);
        m = std::max(std::max(lane[0], lane[1]), std::max(lane[2], lane[3]));
    }
    for (; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

}  // namespace

bool avx2_available() { return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma"); }

const Ops& avx2_ops() {
    static const Ops ops = {"avx2",    dot_avx2,  axpy_avx2,      add_avx2,
                            mul_avx2,  scale_avx2, relu_avx2,     relu_grad_avx2,
                            max_avx2};
    return ops;
}

#else

bool avx2_available() { return false; }

const Ops& avx2_ops() { throw std::runtime_error("avx2 kernels not built on this target"); }

#endif

}  // namespace qase::kernels
