#pragma once

#include <cstddef>

// Data-parallel inner loops used by the tensor layer. A scalar reference
// implementation always exists; an AVX2 variant is selected at runtime when
// the CPU supports it. Set QASE_KERNELS=scalar to force the reference path.
namespace qase::kernels {

struct Ops {
    const char* name;
    // sum_i x[i]*y[i]
    double (*dot)(const double* x, const double* y, std::size_t n);
    // y[i] += a*x[i]
    void (*axpy)(double a, const double* x, double* y, std::size_t n);
    // out[i] = x[i] + y[i]
    void (*add)(const double* x, const double* y, double* out, std::size_t n);
    // out[i] = x[i] * y[i]
    void (*mul)(const double* x, const double* y, double* out, std::size_t n);
    // out[i] = a * x[i]
    void (*scale)(double a, const double* x, double* out, std::size_t n);
    // out[i] = max(x[i], 0)
    void (*relu)(const double* x, double* out, std::size_t n);
    // out[i] = x[i] > 0 ? g[i] : 0   (ReLU backward; subgradient at 0 is 0)
    void (*relu_grad)(const double* x, const double* g, double* out, std::size_t n);
    double (*max)(const double* x, std::size_t n);  // n >= 1
};

const Ops& scalar_ops();
bool avx2_available();
const Ops& avx2_ops();  // valid only when avx2_available()

// Runtime-selected implementation, fixed for process lifetime.
const Ops& active();

}  // namespace qase::kernels
