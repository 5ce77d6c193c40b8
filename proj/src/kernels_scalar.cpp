#include "qase/kernels.hpp"

#include <algorithm>

namespace qase::kernels {
namespace {

double dot_ref(const double* x, const double* y, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += x[i] * y[i];
    return s;
}

void axpy_ref(double a, const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] += a * x[i];
}

void add_ref(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] + y[i];
}

void mul_ref(const double* x, const double* y, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] * y[i];
}

void scale_ref(double a, const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = a * x[i];
}

void relu_ref(const double* x, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? x[i] : 0.0;
}

void relu_grad_ref(const double* x, const double* g, double* out, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) out[i] = x[i] > 0.0 ? g[i] : 0.0;
}

double max_ref(const double* x, std::size_t n) {
    double m = x[0];
    for (std::size_t i = 1; i < n; ++i) m = std::max(m, x[i]);
    return m;
}

}  // namespace

const Ops& scalar_ops() {
    static const Ops ops = {"scalar",  dot_ref,  axpy_ref,      add_ref,
                            mul_ref,   scale_ref, relu_ref,     relu_grad_ref,
                            max_ref};
    return ops;
}

}  // namespace qase::kernels
