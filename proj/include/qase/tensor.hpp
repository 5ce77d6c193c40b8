#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace qase {

// Dense row-major array of doubles. Rank 1 or 2 in practice.
struct Tensor {
    std::vector<std::size_t> shape;
    std::vector<double> data;
    bool requires_grad = false;

    Tensor() = default;
    Tensor(std::vector<std::size_t> s, std::vector<double> d)
        : shape(std::move(s)), data(std::move(d)) {
        if (numel() != data.size())
            throw std::invalid_argument("tensor: shape/data size mismatch");
    }

    static Tensor zeros(std::vector<std::size_t> s) {
        std::size_t n = 1;
        for (auto e : s) n *= e;
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }
    static Tensor scalar(double v) { return Tensor({1}, {v}); }
    static Tensor row(std::vector<double> d) {
        std::size_t n = d.size();
        return Tensor({1, n}, std::move(d));
    }
    static Tensor matrix(std::size_t r, std::size_t c, std::vector<double> d) {
        return Tensor({r, c}, std::move(d));
    }

    std::size_t numel() const {
        std::size_t n = 1;
        for (auto e : shape) n *= e;
        return shape.empty() ? data.size() : n;
    }
    std::size_t rows() const { return shape.size() == 2 ? shape[0] : 1; }
    std::size_t cols() const { return shape.size() == 2 ? shape[1] : shape.at(0); }
    bool is_scalar() const { return numel() == 1; }
    double item() const {
        if (!is_scalar()) throw std::invalid_argument("tensor: item() on non-scalar");
        return data[0];
    }
    double& at(std::size_t i, std::size_t j) { return data[i * cols() + j]; }
    double at(std::size_t i, std::size_t j) const { return data[i * cols() + j]; }
    double* row_ptr(std::size_t i) { return data.data() + i * cols(); }
    const double* row_ptr(std::size_t i) const { return data.data() + i * cols(); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

std::string shape_str(const Tensor& t);

}  // namespace qase
