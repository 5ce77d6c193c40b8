#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"
#include "qase/kernels.hpp"

using namespace qase::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> d(-2.0, 2.0);
    std::vector<double> v(n);
    for (auto& x : v) x = d(rng);
    return v;
}

}  // namespace

TEST_CASE("scalar dot matches a long-double reference") {
    std::mt19937_64 rng(7);
    const auto x = random_vec(257, rng);
    const auto y = random_vec(257, rng);
    long double ref = 0.0L;
    for (std::size_t i = 0; i < x.size(); ++i) ref += (long double)x[i] * y[i];
    CHECK(scalar_ops().dot(x.data(), y.data(), x.size()) ==
          doctest::Approx((double)ref).epsilon(1e-12));
}

TEST_CASE("avx2 kernels agree with the scalar reference") {
    if (!avx2_available()) return;
    const Ops& s = scalar_ops();
    const Ops& v = avx2_ops();
    std::mt19937_64 rng(42);
    // Lengths straddling every vector-width boundary, plus a large one.
    for (std::size_t n : {1, 2, 3, 4, 5, 7, 8, 9, 15, 16, 17, 31, 33, 1000}) {
        const auto x = random_vec(n, rng);
        const auto y = random_vec(n, rng);

        CHECK(v.dot(x.data(), y.data(), n) ==
              doctest::Approx(s.dot(x.data(), y.data(), n)).epsilon(1e-13));
        CHECK(v.max(x.data(), n) == s.max(x.data(), n));

        std::vector<double> a(n), b(n);
        s.add(x.data(), y.data(), a.data(), n);
        v.add(x.data(), y.data(), b.data(), n);
        CHECK(a == b);
        s.mul(x.data(), y.data(), a.data(), n);
        v.mul(x.data(), y.data(), b.data(), n);
        CHECK(a == b);
        s.scale(1.7, x.data(), a.data(), n);
        v.scale(1.7, x.data(), b.data(), n);
        CHECK(a == b);
        s.relu(x.data(), a.data(), n);
        v.relu(x.data(), b.data(), n);
        CHECK(a == b);
        s.relu_grad(x.data(), y.data(), a.data(), n);
        v.relu_grad(x.data(), y.data(), b.data(), n);
        CHECK(a == b);

        a = y;
        b = y;
        s.axpy(0.3, x.data(), a.data(), n);
        v.axpy(0.3, x.data(), b.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-14));
    }
}

TEST_CASE("relu clamps negatives and keeps zero gradient at zero") {
    const double x[] = {-1.0, 0.0, 2.5};
    const double g[] = {10.0, 10.0, 10.0};
    double out[3];
    scalar_ops().relu(x, out, 3);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 2.5);
    scalar_ops().relu_grad(x, g, out, 3);
    CHECK(out[0] == 0.0);
    CHECK(out[1] == 0.0);
    CHECK(out[2] == 10.0);
}

TEST_CASE("active dispatch picks a known implementation") {
    const Ops& ops = active();
    const bool is_scalar = ops.name == std::string("scalar");
    const bool is_avx2 = ops.name == std::string("avx2");
    CHECK((is_scalar || is_avx2));
    if (is_avx2) CHECK(avx2_available());
}
