#include <doctest.h>

#include <random>
#include <vector>

#include "rulealign/kernels.hpp"

using namespace rulealign::kernels;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::vector<double> v(n);
    for (auto& x : v) x = u(rng);
    return v;
}

struct Pin {
    explicit Pin(const KernelTable& t) : saved(&active()) { set_active(t); }
    ~Pin() { set_active(*saved); }
    const KernelTable* saved;
};

}  // namespace

TEST_CASE("scalar primitives on small inputs") {
    const auto& s = scalar_table();
    const double a[] = {1, 2, 3};
    const double b[] = {4, 5, 6};
    CHECK(s.dot(a, b, 3) == 32.0);
    CHECK(s.dot(a, b, 0) == 0.0);
    double y[] = {1, 1, 1};
    s.axpy(2.0, a, y, 3);
    CHECK(y[2] == 7.0);
    s.scale(0.5, b, y, 3);
    CHECK(y[0] == 2.0);
    s.mul_acc(a, b, y, 3);
    CHECK(y[1] == 12.5);
}

TEST_CASE("matrix helpers match loops") {
    Pin pin(scalar_table());
    const std::size_t in = 5, out = 3;
    const auto x = random_vec(in, 1);
    const auto w = random_vec(in * out, 2);
    std::vector<double> y(out);
    vec_mat(x, w, out, y);
    for (std::size_t j = 0; j < out; ++j) {
        double acc = 0.0;
        for (std::size_t i = 0; i < in; ++i) acc += x[i] * w[i * out + j];
        CHECK(y[j] == doctest::Approx(acc).epsilon(1e-14));
    }
    const auto dy = random_vec(out, 3);
    std::vector<double> dx(in, 0.0);
    mat_vec_acc(w, out, dy, dx);
    for (std::size_t i = 0; i < in; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < out; ++j) acc += w[i * out + j] * dy[j];
        CHECK(dx[i] == doctest::Approx(acc).epsilon(1e-14));
    }
    std::vector<double> dw(in * out, 0.0);
    outer_acc(x, dy, dw);
    CHECK(dw[2 * out + 1] == doctest::Approx(x[2] * dy[1]).epsilon(1e-15));
}

TEST_CASE("the selected variant agrees with the scalar table") {
    const KernelTable* simd = avx2_table() ? avx2_table() : neon_table();
    if (!simd) {
        MESSAGE("no SIMD variant available; scalar only");
        return;
    }
    const auto& s = scalar_table();
    for (std::size_t n : {0u, 1u, 3u, 4u, 7u, 8u, 33u, 1000u}) {
        const auto a = random_vec(n, n + 10);
        const auto b = random_vec(n, n + 20);
        CHECK(simd->dot(a.data(), b.data(), n) == doctest::Approx(s.dot(a.data(), b.data(), n)).epsilon(1e-12));
        auto y1 = random_vec(n, n + 30);
        auto y2 = y1;
        s.axpy(0.3, a.data(), y1.data(), n);
        simd->axpy(0.3, a.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
        s.mul_acc(a.data(), b.data(), y1.data(), n);
        simd->mul_acc(a.data(), b.data(), y2.data(), n);
        for (std::size_t i = 0; i < n; ++i) CHECK(y1[i] == doctest::Approx(y2[i]).epsilon(1e-14));
        s.scale(-1.5, a.data(), y1.data(), n);
        simd->scale(-1.5, a.data(), y2.data(), n);
        CHECK(y1 == y2);
    }
}
