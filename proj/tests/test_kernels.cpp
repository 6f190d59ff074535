#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <vector>

#include "vila/kernels.hpp"
#include "vila/rng.hpp"

using namespace vila;

TEST_CASE("matmul_serial matches hand-computed 2x3 * 3x2") {
    // [1 2 3; 4 5 6] * [7 8; 9 10; 11 12] = [58 64; 139 154]
    std::vector<double> a{1, 2, 3, 4, 5, 6};
    std::vector<double> b{7, 8, 9, 10, 11, 12};
    std::vector<double> out(4);
    kernels::matmul_serial(a.data(), b.data(), out.data(), 2, 3, 2);
    CHECK(out == std::vector<double>{58, 64, 139, 154});
}

TEST_CASE("omp kernel is bit-identical to serial across shapes") {
    const int shapes[][3] = {{1, 1, 1},    {1, 64, 1},   {7, 13, 5},
                             {64, 64, 64}, {33, 128, 9}, {257, 31, 65}};
    for (const auto& s : shapes) {
        const int m = s[0], k = s[1], n = s[2];
        auto a = gaussian_vector(std::size_t(m) * k, fnv1a("bench_a") + m);
        auto b = gaussian_vector(std::size_t(k) * n, fnv1a("bench_b") + n);
        std::vector<double> ref(std::size_t(m) * n), par(std::size_t(m) * n);
        kernels::matmul_serial(a.data(), b.data(), ref.data(), m, k, n);
        kernels::matmul_omp(a.data(), b.data(), par.data(), m, k, n);
        for (std::size_t i = 0; i < ref.size(); ++i) {
            INFO("shape ", m, "x", k, "x", n, " index ", i);
            CHECK(ref[i] == par[i]);  // exact, same per-row summation order
        }
    }
}

TEST_CASE("identity is a left and right unit") {
    const int n = 17;
    auto a = gaussian_vector(std::size_t(n) * n, 99);
    std::vector<double> eye(std::size_t(n) * n, 0.0);
    for (int i = 0; i < n; ++i) eye[std::size_t(i) * n + i] = 1.0;
    std::vector<double> left(a.size()), right(a.size());
    kernels::matmul_omp(eye.data(), a.data(), left.data(), n, n, n);
    kernels::matmul_omp(a.data(), eye.data(), right.data(), n, n, n);
    CHECK(left == a);
    CHECK(right == a);
}
