// Timing comparison of the serial reference matmul against the OpenMP kernel.

#include <chrono>
#include <cstdio>
#include <functional>
#include <vector>

#include "vila/kernels.hpp"
#include "vila/rng.hpp"

using Clock = std::chrono::steady_clock;

static double time_ms(const std::function<void()>& fn, int reps) {
    fn();  // warm up
    auto t0 = Clock::now();
    for (int r = 0; r < reps; ++r) fn();
    auto t1 = Clock::now();
    return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

int main() {
    std::printf("%8s %8s %8s  %12s %12s %8s\n", "m", "k", "n", "serial_ms", "omp_ms",
                "speedup");
    const int sizes[][3] = {{64, 64, 64},   {128, 128, 128}, {256, 256, 256},
                            {512, 512, 512}, {96, 64, 3},     {1024, 64, 16}};
    for (const auto& s : sizes) {
        const int m = s[0], k = s[1], n = s[2];
        auto a = vila::gaussian_vector(std::size_t(m) * k, 1);
        auto b = vila::gaussian_vector(std::size_t(k) * n, 2);
        std::vector<double> out(std::size_t(m) * n);
        const int reps = m * k * n > (1 << 24) ? 3 : 20;
        double serial = time_ms(
            [&] { vila::kernels::matmul_serial(a.data(), b.data(), out.data(), m, k, n); },
            reps);
        double omp = time_ms(
            [&] { vila::kernels::matmul_omp(a.data(), b.data(), out.data(), m, k, n); },
            reps);
        std::printf("%8d %8d %8d  %12.3f %12.3f %8.2f\n", m, k, n, serial, omp,
                    serial / omp);
    }
    return 0;
}
