#pragma once

#include <cstddef>

namespace vila::kernels {

// C[m x n] += is not supported; C is overwritten. Row-major throughout.
// The serial kernel is the reference; the OpenMP kernel parallelizes over
// output rows, so each element is produced by exactly one thread with the
// same accumulation order as the serial kernel (bit-identical results for
// any thread count).

inline void matmul_serial(const double* a, const double* b, double* c,
                          std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            const double ait = a[i * k + t];
            const double* bt = b + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ait * bt[j];
        }
    }
}

inline void matmul_omp(const double* a, const double* b, double* c,
                       std::size_t m, std::size_t k, std::size_t n) {
#if defined(VILA_HAVE_OPENMP)
#pragma omp parallel for schedule(static) if (m * k * n > 1u << 16)
#endif
    for (long long i = 0; i < (long long)m; ++i) {
        double* ci = c + i * n;
        for (std::size_t j = 0; j < n; ++j) ci[j] = 0.0;
        for (std::size_t t = 0; t < k; ++t) {
            const double ait = a[i * k + t];
            const double* bt = b + t * n;
            for (std::size_t j = 0; j < n; ++j) ci[j] += ait * bt[j];
        }
    }
}

// C[m x k] += A[m x n] * B[k x n]^T  (accumulating; used for dA in matmul backward)
inline void matmul_acc_nt_serial(const double* a, const double* b, double* c,
                                 std::size_t m, std::size_t n, std::size_t k) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * n;
        double* ci = c + i * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double* bt = b + t * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += ai[j] * bt[j];
            ci[t] += s;
        }
    }
}

inline void matmul_acc_nt_omp(const double* a, const double* b, double* c,
                              std::size_t m, std::size_t n, std::size_t k) {
#if defined(VILA_HAVE_OPENMP)
#pragma omp parallel for schedule(static) if (m * n * k > 1u << 16)
#endif
    for (long long i = 0; i < (long long)m; ++i) {
        const double* ai = a + std::size_t(i) * n;
        double* ci = c + std::size_t(i) * k;
        for (std::size_t t = 0; t < k; ++t) {
            const double* bt = b + t * n;
            double s = 0.0;
            for (std::size_t j = 0; j < n; ++j) s += ai[j] * bt[j];
            ci[t] += s;
        }
    }
}

// C[k x n] += A[m x k]^T * B[m x n]  (accumulating; used for dB in matmul backward)
inline void matmul_acc_tn_serial(const double* a, const double* b, double* c,
                                 std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* ai = a + i * k;
        const double* bi = b + i * n;
        for (std::size_t t = 0; t < k; ++t) {
            const double ait = ai[t];
            double* ct = c + t * n;
            for (std::size_t j = 0; j < n; ++j) ct[j] += ait * bi[j];
        }
    }
}

inline void matmul_acc_tn_omp(const double* a, const double* b, double* c,
                              std::size_t m, std::size_t k, std::size_t n) {
#if defined(VILA_HAVE_OPENMP)
    // parallel over output rows t: thread-exclusive writes, serial i order kept
#pragma omp parallel for schedule(static) if (m * k * n > 1u << 16)
    for (long long t = 0; t < (long long)k; ++t) {
        double* ct = c + std::size_t(t) * n;
        for (std::size_t i = 0; i < m; ++i) {
            const double ait = a[i * k + std::size_t(t)];
            const double* bi = b + i * n;
            for (std::size_t j = 0; j < n; ++j) ct[j] += ait * bi[j];
        }
    }
#else
    matmul_acc_tn_serial(a, b, c, m, k, n);
#endif
}

}  // namespace vila::kernels
