#pragma once
// Dense double-precision primitives used by the policy's forward and backward
// passes. Every primitive has a scalar reference implementation; SIMD variants
// (AVX2+FMA on x86-64, NEON on AArch64) are selected once at runtime.
//
// Selection can be forced with RULEALIGN_SIMD=scalar|avx2|neon.

#include <cstddef>
#include <span>
#include <string_view>

namespace rulealign::kernels {

struct KernelTable {
    std::string_view name;
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, std::size_t n);
    // y[i] += alpha * x[i]
    void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] = alpha * x[i]
    void (*scale)(double alpha, const double* x, double* y, std::size_t n);
    // y[i] += a[i] * b[i]
    void (*mul_acc)(const double* a, const double* b, double* y, std::size_t n);
};

const KernelTable& scalar_table();
// nullptr when the variant is not compiled in or the CPU lacks support.
const KernelTable* avx2_table();
const KernelTable* neon_table();

// The table in use by the free functions below.
const KernelTable& active();
// Replaces the active table (tests use this to pin a variant).
void set_active(const KernelTable& table);

inline double dot(std::span<const double> a, std::span<const double> b) {
    return active().dot(a.data(), b.data(), a.size());
}

inline void axpy(double alpha, std::span<const double> x, std::span<double> y) {
    active().axpy(alpha, x.data(), y.data(), x.size());
}

inline void scale(double alpha, std::span<const double> x, std::span<double> y) {
    active().scale(alpha, x.data(), y.data(), x.size());
}

inline void mul_acc(std::span<const double> a, std::span<const double> b, std::span<double> y) {
    active().mul_acc(a.data(), b.data(), y.data(), a.size());
}

// y = x W, W row-major [in x out]; y is overwritten.
void vec_mat(std::span<const double> x, std::span<const double> w, std::size_t out, std::span<double> y);

// dx[i] += sum_j W[i, j] * dy[j]
void mat_vec_acc(std::span<const double> w, std::size_t out, std::span<const double> dy, std::span<double> dx);

// dW[i, :] += x[i] * dy
void outer_acc(std::span<const double> x, std::span<const double> dy, std::span<double> dw);

}  // namespace rulealign::kernels
