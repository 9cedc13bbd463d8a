#include <arm_neon.h>

#include "rulealign/kernels.hpp"

namespace rulealign::kernels {
namespace {

double dot_neon(const double* a, const double* b, std::size_t n) {
    float64x2_t acc0 = vdupq_n_f64(0.0);
    float64x2_t acc1 = vdupq_n_f64(0.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        acc0 = vfmaq_f64(acc0, vld1q_f64(a + i), vld1q_f64(b + i));
        acc1 = vfmaq_f64(acc1, vld1q_f64(a + i + 2), vld1q_f64(b + i + 2));
    }
    acc0 = vaddq_f64(acc0, acc1);
    double acc = vgetq_lane_f64(acc0, 0) + vgetq_lane_f64(acc0, 1);
    for (; i < n; ++i) {
        acc += a[i] * b[i];
    }
    return acc;
}

void axpy_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] += alpha * x[i];
    }
}

void scale_neon(double alpha, const double* x, double* y, std::size_t n) {
    const float64x2_t va = vdupq_n_f64(alpha);
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vmulq_f64(va, vld1q_f64(x + i)));
    }
    for (; i < n; ++i) {
        y[i] = alpha * x[i];
    }
}

void mul_acc_neon(const double* a, const double* b, double* y, std::size_t n) {
    std::size_t i = 0;
    for (; i + 2 <= n; i += 2) {
        vst1q_f64(y + i, vfmaq_f64(vld1q_f64(y + i), vld1q_f64(a + i), vld1q_f64(b + i)));
    }
    for (; i < n; ++i) {
        y[i] += a[i] * b[i];
    }
}

constexpr KernelTable kNeon{"neon", dot_neon, axpy_neon, scale_neon, mul_acc_neon};

}  // namespace

const KernelTable* neon_table() { return &kNeon; }

}  // namespace rulealign::kernels
