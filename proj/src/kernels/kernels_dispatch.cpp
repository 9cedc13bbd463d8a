#include <atomic>
#include <cstdlib>
#include <string_view>

#include "rulealign/kernels.hpp"

namespace rulealign::kernels {

#if !defined(RULEALIGN_HAVE_AVX2)
const KernelTable* avx2_table() { return nullptr; }
#endif
#if !defined(RULEALIGN_HAVE_NEON)
const KernelTable* neon_table() { return nullptr; }
#endif

namespace {

const KernelTable* detect() {
    const char* forced = std::getenv("RULEALIGN_SIMD");
    const std::string_view want = forced ? forced : "";
    if (want == "scalar") {
        return &scalar_table();
    }
    if (want == "avx2" && avx2_table()) {
        return avx2_table();
    }
    if (want == "neon" && neon_table()) {
        return neon_table();
    }
    if (const auto* t = avx2_table()) {
        return t;
    }
    if (const auto* t = neon_table()) {
        return t;
    }
    return &scalar_table();
}

std::atomic<const KernelTable*>& slot() {
    static std::atomic<const KernelTable*> table{detect()};
    return table;
}

}  // namespace

const KernelTable& active() { return *slot().load(std::memory_order_relaxed); }

void set_active(const KernelTable& table) { slot().store(&table, std::memory_order_relaxed); }

void vec_mat(std::span<const double> x, std::span<const double> w, std::size_t out, std::span<double> y) {
    const auto& k = active();
    for (std::size_t j = 0; j < out; ++j) {
        y[j] = 0.0;
    }
    for (std::size_t i = 0; i < x.size(); ++i) {
        k.axpy(x[i], w.data() + i * out, y.data(), out);
    }
}

void mat_vec_acc(std::span<const double> w, std::size_t out, std::span<const double> dy, std::span<double> dx) {
    const auto& k = active();
    for (std::size_t i = 0; i < dx.size(); ++i) {
        dx[i] += k.dot(w.data() + i * out, dy.data(), out);
    }
}

void outer_acc(std::span<const double> x, std::span<const double> dy, std::span<double> dw) {
    const auto& k = active();
    const std::size_t out = dy.size();
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i] != 0.0) {
            k.axpy(x[i], dy.data(), dw.data() + i * out, out);
        }
    }
}

}  // namespace rulealign::kernels
