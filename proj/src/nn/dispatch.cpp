#include <atomic>
#include <cstdlib>
#include <stdexcept>
#include <string>

#include "perch/nn/kernels.hpp"

namespace perch::nn {

#ifndef PERCH_HAVE_AVX2
const KernelTable* avx2_kernels() { return nullptr; }
#endif

bool cpu_has_avx2_fma() {
#if defined(__x86_64__) || defined(__i386__)
    return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
    return false;
#endif
}

namespace {

const KernelTable* resolve(KernelMode mode) {
    switch (mode) {
        case KernelMode::Scalar: return &scalar_kernels();
        case KernelMode::Avx2:
            if (!avx2_kernels() || !cpu_has_avx2_fma()) {
                throw std::runtime_error("AVX2 kernels requested but not available");
            }
            return avx2_kernels();
        case KernelMode::Auto:
            if (avx2_kernels() && cpu_has_avx2_fma()) return avx2_kernels();
            return &scalar_kernels();
    }
    return &scalar_kernels();
}

std::atomic<const KernelTable*> g_active{nullptr};

}  // namespace

KernelMode parse_kernel_mode(std::string_view text) {
    if (text == "auto" || text.empty()) return KernelMode::Auto;
    if (text == "scalar") return KernelMode::Scalar;
    if (text == "avx2") return KernelMode::Avx2;
    throw std::invalid_argument("unknown kernel mode '" + std::string(text) + "'");
}

const KernelTable& kernels() {
    const KernelTable* k = g_active.load(std::memory_order_acquire);
    if (k) return *k;
    const char* env = std::getenv("PERCH_KERNELS");
    const KernelTable* chosen = resolve(parse_kernel_mode(env ? env : ""));
    const KernelTable* expected = nullptr;
    g_active.compare_exchange_strong(expected, chosen, std::memory_order_acq_rel);
    return *g_active.load(std::memory_order_acquire);
}

void set_kernel_mode(KernelMode mode) { g_active.store(resolve(mode), std::memory_order_release); }

}  // namespace perch::nn
