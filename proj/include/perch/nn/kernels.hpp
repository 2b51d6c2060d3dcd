#pragma once

// Inner loops of the dense-network engine. Every kernel has a scalar
// reference implementation and an AVX2+FMA variant; the variant is picked at
// runtime from CPU features unless overridden. Results of the two agree to
// rounding (the SIMD variant reassociates sums and fuses multiply-adds).
//
// Layouts are row-major. A dense layer with `in` inputs and `out` outputs
// stores its weights as an in x out matrix.

#include <cstddef>
#include <string_view>

namespace perch::nn {

struct KernelTable {
    const char* name;

    // y[b, :] = bias + x[b, :] * w            x: batch x in, w: in x out
    void (*affine)(const double* x, const double* w, const double* bias, double* y,
                   std::size_t batch, std::size_t in, std::size_t out);

    // dx[b, i] = sum_o dy[b, o] * w[i, o]
    void (*affine_grad_input)(const double* dy, const double* w, double* dx,
                              std::size_t batch, std::size_t in, std::size_t out);

    // dw[i, o] += sum_b x[b, i] * dy[b, o];  dbias[o] += sum_b dy[b, o]
    void (*affine_grad_params)(const double* x, const double* dy, double* dw, double* dbias,
                               std::size_t batch, std::size_t in, std::size_t out);

    // y = tanh(x), elementwise
    void (*tanh_forward)(const double* x, double* y, std::size_t n);

    // dx = dy * (1 - y^2), elementwise (y is the tanh output)
    void (*tanh_backward)(const double* y, const double* dy, double* dx, std::size_t n);

    // Adam step with bias corrections c1 = 1 - beta1^t, c2 = 1 - beta2^t.
    void (*adam)(double* param, const double* grad, double* m, double* v, std::size_t n,
                 double lr, double beta1, double beta2, double eps, double c1, double c2);

    // target = rho * online + (1 - rho) * target
    void (*polyak)(double* target, const double* online, double rho, std::size_t n);
};

const KernelTable& scalar_kernels();

// Null when the binary was built without the AVX2 translation unit.
const KernelTable* avx2_kernels();

bool cpu_has_avx2_fma();

enum class KernelMode { Auto, Scalar, Avx2 };

// Selected table. The first call honours PERCH_KERNELS=scalar|avx2|auto.
const KernelTable& kernels();

// Throws std::runtime_error if Avx2 is requested but unavailable.
void set_kernel_mode(KernelMode mode);
KernelMode parse_kernel_mode(std::string_view text);

}  // namespace perch::nn
