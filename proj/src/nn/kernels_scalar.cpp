#include <cmath>

#include "perch/nn/kernels.hpp"

namespace perch::nn {
namespace {

void affine(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        double* yr = y + b * out;
        const double* xr = x + b * in;
        for (std::size_t o = 0; o < out; ++o) yr[o] = bias[o];
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            const double* wr = w + i * out;
            for (std::size_t o = 0; o < out; ++o) yr[o] += xi * wr[o];
        }
    }
}

void affine_grad_input(const double* dy, const double* w, double* dx, std::size_t batch,
                       std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* dyr = dy + b * out;
        for (std::size_t i = 0; i < in; ++i) {
            const double* wr = w + i * out;
            double s = 0.0;
            for (std::size_t o = 0; o < out; ++o) s += dyr[o] * wr[o];
            dx[b * in + i] = s;
        }
    }
}

void affine_grad_params(const double* x, const double* dy, double* dw, double* dbias,
                        std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x + b * in;
        const double* dyr = dy + b * out;
        for (std::size_t i = 0; i < in; ++i) {
            const double xi = xr[i];
            double* dwr = dw + i * out;
            for (std::size_t o = 0; o < out; ++o) dwr[o] += xi * dyr[o];
        }
        for (std::size_t o = 0; o < out; ++o) dbias[o] += dyr[o];
    }
}

void tanh_forward(const double* x, double* y, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(const double* y, const double* dy, double* dx, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n, double lr,
          double beta1, double beta2, double eps, double c1, double c2) {
    for (std::size_t i = 0; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        const double mh = m[i] / c1;
        const double vh = v[i] / c2;
        param[i] -= lr * mh / (std::sqrt(vh) + eps);
    }
}

void polyak(double* target, const double* online, double rho, std::size_t n) {
    for (std::size_t i = 0; i < n; ++i) target[i] = rho * online[i] + (1.0 - rho) * target[i];
}

constexpr KernelTable kScalar{
    "scalar", affine, affine_grad_input, affine_grad_params, tanh_forward, tanh_backward, adam, polyak,
};

}  // namespace

const KernelTable& scalar_kernels() { return kScalar; }

}  // namespace perch::nn
