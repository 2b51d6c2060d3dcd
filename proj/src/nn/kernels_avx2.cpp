// Compiled with -mavx2 -mfma; only reached after a runtime CPU check.

#include <immintrin.h>

#include <cmath>

#include "perch/nn/kernels.hpp"

namespace perch::nn {
namespace {

inline double hsum(__m256d v) {
    const __m128d lo = _mm256_castpd256_pd128(v);
    const __m128d hi = _mm256_extractf128_pd(v, 1);
    const __m128d s = _mm_add_pd(lo, hi);
    return _mm_cvtsd_f64(_mm_add_sd(s, _mm_unpackhi_pd(s, s)));
}

void affine(const double* x, const double* w, const double* bias, double* y, std::size_t batch,
            std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* xr = x + b * in;
        double* yr = y + b * out;
        std::size_t o = 0;
        for (; o + 16 <= out; o += 16) {
            __m256d a0 = _mm256_loadu_pd(bias + o);
            __m256d a1 = _mm256_loadu_pd(bias + o + 4);
            __m256d a2 = _mm256_loadu_pd(bias + o + 8);
            __m256d a3 = _mm256_loadu_pd(bias + o + 12);
            for (std::size_t i = 0; i < in; ++i) {
                const __m256d xi = _mm256_broadcast_sd(xr + i);
                const double* wr = w + i * out + o;
                a0 = _mm256_fmadd_pd(xi, _mm256_loadu_pd(wr), a0);
                a1 = _mm256_fmadd_pd(xi, _mm256_loadu_pd(wr + 4), a1);
                a2 = _mm256_fmadd_pd(xi, _mm256_loadu_pd(wr + 8), a2);
                a3 = _mm256_fmadd_pd(xi, _mm256_loadu_pd(wr + 12), a3);
            }
            _mm256_storeu_pd(yr + o, a0);
            _mm256_storeu_pd(yr + o + 4, a1);
            _mm256_storeu_pd(yr + o + 8, a2);
            _mm256_storeu_pd(yr + o + 12, a3);
        }
        for (; o + 4 <= out; o += 4) {
            __m256d a = _mm256_loadu_pd(bias + o);
            for (std::size_t i = 0; i < in; ++i) {
                a = _mm256_fmadd_pd(_mm256_broadcast_sd(xr + i), _mm256_loadu_pd(w + i * out + o), a);
            }
            _mm256_storeu_pd(yr + o, a);
        }
        for (; o < out; ++o) {
            double s = bias[o];
            for (std::size_t i = 0; i < in; ++i) s = std::fma(xr[i], w[i * out + o], s);
            yr[o] = s;
        }
    }
}

void affine_grad_input(const double* dy, const double* w, double* dx, std::size_t batch,
                       std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double* dyr = dy + b * out;
        for (std::size_t i = 0; i < in; ++i) {
            const double* wr = w + i * out;
            __m256d s0 = _mm256_setzero_pd();
            __m256d s1 = _mm256_setzero_pd();
            std::size_t o = 0;
            for (; o + 8 <= out; o += 8) {
                s0 = _mm256_fmadd_pd(_mm256_loadu_pd(dyr + o), _mm256_loadu_pd(wr + o), s0);
                s1 = _mm256_fmadd_pd(_mm256_loadu_pd(dyr + o + 4), _mm256_loadu_pd(wr + o + 4), s1);
            }
            for (; o + 4 <= out; o += 4) {
                s0 = _mm256_fmadd_pd(_mm256_loadu_pd(dyr + o), _mm256_loadu_pd(wr + o), s0);
            }
            double s = hsum(_mm256_add_pd(s0, s1));
            for (; o < out; ++o) s = std::fma(dyr[o], wr[o], s);
            dx[b * in + i] = s;
        }
    }
}

void affine_grad_params(const double* x, const double* dy, double* dw, double* dbias,
                        std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t i = 0; i < in; ++i) {
        double* dwr = dw + i * out;
        std::size_t o = 0;
        for (; o + 16 <= out; o += 16) {
            __m256d a0 = _mm256_loadu_pd(dwr + o);
            __m256d a1 = _mm256_loadu_pd(dwr + o + 4);
            __m256d a2 = _mm256_loadu_pd(dwr + o + 8);
            __m256d a3 = _mm256_loadu_pd(dwr + o + 12);
            for (std::size_t b = 0; b < batch; ++b) {
                const __m256d xb = _mm256_broadcast_sd(x + b * in + i);
                const double* dyr = dy + b * out + o;
                a0 = _mm256_fmadd_pd(xb, _mm256_loadu_pd(dyr), a0);
                a1 = _mm256_fmadd_pd(xb, _mm256_loadu_pd(dyr + 4), a1);
                a2 = _mm256_fmadd_pd(xb, _mm256_loadu_pd(dyr + 8), a2);
                a3 = _mm256_fmadd_pd(xb, _mm256_loadu_pd(dyr + 12), a3);
            }
            _mm256_storeu_pd(dwr + o, a0);
            _mm256_storeu_pd(dwr + o + 4, a1);
            _mm256_storeu_pd(dwr + o + 8, a2);
            _mm256_storeu_pd(dwr + o + 12, a3);
        }
        for (; o + 4 <= out; o += 4) {
            __m256d a = _mm256_loadu_pd(dwr + o);
            for (std::size_t b = 0; b < batch; ++b) {
                a = _mm256_fmadd_pd(_mm256_broadcast_sd(x + b * in + i),
                                    _mm256_loadu_pd(dy + b * out + o), a);
            }
            _mm256_storeu_pd(dwr + o, a);
        }
        for (; o < out; ++o) {
            double s = dwr[o];
            for (std::size_t b = 0; b < batch; ++b) s = std::fma(x[b * in + i], dy[b * out + o], s);
            dwr[o] = s;
        }
    }
    std::size_t o = 0;
    for (; o + 4 <= out; o += 4) {
        __m256d a = _mm256_loadu_pd(dbias + o);
        for (std::size_t b = 0; b < batch; ++b) a = _mm256_add_pd(a, _mm256_loadu_pd(dy + b * out + o));
        _mm256_storeu_pd(dbias + o, a);
    }
    for (; o < out; ++o) {
        for (std::size_t b = 0; b < batch; ++b) dbias[o] += dy[b * out + o];
    }
}

// exp(x) for x in [0, 40]: Cody-Waite reduction to |r| <= ln2/2, then a
// degree-12 Taylor polynomial. Relative error is a few ulp.
inline __m256d exp_small(__m256d x) {
    const __m256d log2e = _mm256_set1_pd(1.4426950408889634);
    const __m256d ln2_hi = _mm256_set1_pd(6.93145751953125e-1);
    const __m256d ln2_lo = _mm256_set1_pd(1.42860682030941723212e-6);
    const __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
    __m256d r = _mm256_fnmadd_pd(n, ln2_hi, x);
    r = _mm256_fnmadd_pd(n, ln2_lo, r);
    static constexpr double c[13] = {1.0,
                                     1.0,
                                     1.0 / 2,
                                     1.0 / 6,
                                     1.0 / 24,
                                     1.0 / 120,
                                     1.0 / 720,
                                     1.0 / 5040,
                                     1.0 / 40320,
                                     1.0 / 362880,
                                     1.0 / 3628800,
                                     1.0 / 39916800,
                                     1.0 / 479001600};
    __m256d p = _mm256_set1_pd(c[12]);
    for (int k = 11; k >= 0; --k) p = _mm256_fmadd_pd(p, r, _mm256_set1_pd(c[k]));
    // 2^n through the exponent field; n is a small non-negative integer.
    const __m256d magic = _mm256_set1_pd(6755399441055744.0);  // 2^52 + 2^51
    __m256i ni = _mm256_sub_epi64(_mm256_castpd_si256(_mm256_add_pd(n, magic)), _mm256_castpd_si256(magic));
    ni = _mm256_slli_epi64(_mm256_add_epi64(ni, _mm256_set1_epi64x(1023)), 52);
    return _mm256_mul_pd(p, _mm256_castsi256_pd(ni));
}

// tanh(x) = sign(x) * (1 - 2 / (exp(2|x|) + 1)); saturates past |x| = 20.
// min returns its second operand for NaN, so NaN inputs propagate.
void tanh_forward(const double* x, double* y, std::size_t n) {
    const __m256d sign_mask = _mm256_set1_pd(-0.0);
    const __m256d one = _mm256_set1_pd(1.0);
    const __m256d two = _mm256_set1_pd(2.0);
    const __m256d cap = _mm256_set1_pd(40.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d v = _mm256_loadu_pd(x + i);
        const __m256d sign = _mm256_and_pd(v, sign_mask);
        const __m256d a2 = _mm256_min_pd(cap, _mm256_mul_pd(two, _mm256_andnot_pd(sign_mask, v)));
        const __m256d e = exp_small(a2);
        const __m256d t = _mm256_sub_pd(one, _mm256_div_pd(two, _mm256_add_pd(e, one)));
        _mm256_storeu_pd(y + i, _mm256_or_pd(t, sign));
    }
    for (; i < n; ++i) y[i] = std::tanh(x[i]);
}

void tanh_backward(const double* y, const double* dy, double* dx, std::size_t n) {
    const __m256d one = _mm256_set1_pd(1.0);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d yv = _mm256_loadu_pd(y + i);
        const __m256d g = _mm256_fnmadd_pd(yv, yv, one);
        _mm256_storeu_pd(dx + i, _mm256_mul_pd(_mm256_loadu_pd(dy + i), g));
    }
    for (; i < n; ++i) dx[i] = dy[i] * (1.0 - y[i] * y[i]);
}

void adam(double* param, const double* grad, double* m, double* v, std::size_t n, double lr,
          double beta1, double beta2, double eps, double c1, double c2) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b1c = _mm256_set1_pd(1.0 - beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d b2c = _mm256_set1_pd(1.0 - beta2);
    const __m256d inv_c1 = _mm256_set1_pd(1.0 / c1);
    const __m256d inv_c2 = _mm256_set1_pd(1.0 / c2);
    const __m256d lrv = _mm256_set1_pd(lr);
    const __m256d epsv = _mm256_set1_pd(eps);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d g = _mm256_loadu_pd(grad + i);
        const __m256d mv = _mm256_fmadd_pd(b1, _mm256_loadu_pd(m + i), _mm256_mul_pd(b1c, g));
        const __m256d vv =
            _mm256_fmadd_pd(b2, _mm256_loadu_pd(v + i), _mm256_mul_pd(b2c, _mm256_mul_pd(g, g)));
        _mm256_storeu_pd(m + i, mv);
        _mm256_storeu_pd(v + i, vv);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(_mm256_mul_pd(vv, inv_c2)), epsv);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(lrv, _mm256_mul_pd(mv, inv_c1)), denom);
        _mm256_storeu_pd(param + i, _mm256_sub_pd(_mm256_loadu_pd(param + i), step));
    }
    for (; i < n; ++i) {
        m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
        v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
        param[i] -= lr * (m[i] / c1) / (std::sqrt(v[i] / c2) + eps);
    }
}

void polyak(double* target, const double* online, double rho, std::size_t n) {
    const __m256d r = _mm256_set1_pd(rho);
    const __m256d rc = _mm256_set1_pd(1.0 - rho);
    std::size_t i = 0;
    for (; i + 4 <= n; i += 4) {
        const __m256d t = _mm256_mul_pd(rc, _mm256_loadu_pd(target + i));
        _mm256_storeu_pd(target + i, _mm256_fmadd_pd(r, _mm256_loadu_pd(online + i), t));
    }
    for (; i < n; ++i) target[i] = rho * online[i] + (1.0 - rho) * target[i];
}

constexpr KernelTable kAvx2{
    "avx2", affine, affine_grad_input, affine_grad_params, tanh_forward, tanh_backward, adam, polyak,
};

}  // namespace

const KernelTable* avx2_kernels() { return &kAvx2; }

}  // namespace perch::nn
