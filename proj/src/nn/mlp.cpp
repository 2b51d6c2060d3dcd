#include "perch/nn/mlp.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "perch/nn/kernels.hpp"

namespace perch::nn {

Mlp::Mlp(std::vector<std::size_t> sizes) : sizes_(std::move(sizes)) {
    if (sizes_.size() < 2) throw std::invalid_argument("an MLP needs at least one layer");
    std::size_t off = 0;
    for (std::size_t l = 0; l + 1 < sizes_.size(); ++l) {
        if (sizes_[l] == 0 || sizes_[l + 1] == 0) throw std::invalid_argument("zero-width layer");
        w_off_.push_back(off);
        off += sizes_[l] * sizes_[l + 1];
        b_off_.push_back(off);
        off += sizes_[l + 1];
    }
    params_.assign(off, 0.0);
}

void Mlp::init(std::mt19937_64& rng) {
    for (std::size_t l = 0; l < layers(); ++l) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(sizes_[l]));
        std::uniform_real_distribution<double> u(-bound, bound);
        const std::size_t end = b_off_[l] + sizes_[l + 1];
        for (std::size_t i = w_off_[l]; i < end; ++i) params_[i] = u(rng);
    }
}

const double* Mlp::forward(const double* input, std::size_t batch, Workspace& ws) const {
    const KernelTable& k = kernels();
    ws.batch = batch;
    ws.act.resize(sizes_.size());
    ws.act[0].assign(input, input + batch * sizes_[0]);
    for (std::size_t l = 0; l < layers(); ++l) {
        const std::size_t in = sizes_[l];
        const std::size_t out = sizes_[l + 1];
        std::vector<double>& y = ws.act[l + 1];
        y.resize(batch * out);
        k.affine(ws.act[l].data(), weight(l), bias(l), y.data(), batch, in, out);
        if (l + 1 < layers()) k.tanh_forward(y.data(), y.data(), y.size());
    }
    return ws.act.back().data();
}

void Mlp::backward(Workspace& ws, const double* d_output, double* grad, double* d_input) const {
    const KernelTable& k = kernels();
    const std::size_t batch = ws.batch;
    ws.delta.assign(d_output, d_output + batch * sizes_.back());
    for (std::size_t l = layers(); l-- > 0;) {
        const std::size_t in = sizes_[l];
        const std::size_t out = sizes_[l + 1];
        if (l + 1 < layers()) k.tanh_backward(ws.act[l + 1].data(), ws.delta.data(), ws.delta.data(), batch * out);
        k.affine_grad_params(ws.act[l].data(), ws.delta.data(), grad + w_off_[l], grad + b_off_[l], batch, in, out);
        if (l == 0 && d_input == nullptr) break;
        ws.delta_prev.resize(batch * in);
        k.affine_grad_input(ws.delta.data(), weight(l), ws.delta_prev.data(), batch, in, out);
        if (l == 0) {
            std::copy(ws.delta_prev.begin(), ws.delta_prev.end(), d_input);
        } else {
            std::swap(ws.delta, ws.delta_prev);
        }
    }
}

void Mlp::check_finite(const char* what) const {
    for (std::size_t i = 0; i < params_.size(); ++i) {
        if (!std::isfinite(params_[i])) {
            throw std::domain_error(std::string(what) + ": non-finite parameter at index " +
                                    std::to_string(i));
        }
    }
}

void Adam::reset(std::size_t n) {
    step = 0;
    m.assign(n, 0.0);
    v.assign(n, 0.0);
}

void Adam::update(std::span<double> params, std::span<const double> grad) {
    if (m.size() != params.size()) reset(params.size());
    if (grad.size() != params.size()) throw std::invalid_argument("Adam: gradient size mismatch");
    ++step;
    const double c1 = 1.0 - std::pow(beta1, static_cast<double>(step));
    const double c2 = 1.0 - std::pow(beta2, static_cast<double>(step));
    kernels().adam(params.data(), grad.data(), m.data(), v.data(), params.size(), lr, beta1, beta2,
                   eps, c1, c2);
}

void soft_update(Mlp& target, const Mlp& online, double rho) {
    if (target.sizes() != online.sizes()) throw std::invalid_argument("soft_update: shape mismatch");
    if (!(rho >= 0.0 && rho <= 1.0)) throw std::invalid_argument("soft_update: rho outside [0, 1]");
    auto t = target.params();
    auto o = online.params();
    if (rho == 1.0) {
        std::copy(o.begin(), o.end(), t.begin());
        return;
    }
    if (rho == 0.0) return;
    kernels().polyak(t.data(), o.data(), rho, t.size());
}

}  // namespace perch::nn
