#pragma once

// Small dense networks with tanh hidden layers and a linear output layer,
// with hand-written reverse-mode gradients. All parameters live in one flat
// vector: for each layer the in x out weight matrix followed by the bias.

#include <cstddef>
#include <random>
#include <span>
#include <vector>

namespace perch::nn {

class Mlp {
public:
    // Per-batch activations kept for the backward pass.
    struct Workspace {
        std::size_t batch = 0;
        std::vector<std::vector<double>> act;  // act[0] is the input
        std::vector<double> delta;
        std::vector<double> delta_prev;
    };

    Mlp() = default;
    explicit Mlp(std::vector<std::size_t> sizes);

    // Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for weights and biases.
    void init(std::mt19937_64& rng);

    [[nodiscard]] const std::vector<std::size_t>& sizes() const { return sizes_; }
    [[nodiscard]] std::size_t layers() const { return sizes_.empty() ? 0 : sizes_.size() - 1; }
    [[nodiscard]] std::size_t input_size() const { return sizes_.front(); }
    [[nodiscard]] std::size_t output_size() const { return sizes_.back(); }
    [[nodiscard]] std::size_t num_params() const { return params_.size(); }

    [[nodiscard]] std::span<double> params() { return params_; }
    [[nodiscard]] std::span<const double> params() const { return params_; }

    [[nodiscard]] const double* weight(std::size_t layer) const { return params_.data() + w_off_[layer]; }
    [[nodiscard]] const double* bias(std::size_t layer) const { return params_.data() + b_off_[layer]; }

    // Returns a pointer to the batch x output_size result inside ws.
    const double* forward(const double* input, std::size_t batch, Workspace& ws) const;

    // Backpropagates d_output (batch x output_size) through the last forward
    // pass recorded in ws. Parameter gradients are accumulated into grad
    // (size num_params()); d_input (batch x input_size) is written if non-null.
    void backward(Workspace& ws, const double* d_output, double* grad, double* d_input) const;

    // Throws std::domain_error if any parameter is non-finite.
    void check_finite(const char* what) const;

    friend bool operator==(const Mlp&, const Mlp&) = default;

private:
    std::vector<std::size_t> sizes_;
    std::vector<std::size_t> w_off_;
    std::vector<std::size_t> b_off_;
    std::vector<double> params_;
};

struct Adam {
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long step = 0;
    std::vector<double> m;
    std::vector<double> v;

    void reset(std::size_t n);
    void update(std::span<double> params, std::span<const double> grad);

    friend bool operator==(const Adam&, const Adam&) = default;
};

// target = rho * online + (1 - rho) * target
void soft_update(Mlp& target, const Mlp& online, double rho);

}  // namespace perch::nn
