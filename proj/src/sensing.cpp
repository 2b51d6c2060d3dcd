#include "perch/sensing.hpp"

#include <algorithm>
#include <stdexcept>

namespace perch {

void SensingParams::validate() const {
    if (!(tau_cap > 0.0)) throw std::invalid_argument("tau_cap must be positive");
    if (!(tau_scale > 0.0) || !(theta_x_scale > 0.0) || !(d_ceil_scale > 0.0)) {
        throw std::invalid_argument("normalization scales must be positive");
    }
    if (tau_noise < 0.0 || theta_x_noise < 0.0 || d_ceil_noise < 0.0) {
        throw std::invalid_argument("noise standard deviations must be non-negative");
    }
}

Observation observe(const RigidBodyState& state, const WorldParams& world,
                    const SensingParams& params) {
    const double d = world.ceiling_height - state.position.z;
    if (!(d > 0.0)) throw std::domain_error("observe: vehicle is not below the ceiling");
    const double vz = state.velocity.z;
    Observation obs;
    obs.d_ceil = d;
    obs.tau = vz > 0.0 ? std::min(d / vz, params.tau_cap) : params.tau_cap;
    obs.theta_x = state.velocity.x / d;
    if (!std::isfinite(obs.tau) || !std::isfinite(obs.theta_x)) {
        throw std::domain_error("observe: non-finite cue");
    }
    return obs;
}

Observation observe_noisy(const RigidBodyState& state, const WorldParams& world,
                          const SensingParams& params, std::mt19937_64& rng) {
    Observation obs = observe(state, world, params);
    if (!params.noisy()) return obs;
    std::normal_distribution<double> n01(0.0, 1.0);
    obs.tau = std::clamp(obs.tau + params.tau_noise * n01(rng), 0.0, params.tau_cap);
    obs.theta_x += params.theta_x_noise * n01(rng);
    obs.d_ceil = std::max(0.0, obs.d_ceil + params.d_ceil_noise * n01(rng));
    return obs;
}

NormalizedObs normalize(const Observation& obs, const SensingParams& params) {
    return {obs.tau / params.tau_scale, obs.theta_x / params.theta_x_scale,
            obs.d_ceil / params.d_ceil_scale};
}

}  // namespace perch
