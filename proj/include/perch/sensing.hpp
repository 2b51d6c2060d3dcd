#pragma once

// Emulated visual cues computed from simulator ground truth.

#include <array>
#include <random>

#include "perch/sim_core.hpp"

namespace perch {

struct Observation {
    double tau = 0.0;      // s, time-to-contact
    double theta_x = 0.0;  // 1/s, lateral velocity over ceiling distance
    double d_ceil = 0.0;   // m

    friend bool operator==(const Observation&, const Observation&) = default;
};

struct SensingParams {
    double tau_cap = 5.0;
    // Network inputs are obs / scale.
    double tau_scale = 1.0;
    double theta_x_scale = 10.0;
    double d_ceil_scale = 2.0;
    // Zero-mean Gaussian noise on each cue; off by default.
    double tau_noise = 0.0;
    double theta_x_noise = 0.0;
    double d_ceil_noise = 0.0;

    void validate() const;
    [[nodiscard]] bool noisy() const {
        return tau_noise > 0.0 || theta_x_noise > 0.0 || d_ceil_noise > 0.0;
    }
};

using NormalizedObs = std::array<double, 3>;

// tau = d / vz clipped to [0, tau_cap] (tau_cap when vz <= 0); theta_x = vx / d.
// Throws std::domain_error when the vehicle is at or above the ceiling.
Observation observe(const RigidBodyState& state, const WorldParams& world,
                    const SensingParams& params = {});

// Same cues with the configured noise added. Noisy tau is re-clipped and
// d_ceil kept non-negative.
Observation observe_noisy(const RigidBodyState& state, const WorldParams& world,
                          const SensingParams& params, std::mt19937_64& rng);

NormalizedObs normalize(const Observation& obs, const SensingParams& params);

}  // namespace perch
