#pragma once

// Event-triggered two-head Gaussian policy.
//
// A shared tanh trunk (3 -> 64 -> 64) feeds four linear outputs: mean and log
// standard deviation for the trigger head and for the moment head. Both raw
// draws are squashed by tanh. The flip fires when the squashed trigger value
// exceeds the threshold; the squashed moment value maps affinely onto
// [0, 8] N mm.

#include <array>
#include <filesystem>
#include <random>

#include "perch/env.hpp"
#include "perch/nn/mlp.hpp"
#include "perch/sensing.hpp"

namespace perch {

inline constexpr double kLogStdMin = -20.0;
inline constexpr double kLogStdMax = 2.0;
inline constexpr double kSquashEps = 1e-6;
inline constexpr std::size_t kObsDim = 3;
inline constexpr std::size_t kActDim = 2;

struct PolicyParams {
    nn::Mlp net;

    static PolicyParams create(std::mt19937_64& rng, std::size_t hidden = 64);
    // All weights zero: both heads N(0, 1).
    static PolicyParams zeros(std::size_t hidden = 64);

    friend bool operator==(const PolicyParams&, const PolicyParams&) = default;
};

struct HeadOutputs {
    double mu_trg = 0.0;
    double log_std_trg = 0.0;
    double mu_my = 0.0;
    double log_std_my = 0.0;
};

// Clamps the raw log-std outputs.
HeadOutputs heads_from_raw(const double* raw);

HeadOutputs policy_forward(const PolicyParams& params, const NormalizedObs& obs);

struct ActionSample {
    double u_trg = 0.0;
    double u_my = 0.0;
    double a_trg = 0.0;
    double a_my = 0.0;
    bool trigger = false;
    double moment = 0.0;  // N m
    double log_prob = 0.0;
};

double moment_from_squashed(double a_my);

// Deterministic given the standard-normal draws.
ActionSample action_from_noise(const HeadOutputs& heads, double eps_trg, double eps_my,
                               double threshold = 0.0);

ActionSample sample_action(const HeadOutputs& heads, std::mt19937_64& rng, double threshold = 0.0);

// Action at the distribution means (evaluation mode).
ActionSample mean_action(const HeadOutputs& heads, double threshold = 0.0);

// Strict a_trg > threshold. Throws std::invalid_argument if |threshold| >= 1.
bool trigger_decision(const ActionSample& sample, double threshold);

// 1 - Phi((atanh(threshold) - mu) / sigma)
double trigger_probability(double mu, double sigma, double threshold);

// Joint log density of squashed actions, tanh-corrected.
double squashed_log_prob(const HeadOutputs& heads, double u_trg, double u_my);

StepAction to_step_action(const ActionSample& sample);

// Reparameterized draw with partial derivatives of log_prob and of the
// squashed actions with respect to the head outputs (mu, log_std), holding
// the standard-normal noise fixed. Derivatives with respect to a clamped
// log_std are zero.
struct ReparamSample {
    std::array<double, kActDim> a{};
    double log_prob = 0.0;
    std::array<double, kActDim> dlogp_dmu{};
    std::array<double, kActDim> dlogp_dlogstd{};
    std::array<double, kActDim> da_dmu{};
    std::array<double, kActDim> da_dlogstd{};
};

// raw points at the four unclamped network outputs.
ReparamSample reparam_sample(const double* raw, const std::array<double, kActDim>& eps);

// Binary weights at `path` plus a JSON sidecar at path + ".json" with the
// observation scales and threshold.
void save_policy(const std::filesystem::path& path, const PolicyParams& params,
                 const SensingParams& sensing, double threshold);

struct LoadedPolicy {
    PolicyParams params;
    SensingParams sensing;
    double threshold = 0.0;
};

// Throws std::runtime_error on a missing or malformed file.
LoadedPolicy load_policy(const std::filesystem::path& path);

}  // namespace perch
