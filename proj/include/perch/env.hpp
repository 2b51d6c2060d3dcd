#pragma once

// Landing episodes: approach sampling, domain randomization, the 100 Hz
// decision loop, the open-loop flip/contact/swing rollout that follows a
// trigger, and the terminal reward.

#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json_fwd.hpp>

#include "perch/contact.hpp"
#include "perch/sensing.hpp"
#include "perch/sim_core.hpp"

namespace perch {

struct ApproachCondition {
    double speed = 2.5;      // m/s
    double angle_deg = 60.0; // 0 horizontal, 90 vertical

    void validate() const;
    [[nodiscard]] Vec2 velocity() const;
};

struct ApproachRanges {
    double speed_min = 1.5;
    double speed_max = 3.5;
    double angle_min_deg = 30.0;
    double angle_max_deg = 90.0;
};

struct DomainRandomization {
    double mass_sigma = 0.5e-3;     // kg
    double inertia_sigma = 1.5e-6;  // kg m^2
};

struct RewardParams {
    double c0 = 10.0;  // 1/m
    double c1 = 20.0;  // 1/s
    double w_d = 0.05;
    double w_tau = 0.1;
    double w_theta = 0.2;
    double w_legs = 0.65;
    double body_contact_divisor = 3.0;
    double tau_target = 0.2;         // s, center of the r_tau plateau
    double theta_saturation = 120.0; // deg

    void validate() const;
};

struct RewardComponents {
    double r_d = 0.0;
    double r_tau = 0.0;
    double r_theta = 0.0;
    double r_legs = 0.0;
    double total = 0.0;

    friend bool operator==(const RewardComponents&, const RewardComponents&) = default;
};

// Terminal reward of an episode. Untriggered episodes score r_d only.
RewardComponents episode_reward(const LandingOutcome& outcome, const RewardParams& params);

struct EnvConfig {
    VehicleParams vehicle;
    WorldParams world;
    LegGeometry legs;
    SensingParams sensing;
    RewardParams reward;
    DomainRandomization randomization;
    ApproachRanges approach;
    double physics_dt = 1e-3;   // s
    double control_dt = 1e-2;   // s
    double trigger_threshold = 0.0;
    // Start distance below the ceiling: max(min_start, lead_time * vz + margin).
    double start_min_distance = 1.0;
    double start_lead_time = 0.5;
    double start_margin = 0.3;
    double approach_timeout = 3.0;      // s without a trigger
    double post_trigger_timeout = 2.0;  // s

    void validate() const;
    [[nodiscard]] int substeps() const;
};

ApproachCondition sample_approach(std::mt19937_64& rng, const ApproachRanges& ranges = {});

// Gaussian perturbation of mass and pitch inertia; non-positive draws are redrawn.
VehicleParams randomize_inertia(const VehicleParams& nominal, std::mt19937_64& rng,
                                const DomainRandomization& dr = {});

double start_distance(const ApproachCondition& cond, const EnvConfig& config);

// What the policy decided at one control step.
struct StepAction {
    bool trigger = false;
    double moment = 0.0;  // N m, used only when trigger is set
};

struct StepResult {
    Observation observation;
    double reward = 0.0;
    bool done = false;
};

// One sample of a simulated trajectory, for replay output.
struct TracePoint {
    double time = 0.0;
    std::string phase;  // approach, flip, pinned
    Vec2 position;
    Vec2 velocity;
    double pitch = 0.0;
    double pitch_rate = 0.0;
    MotorState motors;
    std::optional<Observation> observation;
};

struct EpisodeRecord {
    std::uint64_t episode = 0;
    ApproachCondition condition;
    double mass = 0.0;
    double inertia_yy = 0.0;
    bool triggered = false;
    int trigger_step = -1;
    Observation trigger_observation;
    double moment = 0.0;
    LandingOutcome outcome;
    RewardComponents reward;
    int steps = 0;
    std::uint64_t noise_seed = 0;  // sensor-noise stream seed; unused when noise is off
};

void to_json(nlohmann::json& j, const EpisodeRecord& r);
void from_json(const nlohmann::json& j, EpisodeRecord& r);

// Single-threaded episode state machine.
class LandingEnv {
public:
    explicit LandingEnv(EnvConfig config);

    // Samples the approach and randomized inertia from rng, then resets.
    Observation reset(std::mt19937_64& rng);
    Observation reset(const ApproachCondition& condition, const VehicleParams& vehicle);

    StepResult step(const StepAction& action);

    // Seeds the sensor-noise stream used from the next reset on.
    void seed_noise(std::uint64_t seed);

    // Episode index stamped on the next record.
    void set_episode_id(std::uint64_t id) { record_.episode = id; }

    [[nodiscard]] bool done() const { return done_; }
    [[nodiscard]] const EpisodeRecord& record() const { return record_; }
    [[nodiscard]] const EnvConfig& config() const { return config_; }
    [[nodiscard]] const RigidBodyState& state() const { return state_; }
    [[nodiscard]] const std::vector<Observation>& observations() const { return observations_; }

    // Record every physics step into trace() (off by default).
    void set_tracing(bool on) { tracing_ = on; }
    [[nodiscard]] const std::vector<TracePoint>& trace() const { return trace_; }

private:
    Observation sense();
    void finish(EpisodeTrace trace);
    void rollout_after_trigger(double moment, EpisodeTrace& trace);
    void push_trace(const RigidBodyState& s, const char* phase, bool with_obs);
    void push_pinned_trace(const PinnedState& p);

    EnvConfig config_;
    VehicleParams vehicle_;
    RigidBodyState state_;
    PairCommand trim_;
    EpisodeRecord record_;
    std::vector<Observation> observations_;
    std::vector<TracePoint> trace_;
    std::mt19937_64 noise_rng_;
    std::uint64_t noise_seed_ = 0;
    double d_min_ = 0.0;
    bool active_ = false;
    bool done_ = false;
    bool tracing_ = false;
};

// Re-simulates a logged episode from its condition, inertia, trigger step and
// moment. The returned record's outcome matches the logged one exactly.
// observations receives the 100 Hz policy inputs up to the trigger.
EpisodeRecord replay_episode(const EnvConfig& config, const EpisodeRecord& logged,
                             std::vector<TracePoint>* trace = nullptr,
                             std::vector<Observation>* observations = nullptr);

}  // namespace perch
