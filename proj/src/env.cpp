#include "perch/env.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include <nlohmann/json.hpp>

namespace perch {

void ApproachCondition::validate() const {
    if (!(speed > 0.0) || !std::isfinite(speed)) throw std::invalid_argument("speed must be positive");
    if (!(angle_deg > 0.0 && angle_deg <= 90.0)) {
        throw std::invalid_argument("flight angle must lie in (0, 90] deg");
    }
}

Vec2 ApproachCondition::velocity() const {
    return {speed * std::cos(angle_deg * kDeg), speed * std::sin(angle_deg * kDeg)};
}

void RewardParams::validate() const {
    if (!(c0 > 0.0) || !(c1 > 0.0)) throw std::invalid_argument("c0 and c1 must be positive");
    if (!(body_contact_divisor > 0.0)) throw std::invalid_argument("body_contact_divisor must be positive");
    if (!(theta_saturation > 0.0)) throw std::invalid_argument("theta_saturation must be positive");
}

RewardComponents episode_reward(const LandingOutcome& o, const RewardParams& p) {
    p.validate();
    RewardComponents r;
    const double d = std::abs(o.d_min);
    r.r_d = d > 0.0 ? std::min(1.0 / d, p.c0) / p.c0 : 1.0;
    if (o.triggered) {
        const double dt = std::abs(o.tau_trg - p.tau_target);
        r.r_tau = dt > 0.0 ? std::min(1.0 / dt, p.c1) / p.c1 : 1.0;
        const double th = std::abs(o.theta_impact);
        r.r_theta = th < p.theta_saturation ? th / p.theta_saturation : 1.0;
        r.r_legs = o.n_legs >= 3 ? 1.0 : (o.n_legs >= 1 ? 0.5 : 0.0);
        if (o.body_contact) r.r_legs /= p.body_contact_divisor;
    }
    r.total = p.w_d * r.r_d + p.w_tau * r.r_tau + p.w_theta * r.r_theta + p.w_legs * r.r_legs;
    return r;
}

void EnvConfig::validate() const {
    vehicle.validate();
    world.validate();
    legs.validate();
    sensing.validate();
    reward.validate();
    if (!(physics_dt > 0.0) || !(control_dt > 0.0)) throw std::invalid_argument("time steps must be positive");
    (void)substeps();
    if (!(std::abs(trigger_threshold) < 1.0)) throw std::invalid_argument("|trigger_threshold| must be < 1");
    if (randomization.mass_sigma < 0.0 || randomization.inertia_sigma < 0.0) {
        throw std::invalid_argument("randomization sigmas must be non-negative");
    }
    if (!(approach.speed_min > 0.0 && approach.speed_min <= approach.speed_max)) {
        throw std::invalid_argument("invalid approach speed range");
    }
    if (!(approach.angle_min_deg > 0.0 && approach.angle_min_deg <= approach.angle_max_deg &&
          approach.angle_max_deg <= 90.0)) {
        throw std::invalid_argument("invalid approach angle range");
    }
    if (!(start_min_distance > legs.reach())) throw std::invalid_argument("start distance inside leg reach");
    if (start_min_distance >= world.ceiling_height) {
        throw std::invalid_argument("start distance exceeds ceiling height");
    }
    if (!(approach_timeout > 0.0) || !(post_trigger_timeout > 0.0)) {
        throw std::invalid_argument("timeouts must be positive");
    }
}

int EnvConfig::substeps() const {
    const double ratio = control_dt / physics_dt;
    const long n = std::lround(ratio);
    if (n < 1 || std::abs(ratio - static_cast<double>(n)) > 1e-9) {
        throw std::invalid_argument("control_dt must be an integer multiple of physics_dt");
    }
    return static_cast<int>(n);
}

ApproachCondition sample_approach(std::mt19937_64& rng, const ApproachRanges& ranges) {
    std::uniform_real_distribution<double> speed(ranges.speed_min, ranges.speed_max);
    std::uniform_real_distribution<double> angle(ranges.angle_min_deg, ranges.angle_max_deg);
    ApproachCondition c;
    c.speed = speed(rng);
    c.angle_deg = angle(rng);
    return c;
}

VehicleParams randomize_inertia(const VehicleParams& nominal, std::mt19937_64& rng,
                                const DomainRandomization& dr) {
    VehicleParams out = nominal;
    auto draw = [&rng](double mean, double sigma) {
        if (sigma == 0.0) return mean;
        std::normal_distribution<double> n(mean, sigma);
        double v = n(rng);
        while (!(v > 0.0)) v = n(rng);
        return v;
    };
    out.mass = draw(nominal.mass, dr.mass_sigma);
    out.inertia_yy = draw(nominal.inertia_yy, dr.inertia_sigma);
    return out;
}

double start_distance(const ApproachCondition& cond, const EnvConfig& config) {
    return std::max(config.start_min_distance,
                    config.start_lead_time * cond.velocity().z + config.start_margin);
}

// ---------------------------------------------------------------------------

LandingEnv::LandingEnv(EnvConfig config) : config_(std::move(config)) { config_.validate(); }

Observation LandingEnv::reset(std::mt19937_64& rng) {
    const ApproachCondition cond = sample_approach(rng, config_.approach);
    const VehicleParams vehicle = randomize_inertia(config_.vehicle, rng, config_.randomization);
    seed_noise(rng());
    return reset(cond, vehicle);
}

void LandingEnv::seed_noise(std::uint64_t seed) {
    noise_seed_ = seed;
    noise_rng_.seed(seed);
}

Observation LandingEnv::reset(const ApproachCondition& condition, const VehicleParams& vehicle) {
    condition.validate();
    vehicle.validate();
    vehicle_ = vehicle;
    trim_ = hover_command(vehicle_, config_.world);

    state_ = RigidBodyState{};
    state_.position = {0.0, config_.world.ceiling_height - start_distance(condition, config_)};
    state_.velocity = condition.velocity();
    state_.motors = {trim_.front, trim_.rear};

    const std::uint64_t episode = record_.episode;
    record_ = EpisodeRecord{};
    record_.episode = episode;
    record_.noise_seed = noise_seed_;
    record_.condition = condition;
    record_.mass = vehicle.mass;
    record_.inertia_yy = vehicle.inertia_yy;

    observations_.clear();
    trace_.clear();
    d_min_ = config_.world.ceiling_height - state_.position.z;
    active_ = true;
    done_ = false;

    const Observation obs = sense();
    observations_.push_back(obs);
    if (tracing_) push_trace(state_, "approach", true);
    return obs;
}

Observation LandingEnv::sense() {
    if (config_.world.ceiling_height - state_.position.z <= 0.0) return Observation{};
    if (config_.sensing.noisy()) return observe_noisy(state_, config_.world, config_.sensing, noise_rng_);
    return observe(state_, config_.world, config_.sensing);
}

void LandingEnv::push_trace(const RigidBodyState& s, const char* phase, bool with_obs) {
    TracePoint tp;
    tp.time = s.time;
    tp.phase = phase;
    tp.position = s.position;
    tp.velocity = s.velocity;
    tp.pitch = s.pitch;
    tp.pitch_rate = s.pitch_rate;
    tp.motors = s.motors;
    if (with_obs && config_.world.ceiling_height - s.position.z > 0.0) {
        tp.observation = observe(s, config_.world, config_.sensing);
    }
    trace_.push_back(std::move(tp));
}

void LandingEnv::push_pinned_trace(const PinnedState& p) {
    TracePoint tp;
    tp.time = p.time;
    tp.phase = "pinned";
    tp.position = pinned_center_of_mass(p, config_.legs);
    tp.pitch = wrap_angle(p.swing_angle);
    tp.pitch_rate = p.swing_rate;
    // Velocity of the center of mass: omega x (com - pin).
    const Vec2 r = tp.position - p.pin_point;
    tp.velocity = {-p.swing_rate * r.z, p.swing_rate * r.x};
    trace_.push_back(std::move(tp));
}

StepResult LandingEnv::step(const StepAction& action) {
    if (!active_) throw std::logic_error("step called on a finished or unreset episode");

    EpisodeTrace trace;
    trace.triggered = false;

    if (action.trigger) {
        const Observation trig_obs = observations_.back();
        record_.triggered = true;
        record_.trigger_step = static_cast<int>(observations_.size()) - 1;
        record_.trigger_observation = trig_obs;
        record_.moment = action.moment;
        trace.triggered = true;
        trace.tau_trg = trig_obs.tau;
        rollout_after_trigger(action.moment, trace);
        finish(std::move(trace));
        return {sense(), record_.reward.total, true};
    }

    const int n = config_.substeps();
    const double dt = config_.physics_dt;
    for (int i = 0; i < n; ++i) {
        RigidBodyState next = step_free_flight(state_, trim_, vehicle_, config_.world, dt);
        if (auto ev = detect_contact(state_, next, config_.legs, config_.world)) {
            const RigidBodyState at = refine_contact(state_, trim_, dt, ev->kind, vehicle_,
                                                     config_.legs, config_.world);
            trace.events.push_back(make_event(ev->kind, at, config_.legs, config_.world));
            state_ = at;
            d_min_ = std::min(d_min_, config_.world.ceiling_height - state_.position.z);
            if (tracing_) push_trace(state_, "approach", false);
            finish(std::move(trace));
            return {sense(), record_.reward.total, true};
        }
        state_ = next;
        d_min_ = std::min(d_min_, config_.world.ceiling_height - state_.position.z);
        if (tracing_) push_trace(state_, "approach", true);
    }

    const Observation obs = sense();
    observations_.push_back(obs);
    if (state_.time >= config_.approach_timeout - 1e-12) {
        finish(std::move(trace));
        return {obs, record_.reward.total, true};
    }
    return {obs, 0.0, false};
}

void LandingEnv::finish(EpisodeTrace trace) {
    trace.terminated = true;
    trace.d_min = d_min_;
    record_.outcome = classify_outcome(trace);
    record_.reward = episode_reward(record_.outcome, config_.reward);
    record_.steps = static_cast<int>(observations_.size());
    active_ = false;
    done_ = true;
}

void LandingEnv::rollout_after_trigger(double moment, EpisodeTrace& trace) {
    const double dt = config_.physics_dt;
    const double ceil = config_.world.ceiling_height;
    const LegGeometry& legs = config_.legs;
    const double reach = legs.reach();
    const double t_end = state_.time + config_.post_trigger_timeout;

    FlipController flip(moment, state_.pitch, vehicle_);

    // Free flight until the first contact or until contact becomes impossible.
    std::optional<PinnedState> pinned;
    while (state_.time < t_end) {
        const PairCommand cmd = flip.command(state_);
        RigidBodyState next = step_free_flight(state_, cmd, vehicle_, config_.world, dt);
        if (auto ev = detect_contact(state_, next, legs, config_.world)) {
            const RigidBodyState at =
                refine_contact(state_, cmd, dt, ev->kind, vehicle_, legs, config_.world);
            const ContactEvent event = make_event(ev->kind, at, legs, config_.world);
            trace.events.push_back(event);
            state_ = at;
            d_min_ = std::min(d_min_, ceil - state_.position.z);
            if (tracing_) push_trace(state_, "flip", false);
            if (event.kind == ContactKind::ForeLegs) pinned = attach_pin(event, state_, vehicle_, legs);
            break;
        }
        state_ = next;
        d_min_ = std::min(d_min_, ceil - state_.position.z);
        if (tracing_) push_trace(state_, "flip", true);
        const bool unpowered = flip.motors_cut() || flip.moment() == 0.0;
        if (unpowered && state_.velocity.z <= 0.0 && ceil - state_.position.z > reach) return;
    }
    if (!pinned) return;

    // Pendulum swing about the fore-leg pivot.
    const Vec2 fore = legs.fore_tip();
    const Vec2 hind_rel = legs.hind_tip() - fore;
    auto hind_gap = [&](const PinnedState& p) {
        return ceil - (p.pin_point.z + body_to_world(hind_rel, p.swing_angle).z);
    };
    auto body_gap = [&](const PinnedState& p) {
        return ceil - (pinned_center_of_mass(p, legs).z + legs.body_radius);
    };

    PinnedState p = *pinned;
    const double t_pin_end = p.time + config_.post_trigger_timeout;
    while (p.time < t_pin_end) {
        const PinnedState next = step_pinned(p, vehicle_, legs, config_.world, dt);
        const double hg0 = hind_gap(p), hg1 = hind_gap(next);
        const double bg0 = body_gap(p), bg1 = body_gap(next);
        d_min_ = std::min(d_min_, ceil - pinned_center_of_mass(next, legs).z);
        if (tracing_) push_pinned_trace(next);

        auto emit = [&](ContactKind kind, double g0, double g1, Vec2 point) {
            const double f = g0 / (g0 - g1);
            ContactEvent ev;
            ev.kind = kind;
            ev.time = p.time + f * dt;
            ev.body_pitch_at_contact = wrap_angle(p.swing_angle + f * (next.swing_angle - p.swing_angle));
            ev.contact_point_world = {point.x, ceil};
            trace.events.push_back(ev);
        };
        if (hg0 > 0.0 && hg1 <= 0.0) {
            emit(ContactKind::HindLegs, hg0, hg1, next.pin_point + body_to_world(hind_rel, next.swing_angle));
            return;
        }
        if (bg0 > 0.0 && bg1 <= 0.0) {
            emit(ContactKind::Body, bg0, bg1, pinned_center_of_mass(next, legs));
            return;
        }
        if (p.swing_rate > 0.0 && next.swing_rate <= 0.0) return;
        p = next;
    }
}

// ---------------------------------------------------------------------------

EpisodeRecord replay_episode(const EnvConfig& config, const EpisodeRecord& logged,
                             std::vector<TracePoint>* trace, std::vector<Observation>* observations) {
    EnvConfig cfg = config;
    LandingEnv env(cfg);
    env.set_tracing(trace != nullptr);
    VehicleParams vehicle = cfg.vehicle;
    vehicle.mass = logged.mass;
    vehicle.inertia_yy = logged.inertia_yy;
    env.seed_noise(logged.noise_seed);
    env.reset(logged.condition, vehicle);
    int step = 0;
    while (!env.done()) {
        StepAction a;
        if (logged.triggered && step == logged.trigger_step) {
            a.trigger = true;
            a.moment = logged.moment;
        }
        env.step(a);
        ++step;
    }
    if (trace) *trace = env.trace();
    if (observations) *observations = env.observations();
    EpisodeRecord r = env.record();
    r.episode = logged.episode;
    return r;
}

// ---------------------------------------------------------------------------

void to_json(nlohmann::json& j, const EpisodeRecord& r) {
    j = nlohmann::json{
        {"episode", r.episode},
        {"speed", r.condition.speed},
        {"angle_deg", r.condition.angle_deg},
        {"mass", r.mass},
        {"inertia_yy", r.inertia_yy},
        {"triggered", r.triggered},
        {"trigger_step", r.trigger_step},
        {"trigger_obs",
         {{"tau", r.trigger_observation.tau},
          {"theta_x", r.trigger_observation.theta_x},
          {"d_ceil", r.trigger_observation.d_ceil}}},
        {"moment", r.moment},
        {"outcome",
         {{"n_legs", r.outcome.n_legs},
          {"body_contact", r.outcome.body_contact},
          {"d_min", r.outcome.d_min},
          {"tau_trg", r.outcome.tau_trg},
          {"theta_impact", r.outcome.theta_impact},
          {"triggered", r.outcome.triggered}}},
        {"reward",
         {{"r_d", r.reward.r_d},
          {"r_tau", r.reward.r_tau},
          {"r_theta", r.reward.r_theta},
          {"r_legs", r.reward.r_legs},
          {"total", r.reward.total}}},
        {"steps", r.steps},
        {"noise_seed", r.noise_seed},
    };
}

void from_json(const nlohmann::json& j, EpisodeRecord& r) {
    r.episode = j.at("episode").get<std::uint64_t>();
    r.condition.speed = j.at("speed").get<double>();
    r.condition.angle_deg = j.at("angle_deg").get<double>();
    r.mass = j.at("mass").get<double>();
    r.inertia_yy = j.at("inertia_yy").get<double>();
    r.triggered = j.at("triggered").get<bool>();
    r.trigger_step = j.at("trigger_step").get<int>();
    const auto& to = j.at("trigger_obs");
    r.trigger_observation = {to.at("tau").get<double>(), to.at("theta_x").get<double>(),
                             to.at("d_ceil").get<double>()};
    r.moment = j.at("moment").get<double>();
    const auto& o = j.at("outcome");
    r.outcome.n_legs = o.at("n_legs").get<int>();
    r.outcome.body_contact = o.at("body_contact").get<bool>();
    r.outcome.d_min = o.at("d_min").get<double>();
    r.outcome.tau_trg = o.at("tau_trg").get<double>();
    r.outcome.theta_impact = o.at("theta_impact").get<double>();
    r.outcome.triggered = o.at("triggered").get<bool>();
    const auto& w = j.at("reward");
    r.reward = {w.at("r_d").get<double>(), w.at("r_tau").get<double>(),
                w.at("r_theta").get<double>(), w.at("r_legs").get<double>(),
                w.at("total").get<double>()};
    r.steps = j.at("steps").get<int>();
    r.noise_seed = j.value("noise_seed", std::uint64_t{0});
}

}  // namespace perch
