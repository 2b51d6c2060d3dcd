#include "perch/sim_core.hpp"

#include <array>
#include <stdexcept>
#include <string>

namespace perch {

double wrap_angle(double a) {
    double w = std::remainder(a, 2.0 * kPi);
    if (w <= -kPi) w += 2.0 * kPi;
    return w;
}

namespace {

void require_positive(double v, const char* name) {
    if (!std::isfinite(v) || v <= 0.0) {
        throw std::invalid_argument(std::string(name) + " must be positive and finite");
    }
}

void require_finite(double v, const char* name) {
    if (!std::isfinite(v)) throw std::domain_error(std::string("non-finite ") + name);
}

void require_unit(double v, const char* name) {
    require_finite(v, name);
    if (v < 0.0 || v > 1.0) throw std::invalid_argument(std::string(name) + " outside [0, 1]");
}

// Rigid-body part of the state that RK4 integrates.
using BodyVec = std::array<double, 6>;  // x, z, vx, vz, pitch, pitch_rate

BodyVec axpy(const BodyVec& y, double h, const BodyVec& k) {
    BodyVec out;
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = y[i] + h * k[i];
    return out;
}

}  // namespace

void VehicleParams::validate() const {
    require_positive(mass, "mass");
    require_positive(inertia_yy, "inertia_yy");
    require_positive(arm_length, "arm_length");
    require_positive(max_thrust_per_pair, "max_thrust_per_pair");
    require_positive(motor_time_constant, "motor_time_constant");
}

void WorldParams::validate() const {
    require_positive(ceiling_height, "ceiling_height");
    require_finite(gravity, "gravity");
}

void check_finite(const RigidBodyState& s) {
    require_finite(s.position.x, "position.x");
    require_finite(s.position.z, "position.z");
    require_finite(s.velocity.x, "velocity.x");
    require_finite(s.velocity.z, "velocity.z");
    require_finite(s.pitch, "pitch");
    require_finite(s.pitch_rate, "pitch_rate");
    require_finite(s.motors.front, "motors.front");
    require_finite(s.motors.rear, "motors.rear");
    require_finite(s.time, "time");
}

MotorState motor_step(const MotorState& motors, const PairCommand& command, double dt,
                      const VehicleParams& params) {
    require_finite(motors.front, "motors.front");
    require_finite(motors.rear, "motors.rear");
    require_unit(command.front, "command.front");
    require_unit(command.rear, "command.rear");
    require_finite(dt, "dt");
    if (dt < 0.0) throw std::invalid_argument("dt must be non-negative");
    // 1 - exp(-dt/T), accurate for small steps and exactly zero at dt = 0.
    const double gain = -std::expm1(-dt / params.motor_time_constant);
    return {motors.front + (command.front - motors.front) * gain,
            motors.rear + (command.rear - motors.rear) * gain};
}

double pitch_moment(const MotorState& motors, const VehicleParams& params) {
    return params.arm_length * params.max_thrust_per_pair * (motors.front - motors.rear);
}

PairCommand hover_command(const VehicleParams& params, const WorldParams& world) {
    const double per_pair = params.mass * world.gravity / (2.0 * params.max_thrust_per_pair);
    if (per_pair > 1.0) throw std::invalid_argument("vehicle cannot hover: thrust too low");
    return {per_pair, per_pair};
}

RigidBodyState step_free_flight(const RigidBodyState& state, const PairCommand& command,
                                const VehicleParams& params, const WorldParams& world,
                                double dt) {
    check_finite(state);
    require_finite(dt, "dt");
    if (dt <= 0.0) throw std::invalid_argument("dt must be positive");

    const double inv_mass = 1.0 / params.mass;
    const double inv_inertia = 1.0 / params.inertia_yy;
    const double g = world.gravity;

    auto deriv = [&](double h, const BodyVec& y) {
        const MotorState m = motor_step(state.motors, command, h, params);
        const double f_front = params.max_thrust_per_pair * m.front;
        const double f_rear = params.max_thrust_per_pair * m.rear;
        const double thrust = f_front + f_rear;
        const double s = std::sin(y[4]);
        const double c = std::cos(y[4]);
        BodyVec d;
        d[0] = y[2];
        d[1] = y[3];
        d[2] = -thrust * s * inv_mass;
        d[3] = thrust * c * inv_mass - g;
        d[4] = y[5];
        d[5] = params.arm_length * (f_front - f_rear) * inv_inertia;
        return d;
    };

    const BodyVec y0{state.position.x, state.position.z, state.velocity.x,
                     state.velocity.z, state.pitch,      state.pitch_rate};
    const BodyVec k1 = deriv(0.0, y0);
    const BodyVec k2 = deriv(0.5 * dt, axpy(y0, 0.5 * dt, k1));
    const BodyVec k3 = deriv(0.5 * dt, axpy(y0, 0.5 * dt, k2));
    const BodyVec k4 = deriv(dt, axpy(y0, dt, k3));

    BodyVec y1;
    for (std::size_t i = 0; i < y1.size(); ++i) {
        y1[i] = y0[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }

    RigidBodyState next;
    next.position = {y1[0], y1[1]};
    next.velocity = {y1[2], y1[3]};
    next.pitch = wrap_angle(y1[4]);
    next.pitch_rate = y1[5];
    next.motors = motor_step(state.motors, command, dt, params);
    next.time = state.time + dt;
    check_finite(next);
    return next;
}

FlipController::FlipController(double moment, double trigger_pitch, const VehicleParams& params)
    : moment_(moment), trigger_pitch_(trigger_pitch) {
    if (!std::isfinite(moment) || moment < 0.0 || moment > kMaxFlipMoment * (1.0 + 1e-12)) {
        throw std::invalid_argument("flip moment outside [0, 8e-3] N m");
    }
    front_cmd_ = moment / (params.arm_length * params.max_thrust_per_pair);
    if (front_cmd_ > 1.0) throw std::invalid_argument("flip moment exceeds front-pair authority");
}

PairCommand FlipController::command(const RigidBodyState& state) {
    if (!cut_ && std::abs(wrap_angle(state.pitch - trigger_pitch_)) >= 0.5 * kPi) cut_ = true;
    if (cut_ || moment_ == 0.0) return {0.0, 0.0};
    return {front_cmd_, 0.0};
}

}  // namespace perch
