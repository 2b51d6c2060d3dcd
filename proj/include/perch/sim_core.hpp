#pragma once

// Planar (x, z, pitch) rigid-body quadrotor with first-order motor response.
//
// Frames: world x forward, world z up. Pitch is the angle of the body x axis
// above the world horizontal, so a positive pitch rate is nose-up. The body z
// axis is (-sin(pitch), cos(pitch)); rotor thrust acts along it. Legs hang
// along -body z, so they face the ceiling once the vehicle is inverted.

#include <cmath>
#include <numbers>

namespace perch {

constexpr double kPi = std::numbers::pi;
constexpr double kDeg = kPi / 180.0;

struct Vec2 {
    double x = 0.0;
    double z = 0.0;

    friend Vec2 operator+(Vec2 a, Vec2 b) { return {a.x + b.x, a.z + b.z}; }
    friend Vec2 operator-(Vec2 a, Vec2 b) { return {a.x - b.x, a.z - b.z}; }
    friend Vec2 operator*(double s, Vec2 a) { return {s * a.x, s * a.z}; }
    friend bool operator==(Vec2, Vec2) = default;
};

// Planar cross product; positive means the rotation r -> v is nose-up.
inline double cross(Vec2 r, Vec2 v) { return r.x * v.z - r.z * v.x; }

// Body-frame vector expressed in the world frame for a given pitch.
inline Vec2 body_to_world(Vec2 b, double pitch) {
    const double c = std::cos(pitch);
    const double s = std::sin(pitch);
    return {b.x * c - b.z * s, b.x * s + b.z * c};
}

// Wraps to (-pi, pi].
double wrap_angle(double a);

struct VehicleParams {
    double mass = 0.0343;                 // kg
    double inertia_yy = 1.65e-5;          // kg m^2, pitch axis
    double arm_length = 0.033;            // m, rotor pair offset along body x
    double max_thrust_per_pair = 0.30;    // N at normalized speed 1
    double motor_time_constant = 0.030;   // s

    // Throws std::invalid_argument when a field is non-positive or non-finite.
    void validate() const;
};

struct WorldParams {
    double ceiling_height = 2.5;  // m
    double gravity = 9.81;        // m/s^2

    void validate() const;
};

// Normalized pair speeds. Thrust of a pair is max_thrust_per_pair * speed.
struct MotorState {
    double front = 0.0;
    double rear = 0.0;

    friend bool operator==(const MotorState&, const MotorState&) = default;
};

struct PairCommand {
    double front = 0.0;
    double rear = 0.0;

    friend bool operator==(const PairCommand&, const PairCommand&) = default;
};

struct RigidBodyState {
    Vec2 position;
    Vec2 velocity;
    double pitch = 0.0;       // rad, wrapped to (-pi, pi]
    double pitch_rate = 0.0;  // rad/s
    MotorState motors;
    double time = 0.0;        // s

    friend bool operator==(const RigidBodyState&, const RigidBodyState&) = default;
};

// Exact solution of  d(speed)/dt = (cmd - speed) / tau  over dt.
MotorState motor_step(const MotorState& motors, const PairCommand& command, double dt,
                      const VehicleParams& params);

// One RK4 step of the rigid body. Motor speeds inside the step follow their
// exact exponential response, so the thrust seen by each stage is exact.
RigidBodyState step_free_flight(const RigidBodyState& state, const PairCommand& command,
                                const VehicleParams& params, const WorldParams& world,
                                double dt);

// Pitch moment produced by the current motor speeds.
double pitch_moment(const MotorState& motors, const VehicleParams& params);

// Per-pair command that holds the vehicle in level hover.
PairCommand hover_command(const VehicleParams& params, const WorldParams& world);

// Upper bound of the moment command accepted by FlipController, N m.
constexpr double kMaxFlipMoment = 8.0e-3;

// Open-loop flip: the front pair alone produces the commanded pitch moment
// until the body has rotated 90 degrees from the trigger attitude, after which
// every motor is off for the remainder of the episode.
class FlipController {
public:
    FlipController(double moment, double trigger_pitch, const VehicleParams& params);

    PairCommand command(const RigidBodyState& state);

    [[nodiscard]] bool motors_cut() const { return cut_; }
    [[nodiscard]] double moment() const { return moment_; }

    // Normalized front-pair command realizing the moment in steady state.
    [[nodiscard]] double front_command() const { return front_cmd_; }

private:
    double moment_;
    double trigger_pitch_;
    double front_cmd_;
    bool cut_ = false;
};

// Throws std::domain_error naming the first non-finite field.
void check_finite(const RigidBodyState& state);

}  // namespace perch
