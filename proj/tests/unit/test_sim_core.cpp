#include <doctest.h>

#include <cmath>
#include <stdexcept>
#include <string>

#include "perch/sim_core.hpp"

using namespace perch;

namespace {

RigidBodyState at_rest() {
    RigidBodyState s;
    s.position = {0.0, 1.0};
    return s;
}

RigidBodyState integrate(RigidBodyState s, const PairCommand& cmd, const VehicleParams& vp,
                         const WorldParams& w, double dt, int steps) {
    for (int i = 0; i < steps; ++i) s = step_free_flight(s, cmd, vp, w, dt);
    return s;
}

}  // namespace

TEST_CASE("motor_step holds a steady state") {
    VehicleParams vp;
    for (double dt : {1e-4, 1e-3, 0.5}) {
        const MotorState m = motor_step({0.7, 0.7}, {0.7, 0.7}, dt, vp);
        CHECK(m.front == 0.7);
        CHECK(m.rear == 0.7);
    }
}

TEST_CASE("motor_step reaches 1 - 1/e after one time constant") {
    VehicleParams vp;
    const MotorState m = motor_step({0.0, 0.0}, {1.0, 1.0}, vp.motor_time_constant, vp);
    const double expected = 1.0 - std::exp(-1.0);
    CHECK(m.front == doctest::Approx(expected).epsilon(1e-15));
    CHECK(m.front == doctest::Approx(0.6321).epsilon(1e-4));
}

TEST_CASE("motor_step with a vanishing step is the identity") {
    VehicleParams vp;
    CHECK(motor_step({0.3, 0.3}, {1.0, 1.0}, 0.0, vp).front == 0.3);
    CHECK(motor_step({0.3, 0.3}, {1.0, 1.0}, 1e-15, vp).front == doctest::Approx(0.3).epsilon(1e-12));
}

TEST_CASE("two half motor steps equal one full step") {
    VehicleParams vp;
    const MotorState start{0.1, 0.9};
    const PairCommand cmd{0.8, 0.2};
    for (double dt : {1e-3, 7e-3, 0.05}) {
        const MotorState once = motor_step(start, cmd, dt, vp);
        const MotorState twice = motor_step(motor_step(start, cmd, dt / 2, vp), cmd, dt / 2, vp);
        CHECK(std::abs(once.front - twice.front) < 1e-15);
        CHECK(std::abs(once.rear - twice.rear) < 1e-15);
    }
}

TEST_CASE("motor_step rejects bad inputs") {
    VehicleParams vp;
    CHECK_THROWS_AS(motor_step({NAN, 0.0}, {0.5, 0.5}, 1e-3, vp), std::domain_error);
    CHECK_THROWS_AS(motor_step({0.0, 0.0}, {1.5, 0.5}, 1e-3, vp), std::invalid_argument);
    CHECK_THROWS_AS(motor_step({0.0, 0.0}, {0.5, 0.5}, -1e-3, vp), std::invalid_argument);
}

TEST_CASE("free fall for 0.1 s matches constant-gravity kinematics") {
    VehicleParams vp;
    WorldParams w;
    const RigidBodyState s0 = at_rest();
    const RigidBodyState s = integrate(s0, {0.0, 0.0}, vp, w, 1e-3, 100);
    CHECK(s.velocity.z == doctest::Approx(-0.981).epsilon(1e-12));
    CHECK(s.position.z - s0.position.z == doctest::Approx(-0.04905).epsilon(1e-10));
    CHECK(s.velocity.x == 0.0);
    CHECK(s.time == doctest::Approx(0.1).epsilon(1e-12));
}

TEST_CASE("hover thrust balances gravity at level attitude") {
    VehicleParams vp;
    WorldParams w;
    const PairCommand hover = hover_command(vp, w);
    RigidBodyState s = at_rest();
    s.motors = {hover.front, hover.rear};
    const RigidBodyState next = step_free_flight(s, hover, vp, w, 1e-3);
    CHECK(std::abs(next.velocity.x) < 1e-15);
    CHECK(std::abs(next.velocity.z) < 1e-15);
    CHECK(next.pitch_rate == 0.0);
}

TEST_CASE("constant differential thrust spins up linearly") {
    VehicleParams vp;
    WorldParams w;
    RigidBodyState s = at_rest();
    const PairCommand cmd{0.4, 0.0};
    s.motors = {cmd.front, cmd.rear};  // already at steady state, so the moment is constant
    const double moment = vp.arm_length * vp.max_thrust_per_pair * cmd.front;
    const double t = 0.25;
    const RigidBodyState end = integrate(s, cmd, vp, w, 1e-3, 250);
    const double expected = moment / vp.inertia_yy * t;
    CHECK(std::abs(end.pitch_rate - expected) / expected < 1e-9);
}

TEST_CASE("ballistic trajectory over 1 s stays within 1e-9 m of the closed form") {
    VehicleParams vp;
    WorldParams w;
    RigidBodyState s = at_rest();
    s.velocity = {1.3, 2.1};
    const RigidBodyState end = integrate(s, {0.0, 0.0}, vp, w, 1e-3, 1000);
    const double t = 1.0;
    CHECK(std::abs(end.position.x - (s.position.x + 1.3 * t)) < 1e-9);
    CHECK(std::abs(end.position.z - (s.position.z + 2.1 * t - 0.5 * w.gravity * t * t)) < 1e-9);
}

TEST_CASE("horizontal momentum is conserved exactly without thrust") {
    VehicleParams vp;
    WorldParams w;
    RigidBodyState s = at_rest();
    s.velocity = {0.731, -0.2};
    s.pitch = 0.4;
    s.pitch_rate = 3.0;
    const RigidBodyState end = integrate(s, {0.0, 0.0}, vp, w, 1e-3, 500);
    CHECK(end.velocity.x == s.velocity.x);
}

TEST_CASE("step_free_flight is bit-deterministic") {
    VehicleParams vp;
    WorldParams w;
    RigidBodyState s = at_rest();
    s.velocity = {0.3, 1.7};
    s.pitch = -0.2;
    s.motors = {0.5, 0.6};
    const PairCommand cmd{0.9, 0.1};
    CHECK(integrate(s, cmd, vp, w, 1e-3, 300) == integrate(s, cmd, vp, w, 1e-3, 300));
}

TEST_CASE("non-finite state is reported by field name") {
    VehicleParams vp;
    WorldParams w;
    RigidBodyState s = at_rest();
    s.velocity.z = INFINITY;
    try {
        (void)step_free_flight(s, {0.0, 0.0}, vp, w, 1e-3);
        FAIL("expected a domain_error");
    } catch (const std::domain_error& e) {
        CHECK(std::string(e.what()).find("velocity.z") != std::string::npos);
    }
}

TEST_CASE("pitch stays wrapped to (-pi, pi]") {
    CHECK(wrap_angle(kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(-kPi) == doctest::Approx(kPi));
    CHECK(wrap_angle(3 * kPi / 2) == doctest::Approx(-kPi / 2));
    VehicleParams vp;
    WorldParams w;
    RigidBodyState s = at_rest();
    s.pitch = 3.1;
    s.pitch_rate = 40.0;
    const RigidBodyState end = integrate(s, {0.0, 0.0}, vp, w, 1e-3, 50);
    CHECK(end.pitch > -kPi);
    CHECK(end.pitch <= kPi);
}

TEST_CASE("flip controller drives the front pair until 90 degrees of rotation") {
    VehicleParams vp;
    const double my = 4e-3;
    const double trigger_pitch = 0.1;
    FlipController flip(my, trigger_pitch, vp);
    RigidBodyState s;

    s.pitch = trigger_pitch + 30.0 * kDeg;
    const PairCommand c30 = flip.command(s);
    const double front = my / (vp.arm_length * vp.max_thrust_per_pair);
    CHECK(c30.front == doctest::Approx(front).epsilon(1e-15));
    CHECK(c30.rear == 0.0);
    // In steady state that command yields exactly the requested moment.
    CHECK(pitch_moment({c30.front, c30.rear}, vp) == doctest::Approx(my).epsilon(1e-14));

    s.pitch = trigger_pitch + 95.0 * kDeg;
    CHECK(flip.command(s) == PairCommand{0.0, 0.0});
    CHECK(flip.motors_cut());
    // The cut is permanent.
    s.pitch = trigger_pitch + 30.0 * kDeg;
    CHECK(flip.command(s) == PairCommand{0.0, 0.0});
}

TEST_CASE("zero flip moment never drives the motors") {
    VehicleParams vp;
    FlipController flip(0.0, 0.0, vp);
    RigidBodyState s;
    for (double deg : {0.0, 30.0, 89.0, 120.0}) {
        s.pitch = deg * kDeg;
        CHECK(flip.command(s) == PairCommand{0.0, 0.0});
    }
}

TEST_CASE("flip moment outside [0, 8e-3] N m is rejected") {
    VehicleParams vp;
    CHECK_THROWS_AS(FlipController(-1e-4, 0.0, vp), std::invalid_argument);
    CHECK_THROWS_AS(FlipController(8.1e-3, 0.0, vp), std::invalid_argument);
    CHECK_THROWS_AS(FlipController(NAN, 0.0, vp), std::invalid_argument);
    CHECK_NOTHROW(FlipController(8e-3, 0.0, vp));
}

TEST_CASE("vehicle parameter validation") {
    VehicleParams vp;
    CHECK_NOTHROW(vp.validate());
    vp.mass = 0.0;
    CHECK_THROWS_AS(vp.validate(), std::invalid_argument);
    vp = {};
    vp.motor_time_constant = -1.0;
    CHECK_THROWS_AS(vp.validate(), std::invalid_argument);
    WorldParams w;
    w.ceiling_height = 0.0;
    CHECK_THROWS_AS(w.validate(), std::invalid_argument);
}
