#include <doctest.h>

#include <stdexcept>

#include "perch/sensing.hpp"

using namespace perch;

namespace {

RigidBodyState below(double d, Vec2 v, const WorldParams& w) {
    RigidBodyState s;
    s.position = {0.0, w.ceiling_height - d};
    s.velocity = v;
    return s;
}

}  // namespace

TEST_CASE("vertical approach: tau is distance over closure rate") {
    WorldParams w;
    const Observation o = observe(below(1.0, {0.0, 2.0}, w), w);
    CHECK(o.tau == doctest::Approx(0.5).epsilon(1e-14));
    CHECK(o.theta_x == 0.0);
    CHECK(o.d_ceil == doctest::Approx(1.0).epsilon(1e-14));
}

TEST_CASE("oblique approach: theta_x is lateral speed over distance") {
    WorldParams w;
    const Observation o = observe(below(0.5, {1.0, 2.0}, w), w);
    CHECK(o.tau == doctest::Approx(0.25).epsilon(1e-14));
    CHECK(o.theta_x == doctest::Approx(2.0).epsilon(1e-14));
    CHECK(o.d_ceil == doctest::Approx(0.5).epsilon(1e-14));
}

TEST_CASE("no closure clips tau to the cap") {
    WorldParams w;
    SensingParams sp;
    const Observation level = observe(below(1.0, {1.0, 0.0}, w), w, sp);
    CHECK(level.tau == sp.tau_cap);
    CHECK(level.theta_x == doctest::Approx(1.0).epsilon(1e-14));
    CHECK(observe(below(1.0, {0.0, -1.0}, w), w, sp).tau == sp.tau_cap);
    CHECK(observe(below(2.0, {0.0, 0.01}, w), w, sp).tau == sp.tau_cap);
}

TEST_CASE("tau decreases at unit rate along constant-velocity approaches") {
    WorldParams w;
    for (Vec2 v : {Vec2{0.0, 1.5}, Vec2{1.0, 2.0}, Vec2{3.0, 0.8}}) {
        double prev = -1.0;
        for (int k = 0; k < 50; ++k) {
            const double t = 0.01 * k;
            const Observation o = observe(below(1.2 - v.z * t, v, w), w);
            if (prev >= 0.0) CHECK(std::abs((o.tau - prev) / 0.01 + 1.0) < 1e-6);
            prev = o.tau;
        }
    }
}

TEST_CASE("doubling distance and velocity keeps tau and halves theta_x") {
    WorldParams w;
    const Observation a = observe(below(0.6, {0.7, 1.1}, w), w);
    const Observation b = observe(below(1.2, {1.4, 2.2}, w), w);
    CHECK(b.tau == doctest::Approx(a.tau).epsilon(1e-14));
    // vx / d with both doubled is unchanged; halving needs the distance doubled alone.
    const Observation c = observe(below(1.2, {0.7, 2.2}, w), w);
    CHECK(c.theta_x == doctest::Approx(a.theta_x / 2).epsilon(1e-14));
    CHECK(b.theta_x == doctest::Approx(a.theta_x).epsilon(1e-14));
}

TEST_CASE("observing at or above the ceiling is an error") {
    WorldParams w;
    CHECK_THROWS_AS(observe(below(0.0, {0.0, 1.0}, w), w), std::domain_error);
    CHECK_THROWS_AS(observe(below(-0.1, {0.0, 1.0}, w), w), std::domain_error);
}

TEST_CASE("noise hook is off by default and bounded when on") {
    WorldParams w;
    SensingParams sp;
    std::mt19937_64 rng(1);
    const RigidBodyState s = below(0.8, {0.5, 1.6}, w);
    CHECK(observe_noisy(s, w, sp, rng) == observe(s, w, sp));
    sp.tau_noise = 0.5;
    sp.d_ceil_noise = 2.0;
    for (int i = 0; i < 1000; ++i) {
        const Observation o = observe_noisy(s, w, sp, rng);
        CHECK(o.tau >= 0.0);
        CHECK(o.tau <= sp.tau_cap);
        CHECK(o.d_ceil >= 0.0);
    }
}

TEST_CASE("network inputs use the fixed scales") {
    SensingParams sp;
    const NormalizedObs n = normalize({0.3, 4.0, 1.0}, sp);
    CHECK(n[0] == doctest::Approx(0.3));
    CHECK(n[1] == doctest::Approx(0.4));
    CHECK(n[2] == doctest::Approx(0.5));
}
