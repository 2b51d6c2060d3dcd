#pragma once

// Ceiling contact for the legged vehicle: leg-tip and body-circle crossing
// detection, the permanent pivot formed by the fore legs, the pendulum swing
// about that pivot, and reduction of an episode trace to a landing outcome.

#include <optional>
#include <vector>

#include "perch/sim_core.hpp"

namespace perch {

// Planar legs stand for a pair each. Attachment points are in the body frame;
// each leg points along -body z, splayed outward by mount_angle.
struct LegGeometry {
    Vec2 fore_attach{0.020, 0.0};
    Vec2 hind_attach{-0.020, 0.0};
    double leg_length = 0.050;       // m
    double mount_angle = 25.0 * kDeg;
    double body_radius = 0.045;      // m, body and propeller collision circle

    [[nodiscard]] Vec2 fore_tip() const;
    [[nodiscard]] Vec2 hind_tip() const;

    // Largest distance from the center of mass to any point that can touch the ceiling.
    [[nodiscard]] double reach() const;

    void validate() const;
};

enum class ContactKind { ForeLegs, HindLegs, Body };

const char* to_string(ContactKind kind);

struct ContactEvent {
    ContactKind kind = ContactKind::Body;
    double time = 0.0;
    double body_pitch_at_contact = 0.0;
    Vec2 contact_point_world;
};

// Heights of the three contact features above the world origin.
struct FeatureHeights {
    double fore = 0.0;
    double hind = 0.0;
    double body = 0.0;
};

FeatureHeights feature_heights(const RigidBodyState& state, const LegGeometry& legs);

// First feature that crosses the ceiling plane between two consecutive states.
// The crossing time, pitch and contact point are linearly interpolated.
std::optional<ContactEvent> detect_contact(const RigidBodyState& before,
                                           const RigidBodyState& after,
                                           const LegGeometry& legs, const WorldParams& world);

// Re-integrates from `before` to the instant the given feature reaches the
// ceiling. Returns the body state at that instant.
RigidBodyState refine_contact(const RigidBodyState& before, const PairCommand& command,
                              double dt, ContactKind kind, const VehicleParams& params,
                              const LegGeometry& legs, const WorldParams& world);

// Event for a state whose feature already sits on the ceiling plane.
ContactEvent make_event(ContactKind kind, const RigidBodyState& at_contact,
                        const LegGeometry& legs, const WorldParams& world);

// The body hangs from the fore-leg tip. swing_angle is the body pitch
// (unwrapped) and swing_rate its rate; the center of mass sits at
// pin - R(swing_angle) * fore_tip.
struct PinnedState {
    Vec2 pin_point;
    double swing_angle = 0.0;
    double swing_rate = 0.0;
    bool attached = false;
    double time = 0.0;
};

// Perfectly plastic impact at the fore-leg tip; angular momentum about the
// tip is preserved.
PinnedState attach_pin(const ContactEvent& event, const RigidBodyState& state,
                       const VehicleParams& params, const LegGeometry& legs);

// Moment of inertia about the pivot.
double pivot_inertia(const VehicleParams& params, const LegGeometry& legs);

// Angular momentum of a free body about a world point.
double angular_momentum_about(Vec2 point, const RigidBodyState& state,
                              const VehicleParams& params);

Vec2 pinned_center_of_mass(const PinnedState& p, const LegGeometry& legs);

// Kinetic plus gravitational energy relative to the pivot height.
double pinned_energy(const PinnedState& p, const VehicleParams& params,
                     const LegGeometry& legs, const WorldParams& world);

// Frictionless pendulum about the pivot, one RK4 step. Motors are off.
PinnedState step_pinned(const PinnedState& p, const VehicleParams& params,
                        const LegGeometry& legs, const WorldParams& world, double dt);

struct LandingOutcome {
    int n_legs = 0;  // 0, 2 or 4
    bool body_contact = false;
    double d_min = 0.0;        // m
    double tau_trg = 0.0;      // s
    double theta_impact = 0.0; // deg
    bool triggered = false;

    friend bool operator==(const LandingOutcome&, const LandingOutcome&) = default;
};

// Everything classify_outcome needs from a finished episode.
struct EpisodeTrace {
    bool terminated = false;
    bool triggered = false;
    double tau_trg = 0.0;
    double d_min = 0.0;
    std::vector<ContactEvent> events;
};

LandingOutcome classify_outcome(const EpisodeTrace& trace);

}  // namespace perch
