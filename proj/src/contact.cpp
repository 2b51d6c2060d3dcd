#include "perch/contact.hpp"

#include <algorithm>
#include <array>
#include <stdexcept>

namespace perch {

Vec2 LegGeometry::fore_tip() const {
    return fore_attach + leg_length * Vec2{std::sin(mount_angle), -std::cos(mount_angle)};
}

Vec2 LegGeometry::hind_tip() const {
    return hind_attach + leg_length * Vec2{-std::sin(mount_angle), -std::cos(mount_angle)};
}

double LegGeometry::reach() const {
    const Vec2 f = fore_tip();
    const Vec2 h = hind_tip();
    return std::max({std::hypot(f.x, f.z), std::hypot(h.x, h.z), body_radius});
}

void LegGeometry::validate() const {
    if (!(leg_length > 0.0) || !std::isfinite(leg_length)) {
        throw std::invalid_argument("leg_length must be positive");
    }
    if (!(body_radius > 0.0) || !std::isfinite(body_radius)) {
        throw std::invalid_argument("body_radius must be positive");
    }
    if (!std::isfinite(mount_angle)) throw std::invalid_argument("mount_angle must be finite");
    const Vec2 d = fore_tip() - hind_tip();
    if (std::hypot(d.x, d.z) < 1e-9) throw std::invalid_argument("fore and hind tips coincide");
}

const char* to_string(ContactKind kind) {
    switch (kind) {
        case ContactKind::ForeLegs: return "fore_legs";
        case ContactKind::HindLegs: return "hind_legs";
        case ContactKind::Body: return "body";
    }
    return "?";
}

FeatureHeights feature_heights(const RigidBodyState& s, const LegGeometry& legs) {
    return {s.position.z + body_to_world(legs.fore_tip(), s.pitch).z,
            s.position.z + body_to_world(legs.hind_tip(), s.pitch).z,
            s.position.z + legs.body_radius};
}

namespace {

double height_of(const FeatureHeights& h, ContactKind kind) {
    switch (kind) {
        case ContactKind::ForeLegs: return h.fore;
        case ContactKind::HindLegs: return h.hind;
        case ContactKind::Body: return h.body;
    }
    return h.body;
}

Vec2 feature_point(const RigidBodyState& s, ContactKind kind, const LegGeometry& legs) {
    switch (kind) {
        case ContactKind::ForeLegs: return s.position + body_to_world(legs.fore_tip(), s.pitch);
        case ContactKind::HindLegs: return s.position + body_to_world(legs.hind_tip(), s.pitch);
        case ContactKind::Body: return s.position + Vec2{0.0, legs.body_radius};
    }
    return s.position;
}

}  // namespace

std::optional<ContactEvent> detect_contact(const RigidBodyState& before,
                                           const RigidBodyState& after,
                                           const LegGeometry& legs, const WorldParams& world) {
    const FeatureHeights h0 = feature_heights(before, legs);
    const FeatureHeights h1 = feature_heights(after, legs);
    const double ceil = world.ceiling_height;

    // Body first so that it wins exact ties.
    constexpr std::array kinds{ContactKind::Body, ContactKind::ForeLegs, ContactKind::HindLegs};
    std::optional<ContactEvent> best;
    double best_frac = 2.0;
    for (ContactKind kind : kinds) {
        const double gap0 = ceil - height_of(h0, kind);
        const double gap1 = ceil - height_of(h1, kind);
        if (!(gap0 > 0.0 && gap1 <= 0.0)) continue;
        const double frac = gap0 / (gap0 - gap1);
        if (frac >= best_frac) continue;
        best_frac = frac;

        const Vec2 p0 = feature_point(before, kind, legs);
        const Vec2 p1 = feature_point(after, kind, legs);
        ContactEvent ev;
        ev.kind = kind;
        ev.time = before.time + frac * (after.time - before.time);
        ev.body_pitch_at_contact =
            wrap_angle(before.pitch + frac * wrap_angle(after.pitch - before.pitch));
        ev.contact_point_world = {p0.x + frac * (p1.x - p0.x), ceil};
        best = ev;
    }
    return best;
}

RigidBodyState refine_contact(const RigidBodyState& before, const PairCommand& command,
                              double dt, ContactKind kind, const VehicleParams& params,
                              const LegGeometry& legs, const WorldParams& world) {
    auto gap_at = [&](double h, RigidBodyState* out) {
        RigidBodyState s = step_free_flight(before, command, params, world, h);
        const double g = world.ceiling_height - height_of(feature_heights(s, legs), kind);
        if (out) *out = s;
        return g;
    };

    // Illinois variant of regula falsi on (0, dt].
    double lo = 0.0;
    double g_lo = world.ceiling_height - height_of(feature_heights(before, legs), kind);
    double hi = dt;
    RigidBodyState s_hi;
    double g_hi = gap_at(hi, &s_hi);
    if (g_hi > 0.0) throw std::logic_error("refine_contact: no crossing in step");
    if (g_lo <= 0.0) return before;

    RigidBodyState best = s_hi;
    int side = 0;
    for (int it = 0; it < 100 && g_hi != 0.0; ++it) {
        double h = (lo * g_hi - hi * g_lo) / (g_hi - g_lo);
        if (!(h > lo && h < hi)) h = 0.5 * (lo + hi);
        RigidBodyState s;
        const double g = gap_at(h, &s);
        if (g <= 0.0) {
            hi = h;
            g_hi = g;
            best = s;
            if (side == -1) g_lo *= 0.5;
            side = -1;
        } else {
            lo = h;
            g_lo = g;
            if (side == 1) g_hi *= 0.5;
            side = 1;
        }
        if (std::abs(g) < 1e-13 || hi - lo < 1e-15) {
            if (g > 0.0 && std::abs(g) < 1e-13) best = s;
            break;
        }
    }
    return best;
}

ContactEvent make_event(ContactKind kind, const RigidBodyState& at_contact,
                        const LegGeometry& legs, const WorldParams& world) {
    ContactEvent ev;
    ev.kind = kind;
    ev.time = at_contact.time;
    ev.body_pitch_at_contact = at_contact.pitch;
    ev.contact_point_world = {feature_point(at_contact, kind, legs).x, world.ceiling_height};
    return ev;
}

double pivot_inertia(const VehicleParams& params, const LegGeometry& legs) {
    const Vec2 r = legs.fore_tip();
    return params.inertia_yy + params.mass * (r.x * r.x + r.z * r.z);
}

double angular_momentum_about(Vec2 point, const RigidBodyState& s, const VehicleParams& params) {
    return params.inertia_yy * s.pitch_rate + params.mass * cross(s.position - point, s.velocity);
}

PinnedState attach_pin(const ContactEvent& event, const RigidBodyState& state,
                       const VehicleParams& params, const LegGeometry& legs) {
    if (event.kind != ContactKind::ForeLegs) {
        throw std::invalid_argument("attach_pin requires a fore-leg contact");
    }
    // The pivot is the fore tip itself; its height equals the ceiling to the
    // precision of refine_contact.
    const Vec2 pin = state.position + body_to_world(legs.fore_tip(), state.pitch);
    PinnedState p;
    p.pin_point = pin;
    p.swing_angle = state.pitch;
    p.swing_rate = angular_momentum_about(pin, state, params) / pivot_inertia(params, legs);
    p.attached = true;
    p.time = state.time;
    return p;
}

Vec2 pinned_center_of_mass(const PinnedState& p, const LegGeometry& legs) {
    return p.pin_point - body_to_world(legs.fore_tip(), p.swing_angle);
}

double pinned_energy(const PinnedState& p, const VehicleParams& params,
                     const LegGeometry& legs, const WorldParams& world) {
    const double h = pinned_center_of_mass(p, legs).z - p.pin_point.z;
    return 0.5 * pivot_inertia(params, legs) * p.swing_rate * p.swing_rate +
           params.mass * world.gravity * h;
}

PinnedState step_pinned(const PinnedState& p, const VehicleParams& params,
                        const LegGeometry& legs, const WorldParams& world, double dt) {
    if (!p.attached) throw std::invalid_argument("step_pinned on a detached body");
    if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");

    const Vec2 tip = legs.fore_tip();
    const double k = params.mass * world.gravity / pivot_inertia(params, legs);
    // r = com - pin = -R(angle) tip; torque = r x (0, -m g) = -m g r.x
    auto accel = [&](double angle) {
        const double rx = -(tip.x * std::cos(angle) - tip.z * std::sin(angle));
        return -k * rx;
    };

    const double a0 = p.swing_angle;
    const double w0 = p.swing_rate;
    const double k1a = w0, k1w = accel(a0);
    const double k2a = w0 + 0.5 * dt * k1w, k2w = accel(a0 + 0.5 * dt * k1a);
    const double k3a = w0 + 0.5 * dt * k2w, k3w = accel(a0 + 0.5 * dt * k2a);
    const double k4a = w0 + dt * k3w, k4w = accel(a0 + dt * k3a);

    PinnedState next = p;
    next.swing_angle = a0 + dt / 6.0 * (k1a + 2.0 * k2a + 2.0 * k3a + k4a);
    next.swing_rate = w0 + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w);
    next.time = p.time + dt;
    return next;
}

LandingOutcome classify_outcome(const EpisodeTrace& trace) {
    if (!trace.terminated) throw std::logic_error("classify_outcome on an unterminated episode");

    LandingOutcome out;
    out.triggered = trace.triggered;
    out.d_min = std::max(0.0, trace.d_min);
    out.tau_trg = trace.tau_trg;

    bool fore_attached = false;
    bool first_leg_seen = false;
    for (const ContactEvent& ev : trace.events) {
        if (ev.kind == ContactKind::Body) {
            out.body_contact = true;
            continue;
        }
        if (!first_leg_seen) {
            first_leg_seen = true;
            fore_attached = ev.kind == ContactKind::ForeLegs;
            out.n_legs = 2;
        } else if (fore_attached && ev.kind == ContactKind::HindLegs) {
            out.n_legs = 4;
        }
    }
    if (trace.triggered && !trace.events.empty()) {
        out.theta_impact = std::abs(wrap_angle(trace.events.front().body_pitch_at_contact)) / kDeg;
    }
    return out;
}

}  // namespace perch
