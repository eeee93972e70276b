#pragma once

#include <array>
#include <cmath>

#include "crossway/rng.hpp"
#include "crossway/tensor.hpp"

namespace crossway {

// 2-D pusher on the unit workspace: a circular agent pushes a T-shaped block
// onto a fixed T-shaped target region. Actions are absolute target positions
// for the agent; the agent moves toward them with capped speed. Contact
// resolution is projection-based (no friction, no momentum) so the dynamics
// are deterministic and rotation-equivariant.
struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const { return std::sqrt(x * x + y * y); }
    Vec2 unit() const {
        double n = norm();
        return n > 1e-12 ? Vec2{x / n, y / n} : Vec2{0, 0};
    }
    Vec2 rot(double a) const {
        double c = std::cos(a), s = std::sin(a);
        return {c * x - s * y, s * x + c * y};
    }
    Vec2 perp() const { return {-y, x}; }
};

struct Pose {
    Vec2 p;
    double theta = 0;
    Vec2 to_local(Vec2 w) const { return (w - p).rot(-theta); }
    Vec2 to_world(Vec2 l) const { return l.rot(theta) + p; }
};

// Axis-aligned rectangle in block-local coordinates.
struct LocalRect {
    Vec2 center;
    Vec2 half;
};

struct ToyTask {
    // T geometry: horizontal bar on top of a vertical stem.
    LocalRect bar{{0.0, 0.08}, {0.15, 0.06}};
    LocalRect stem{{0.0, -0.08}, {0.05, 0.10}};
    double agent_radius = 0.035;
    double agent_speed = 0.05;    // max agent displacement per step
    double rot_gain = 6.0;        // torque coefficient of offset pushes
    Pose target{{0.5, 0.66}, 0.0};
    int image_size = 96;
    int max_steps = 300;
    double success_coverage = 0.90;
    double block_clamp_lo = 0.20, block_clamp_hi = 0.80;
};

struct ToyEnvState {
    Vec2 agent{0.5, 0.2};
    Pose block{{0.5, 0.4}, 0.0};
    int step = 0;
};

inline bool point_in_rect(const LocalRect& r, Vec2 local) {
    return std::abs(local.x - r.center.x) <= r.half.x && std::abs(local.y - r.center.y) <= r.half.y;
}

inline bool point_in_block(const ToyTask& task, const Pose& pose, Vec2 world) {
    Vec2 l = pose.to_local(world);
    return point_in_rect(task.bar, l) || point_in_rect(task.stem, l);
}

namespace toydet {

struct Contact {
    double depth = -1;   // penetration depth, > 0 means contact
    Vec2 point;          // contact point on the block surface (world)
    Vec2 push_dir;       // direction the block yields (world, unit)
};

// Circle vs one local rectangle of the block.
inline Contact circle_rect(const ToyTask& task, const Pose& pose, const LocalRect& r, Vec2 agent) {
    Contact c;
    Vec2 l = pose.to_local(agent);
    Vec2 d{l.x - r.center.x, l.y - r.center.y};
    Vec2 clamped{std::clamp(d.x, -r.half.x, r.half.x), std::clamp(d.y, -r.half.y, r.half.y)};
    if (std::abs(d.x) <= r.half.x && std::abs(d.y) <= r.half.y) {
        // Center inside: push out along the shallower axis.
        double px = r.half.x - std::abs(d.x);
        double py = r.half.y - std::abs(d.y);
        Vec2 dir_local = px < py ? Vec2{d.x >= 0 ? -1.0 : 1.0, 0.0} : Vec2{0.0, d.y >= 0 ? -1.0 : 1.0};
        c.depth = task.agent_radius + std::min(px, py);
        c.push_dir = dir_local.rot(pose.theta);
        c.point = agent;
        return c;
    }
    Vec2 closest_local{r.center.x + clamped.x, r.center.y + clamped.y};
    Vec2 closest_world = pose.to_world(closest_local);
    double dist = (agent - closest_world).norm();
    if (dist < task.agent_radius) {
        c.depth = task.agent_radius - dist;
        c.push_dir = (closest_world - agent).unit();
        c.point = closest_world;
    }
    return c;
}

inline Contact deepest_contact(const ToyTask& task, const Pose& pose, Vec2 agent) {
    Contact a = circle_rect(task, pose, task.bar, agent);
    Contact b = circle_rect(task, pose, task.stem, agent);
    return a.depth >= b.depth ? a : b;
}

}  // namespace toydet

// One environment transition. Deterministic; block pose stays in the
// workspace; the agent is clamped to the unit square.
inline ToyEnvState toy_step(const ToyTask& task, const ToyEnvState& state,
                            const std::array<double, 2>& action) {
    ToyEnvState s = state;
    Vec2 goal{std::clamp(action[0], 0.0, 1.0), std::clamp(action[1], 0.0, 1.0)};
    Vec2 delta = goal - s.agent;
    double dist = delta.norm();
    double move = std::min(dist, task.agent_speed);
    Vec2 dir = delta.unit();
    const int substeps = 4;
    for (int i = 0; i < substeps; ++i) {
        s.agent = s.agent + dir * (move / substeps);
        s.agent.x = std::clamp(s.agent.x, 0.0, 1.0);
        s.agent.y = std::clamp(s.agent.y, 0.0, 1.0);
        for (int iter = 0; iter < 6; ++iter) {
            auto c = toydet::deepest_contact(task, s.block, s.agent);
            if (c.depth <= 1e-9) break;
            Vec2 push = c.push_dir * c.depth;
            Vec2 r = c.point - s.block.p;
            s.block.p = s.block.p + push;
            s.block.theta += task.rot_gain * r.cross(push);
            s.block.p.x = std::clamp(s.block.p.x, task.block_clamp_lo, task.block_clamp_hi);
            s.block.p.y = std::clamp(s.block.p.y, task.block_clamp_lo, task.block_clamp_hi);
        }
        // If the block could not yield (workspace clamp), stop the agent from
        // tunneling through it.
        auto c = toydet::deepest_contact(task, s.block, s.agent);
        if (c.depth > 1e-9) s.agent = s.agent - c.push_dir * c.depth;
    }
    s.step = state.step + 1;
    return s;
}

// Fraction of the target T footprint covered by the block, by rasterizing the
// target bounding box on an N x N grid. The public metric uses N = 512;
// rollout loops may use a coarser grid purely as a termination check.
inline double coverage_grid(const ToyTask& task, const Pose& block, int N) {
    // Bounding box of the target T.
    double lo_x = 1e9, lo_y = 1e9, hi_x = -1e9, hi_y = -1e9;
    for (const LocalRect* r : {&task.bar, &task.stem})
        for (int sx : {-1, 1})
            for (int sy : {-1, 1}) {
                Vec2 corner = task.target.to_world(
                    {r->center.x + sx * r->half.x, r->center.y + sy * r->half.y});
                lo_x = std::min(lo_x, corner.x);
                hi_x = std::max(hi_x, corner.x);
                lo_y = std::min(lo_y, corner.y);
                hi_y = std::max(hi_y, corner.y);
            }
    int64_t in_target = 0, in_both = 0;
    for (int i = 0; i < N; ++i)
        for (int j = 0; j < N; ++j) {
            Vec2 p{lo_x + (hi_x - lo_x) * (j + 0.5) / N, lo_y + (hi_y - lo_y) * (i + 0.5) / N};
            if (!point_in_block(task, task.target, p)) continue;
            ++in_target;
            if (point_in_block(task, block, p)) ++in_both;
        }
    return in_target == 0 ? 0.0 : static_cast<double>(in_both) / static_cast<double>(in_target);
}

inline double coverage(const ToyTask& task, const Pose& block) {
    return coverage_grid(task, block, 512);
}

inline double coverage(const ToyTask& task, const ToyEnvState& state) {
    return coverage(task, state.block);
}

// Renders the scene to [H, W, 3] floats in [0, 1], 2x2 supersampled.
// Draw priority: agent over block over target over background.
inline Tensor<float> render(const ToyTask& task, const ToyEnvState& state) {
    const int n = task.image_size;
    Tensor<float> img({n, n, 3});
    const double bg[3] = {1.0, 1.0, 1.0};
    const double tgt[3] = {0.55, 0.85, 0.55};
    const double blk[3] = {0.45, 0.45, 0.45};
    const double agt[3] = {0.15, 0.35, 0.9};
    const double r2 = task.agent_radius * task.agent_radius;
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            double acc[3] = {0, 0, 0};
            for (int si = 0; si < 2; ++si)
                for (int sj = 0; sj < 2; ++sj) {
                    Vec2 p{(j + 0.25 + 0.5 * sj) / n, (i + 0.25 + 0.5 * si) / n};
                    Vec2 da = p - state.agent;
                    const double* c = bg;
                    if (da.dot(da) <= r2)
                        c = agt;
                    else if (point_in_block(task, state.block, p))
                        c = blk;
                    else if (point_in_block(task, task.target, p))
                        c = tgt;
                    acc[0] += c[0];
                    acc[1] += c[1];
                    acc[2] += c[2];
                }
            for (int ch = 0; ch < 3; ++ch)
                img[(int64_t(i) * n + j) * 3 + ch] = static_cast<float>(acc[ch] / 4.0);
        }
    return img;
}

// Initial state: block pose uniform with a minimum separation from the target
// and a bounded orientation error; agent anywhere clear of the block.
inline ToyEnvState sample_init(const ToyTask& task, Rng& rng) {
    ToyEnvState s;
    for (int tries = 0; tries < 1000; ++tries) {
        s.block.p = {rng.uniform(0.25, 0.75), rng.uniform(0.25, 0.75)};
        if ((s.block.p - task.target.p).norm() >= 0.2) break;
    }
    s.block.theta = task.target.theta + rng.uniform(-0.3, 0.3);
    for (int tries = 0; tries < 1000; ++tries) {
        s.agent = {rng.uniform(0.08, 0.92), rng.uniform(0.08, 0.92)};
        if ((s.agent - s.block.p).norm() >= 0.26) break;
    }
    s.step = 0;
    return s;
}

inline double wrap_angle(double a) {
    while (a > 3.14159265358979323846) a -= 2 * 3.14159265358979323846;
    while (a < -3.14159265358979323846) a += 2 * 3.14159265358979323846;
    return a;
}

// Waypoint pushing policy: line up behind the block along the block-to-target
// axis (orbiting around the block when it blocks the way), then push through
// its center with a lateral offset that steers the orientation error to zero.
// Holds position once the block sits on the target.
inline std::array<double, 2> scripted_expert(const ToyTask& task, const ToyEnvState& state) {
    const Vec2 to_target = task.target.p - state.block.p;
    const double dist = to_target.norm();
    const double theta_err = wrap_angle(task.target.theta - state.block.theta);

    if (dist < 0.006 && std::abs(theta_err) < 0.03)
        return {state.agent.x, state.agent.y};  // on target: hold

    const Vec2 rel = state.agent - state.block.p;
    const double rn = rel.norm();
    const Vec2 rel_u = rn > 1e-9 ? rel.unit() : Vec2{0.0, -1.0};

    // Push target: a contact aim point and a push direction. Translation mode
    // pushes through the block center toward the target with a small lateral
    // offset trimming theta (torque of +perp*l aim is -l * depth). Once the
    // block is nearly in place but twisted, switch to a bar-end push
    // perpendicular to the bar: face contact at maximum lever.
    Vec2 aim_point, push_dir;
    const bool rotation_mode = dist < 0.06 && std::abs(theta_err) > 0.09;
    if (rotation_mode) {
        const double s = theta_err > 0 ? 1.0 : -1.0;
        const Vec2 u_b{std::cos(state.block.theta), std::sin(state.block.theta)};
        const Vec2 n_b = u_b.perp();
        // Option A: push the +x bar end along s * n_b; option B: mirrored.
        const Vec2 ea = state.block.p + u_b * 0.12;
        const Vec2 da = n_b * s;
        const Vec2 eb = state.block.p - u_b * 0.12;
        const Vec2 db = n_b * (-s);
        const double cost_a = (state.agent - (ea - da * 0.26)).norm();
        const double cost_b = (state.agent - (eb - db * 0.26)).norm();
        aim_point = cost_a <= cost_b ? ea : eb;
        push_dir = cost_a <= cost_b ? da : db;
    } else {
        const Vec2 dir = dist > 1e-9 ? to_target.unit() : Vec2{0.0, 1.0};
        const double lateral = std::clamp(-0.9 * theta_err, -0.05, 0.05);
        aim_point = state.block.p + dir.perp() * lateral;
        push_dir = dir;
    }

    const Vec2 from_aim = state.agent - aim_point;
    const double bearing_cos = from_aim.unit().dot(push_dir * -1.0);
    // Once essentially at the aim point the bearing is meaningless: keep
    // pushing rather than bouncing back to the approach slot.
    if ((bearing_cos > 0.86 || (from_aim.norm() < 0.10 && bearing_cos > 0.45)) &&
        from_aim.norm() < 0.38) {
        // Advance along the push line, metered by the remaining error so the
        // block is not bulldozed past the target.
        Vec2 line_pt = aim_point + push_dir * from_aim.dot(push_dir);
        double advance = rotation_mode ? std::clamp(std::abs(theta_err) * 0.25, 0.01, 0.05)
                                       : std::clamp(dist * 0.9, 0.004, 0.05);
        Vec2 push_goal = line_pt + push_dir * advance;
        return {std::clamp(push_goal.x, 0.0, 1.0), std::clamp(push_goal.y, 0.0, 1.0)};
    }

    // Navigate to the approach slot behind the aim point; orbit around the
    // block when the straight line would clip it.
    const Vec2 approach = aim_point - push_dir * 0.28;
    Vec2 goal = approach;
    Vec2 seg = approach - state.agent;
    double t = std::clamp((state.block.p - state.agent).dot(seg) / std::max(seg.dot(seg), 1e-12),
                          0.0, 1.0);
    Vec2 nearest = state.agent + seg * t;
    if ((nearest - state.block.p).norm() < 0.28) {
        double side = rel_u.cross(push_dir * -1.0) >= 0 ? 1.0 : -1.0;
        goal = state.block.p + rel_u.rot(side * 0.8) * 0.34;
    }
    // Clearance enforcement: while navigating, a step must never end inside
    // the block's safety disc, or passing contacts shove the block around.
    Vec2 step = goal - state.agent;
    if (step.norm() > 1e-9) {
        Vec2 next = state.agent + step.unit() * std::min(step.norm(), task.agent_speed);
        Vec2 off = next - state.block.p;
        if (off.norm() < 0.29) goal = state.block.p + off.unit() * 0.31;
    }
    return {std::clamp(goal.x, 0.0, 1.0), std::clamp(goal.y, 0.0, 1.0)};
}

}  // namespace crossway

