//! Optimal reciprocal collision avoidance for agent-agent interactions.
//!
//! Half-plane construction and the incremental linear programs follow the
//! RVO2 reference formulation. There are no static obstacles in these
//! scenes, so only the agent-agent constraints are built.

use serde::{Deserialize, Serialize};

use crate::geometry::Vec2;
use crate::scenario::AgentState;

const LP_EPSILON: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrcaParams {
    pub neighbor_dist: f64,
    pub time_horizon: f64,
    pub time_horizon_obst: f64,
    pub max_speed: f64,
    /// Added to each agent's radius when building half-planes only; the
    /// simulator's collision test uses the true radii.
    #[serde(default = "default_radius_margin")]
    pub radius_margin: f64,
}

fn default_radius_margin() -> f64 {
    0.01
}

impl OrcaParams {
    /// RVO2 defaults with `max_speed` tied to the agents' preferred speed.
    pub fn for_speed(v_pref: f64) -> Self {
        Self {
            neighbor_dist: 10.0,
            time_horizon: 5.0,
            time_horizon_obst: 5.0,
            max_speed: v_pref,
            radius_margin: default_radius_margin(),
        }
    }

    pub fn is_valid(&self) -> bool {
        [self.neighbor_dist, self.time_horizon, self.time_horizon_obst, self.max_speed]
            .iter()
            .all(|x| x.is_finite() && *x > 0.0)
            && self.radius_margin.is_finite()
            && self.radius_margin >= 0.0
    }
}

/// Directed boundary of a velocity half-plane; feasible velocities lie to
/// the left of `direction` through `point`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Line {
    pub point: Vec2,
    pub direction: Vec2,
}

/// Velocity toward the goal at `min(v_pref, d_g / dt)`.
pub fn preferred_velocity(agent: &AgentState, dt: f64) -> Vec2 {
    let to_goal = agent.goal - agent.position;
    let dist = to_goal.norm();
    if dist <= 0.0 {
        return Vec2::ZERO;
    }
    let speed = agent.v_pref.min(dist / dt);
    to_goal * (speed / dist)
}

/// ORCA half-plane induced on `agent` by `other`.
pub fn orca_line(agent: &AgentState, other: &AgentState, time_horizon: f64, dt: f64) -> Line {
    orca_line_with_margin(agent, other, time_horizon, dt, 0.0)
}

/// As [`orca_line`], with both radii inflated by `margin`.
pub fn orca_line_with_margin(
    agent: &AgentState,
    other: &AgentState,
    time_horizon: f64,
    dt: f64,
    margin: f64,
) -> Line {
    let inv_horizon = 1.0 / time_horizon;
    let rel_pos = other.position - agent.position;
    let rel_vel = agent.velocity - other.velocity;
    let dist_sq = rel_pos.norm_sq();
    let combined = agent.radius + other.radius + 2.0 * margin;
    let combined_sq = combined * combined;

    let (direction, u) = if dist_sq > combined_sq {
        // Vector from cutoff center to relative velocity.
        let w = rel_vel - rel_pos * inv_horizon;
        let w_len_sq = w.norm_sq();
        let dot1 = w.dot(rel_pos);
        if dot1 < 0.0 && dot1 * dot1 > combined_sq * w_len_sq {
            // Project on the cutoff circle.
            let w_len = w_len_sq.sqrt();
            let unit_w = w * (1.0 / w_len);
            (
                Vec2::new(unit_w.y, -unit_w.x),
                unit_w * (combined * inv_horizon - w_len),
            )
        } else {
            // Project on the nearer leg.
            let leg = (dist_sq - combined_sq).sqrt();
            let direction = if rel_pos.det(w) > 0.0 {
                Vec2::new(
                    rel_pos.x * leg - rel_pos.y * combined,
                    rel_pos.x * combined + rel_pos.y * leg,
                ) * (1.0 / dist_sq)
            } else {
                -Vec2::new(
                    rel_pos.x * leg + rel_pos.y * combined,
                    -rel_pos.x * combined + rel_pos.y * leg,
                ) * (1.0 / dist_sq)
            };
            let dot2 = rel_vel.dot(direction);
            (direction, direction * dot2 - rel_vel)
        }
    } else {
        // Already overlapping: resolve within one time step.
        let inv_dt = 1.0 / dt;
        let w = rel_vel - rel_pos * inv_dt;
        let w_len = w.norm();
        let unit_w = if w_len > 0.0 { w * (1.0 / w_len) } else { Vec2::new(1.0, 0.0) };
        (
            Vec2::new(unit_w.y, -unit_w.x),
            unit_w * (combined * inv_dt - w_len),
        )
    };
    Line {
        point: agent.velocity + u * 0.5,
        direction,
    }
}

/// Velocity closest to the preferred velocity inside every ORCA half-plane
/// and the speed disc; falls back to the least-penetrating velocity when
/// the half-planes have no common point.
pub fn orca_velocity(
    agent: &AgentState,
    visible_neighbors: &[&AgentState],
    params: &OrcaParams,
    dt: f64,
) -> Vec2 {
    let mut neighbors: Vec<(f64, usize)> = visible_neighbors
        .iter()
        .enumerate()
        .map(|(i, n)| ((n.position - agent.position).norm_sq(), i))
        .filter(|(d, _)| *d < params.neighbor_dist * params.neighbor_dist)
        .collect();
    neighbors.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let lines: Vec<Line> = neighbors
        .iter()
        .map(|&(_, i)| {
            orca_line_with_margin(agent, visible_neighbors[i], params.time_horizon, dt, params.radius_margin)
        })
        .collect();
    solve(&lines, params.max_speed, preferred_velocity(agent, dt))
}

/// Runs the 2D program and, if it fails, the 3D fallback.
pub fn solve(lines: &[Line], max_speed: f64, preferred: Vec2) -> Vec2 {
    let mut result = Vec2::ZERO;
    let fail = linear_program2(lines, max_speed, preferred, false, &mut result);
    if fail < lines.len() {
        linear_program3(lines, fail, max_speed, &mut result);
    }
    result
}

fn linear_program1(
    lines: &[Line],
    line_no: usize,
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> bool {
    let line = lines[line_no];
    let dot = line.point.dot(line.direction);
    let discriminant = dot * dot + radius * radius - line.point.norm_sq();
    if discriminant < 0.0 {
        // Max speed circle fully invalidates this line.
        return false;
    }
    let sqrt_disc = discriminant.sqrt();
    let mut t_left = -dot - sqrt_disc;
    let mut t_right = -dot + sqrt_disc;

    for other in &lines[..line_no] {
        let denominator = line.direction.det(other.direction);
        let numerator = other.direction.det(line.point - other.point);
        if denominator.abs() <= LP_EPSILON {
            // Parallel lines.
            if numerator < 0.0 {
                return false;
            }
            continue;
        }
        let t = numerator / denominator;
        if denominator >= 0.0 {
            t_right = t_right.min(t);
        } else {
            t_left = t_left.max(t);
        }
        if t_left > t_right {
            return false;
        }
    }

    *result = if direction_opt {
        if opt.dot(line.direction) > 0.0 {
            line.point + line.direction * t_right
        } else {
            line.point + line.direction * t_left
        }
    } else {
        let t = line.direction.dot(opt - line.point);
        line.point + line.direction * t.clamp(t_left, t_right)
    };
    true
}

/// Returns the index of the first line that could not be satisfied, or
/// `lines.len()` on success.
fn linear_program2(
    lines: &[Line],
    radius: f64,
    opt: Vec2,
    direction_opt: bool,
    result: &mut Vec2,
) -> usize {
    *result = if direction_opt {
        opt * radius
    } else if opt.norm_sq() > radius * radius {
        opt.normalized() * radius
    } else {
        opt
    };
    for i in 0..lines.len() {
        if lines[i].direction.det(lines[i].point - *result) > 0.0 {
            let previous = *result;
            if !linear_program1(lines, i, radius, opt, direction_opt, result) {
                *result = previous;
                return i;
            }
        }
    }
    lines.len()
}

fn linear_program3(lines: &[Line], begin: usize, radius: f64, result: &mut Vec2) {
    let mut distance = 0.0;
    for i in begin..lines.len() {
        let line_i = lines[i];
        if line_i.direction.det(line_i.point - *result) <= distance {
            continue;
        }
        let mut projected = Vec::with_capacity(i);
        for line_j in &lines[..i] {
            let determinant = line_i.direction.det(line_j.direction);
            let point = if determinant.abs() <= LP_EPSILON {
                if line_i.direction.dot(line_j.direction) > 0.0 {
                    // Same direction.
                    continue;
                }
                (line_i.point + line_j.point) * 0.5
            } else {
                line_i.point
                    + line_i.direction
                        * (line_j.direction.det(line_i.point - line_j.point) / determinant)
            };
            projected.push(Line {
                point,
                direction: (line_j.direction - line_i.direction).normalized(),
            });
        }
        let previous = *result;
        let toward = Vec2::new(-line_i.direction.y, line_i.direction.x);
        if linear_program2(&projected, radius, toward, true, result) < projected.len() {
            // Only fails through floating point error; keep the old value.
            *result = previous;
        }
        distance = line_i.direction.det(line_i.point - *result);
    }
}
