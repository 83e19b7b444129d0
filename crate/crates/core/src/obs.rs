//! Robot-centric observation of a scene.
//!
//! All coordinates are expressed in a frame centred on the center robot
//! whose +x axis points from the robot to its goal. When the robot sits
//! exactly on its goal the robot heading defines the axis instead.

use serde::{Deserialize, Serialize};

use crate::geometry::{wrap_angle, Vec2};
use crate::scenario::{AgentKind, AgentState};

/// Below this robot-to-goal length the heading defines the frame axis.
pub const DEGENERATE_GOAL_EPS: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CenterObs {
    pub goal_distance: f64,
    pub v_pref: f64,
    pub theta: f64,
    pub radius: f64,
    pub vx: f64,
    pub vy: f64,
}

impl CenterObs {
    pub const DIM: usize = 6;

    pub fn to_array(&self) -> [f64; Self::DIM] {
        [self.goal_distance, self.v_pref, self.theta, self.radius, self.vx, self.vy]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NeighborObs {
    pub px: f64,
    pub py: f64,
    pub vx: f64,
    pub vy: f64,
    pub radius: f64,
    pub distance: f64,
    pub radius_sum: f64,
    /// 1 for a human, 0 for another robot.
    pub category: f64,
}

impl NeighborObs {
    pub const DIM: usize = 8;

    pub fn to_array(&self) -> [f64; Self::DIM] {
        [
            self.px,
            self.py,
            self.vx,
            self.vy,
            self.radius,
            self.distance,
            self.radius_sum,
            self.category,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JointObservation {
    pub cr: CenterObs,
    pub humans: Vec<NeighborObs>,
    pub other_robots: Vec<NeighborObs>,
}

impl JointObservation {
    pub fn n_agents(&self) -> usize {
        1 + self.humans.len() + self.other_robots.len()
    }
}

/// Converts world-frame states into the robot-centric joint observation.
///
/// Panics unless exactly one agent is the center robot.
pub fn to_robot_frame(states: &[AgentState]) -> JointObservation {
    let mut centers = states.iter().filter(|s| s.kind == AgentKind::CenterRobot);
    let robot = centers.next().expect("scene has no center robot");
    assert!(centers.next().is_none(), "scene has more than one center robot");

    let to_goal = robot.goal - robot.position;
    let goal_distance = to_goal.norm();
    let axis = if goal_distance > DEGENERATE_GOAL_EPS {
        to_goal.angle()
    } else {
        robot.heading
    };
    let rotate = |v: Vec2| v.rotated(-axis);
    let v = rotate(robot.velocity);
    let cr = CenterObs {
        goal_distance,
        v_pref: robot.v_pref,
        theta: wrap_angle(robot.heading - axis),
        radius: robot.radius,
        vx: v.x,
        vy: v.y,
    };

    let neighbor = |s: &AgentState| {
        let p = rotate(s.position - robot.position);
        let v = rotate(s.velocity);
        NeighborObs {
            px: p.x,
            py: p.y,
            vx: v.x,
            vy: v.y,
            radius: s.radius,
            distance: robot.position.distance(s.position),
            radius_sum: s.radius + robot.radius,
            category: if s.kind == AgentKind::Human { 1.0 } else { 0.0 },
        }
    };
    let humans = states
        .iter()
        .filter(|s| s.kind == AgentKind::Human)
        .map(neighbor)
        .collect();
    let other_robots = states
        .iter()
        .filter(|s| s.kind == AgentKind::OtherRobot)
        .map(neighbor)
        .collect();
    JointObservation {
        cr,
        humans,
        other_robots,
    }
}
