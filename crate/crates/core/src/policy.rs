//! Discrete action space and one-step lookahead action selection.
//!
//! Each candidate action is scored as `R(s, a) + gamma * V(s')`, where `s'`
//! moves the robot by the action and every peer by its current velocity.

use std::f64::consts::{E, PI};

use crate::geometry::Vec2;
use crate::model::{value_batch, ModelParams};
use crate::obs::{to_robot_frame, JointObservation};
use crate::rng::RngStream;
use crate::scenario::{AgentKind, AgentState, ScenarioConfig};
use crate::sim::{detect_events, integrate, reward, Action};

pub const N_SPEEDS: usize = 5;
pub const N_HEADINGS: usize = 16;

/// Discount used for lookahead scoring outside of training.
pub const DEFAULT_GAMMA: f64 = 0.9;

/// The 80 actions, speed-major: index `k * 16 + j` is speed `k`, heading `j`.
#[derive(Debug, Clone, PartialEq)]
pub struct ActionSpace {
    actions: Vec<Action>,
}

impl ActionSpace {
    pub fn len(&self) -> usize {
        self.actions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.actions.is_empty()
    }

    pub fn get(&self, index: usize) -> Action {
        self.actions[index]
    }

    pub fn actions(&self) -> &[Action] {
        &self.actions
    }

    /// Distinct speeds, increasing.
    pub fn speeds(&self) -> Vec<f64> {
        self.actions.iter().step_by(N_HEADINGS).map(|a| a.speed).collect()
    }

    pub fn headings(&self) -> Vec<f64> {
        self.actions[..N_HEADINGS].iter().map(|a| a.heading).collect()
    }
}

/// Speeds `v_pref (e^{k/5} - 1) / (e - 1)` for `k = 1..5` crossed with
/// headings `2 pi j / 16`.
///
/// # Panics
///
/// If `v_pref` is not a positive finite number.
pub fn action_space(v_pref: f64) -> ActionSpace {
    assert!(v_pref.is_finite() && v_pref > 0.0, "v_pref must be positive, got {v_pref}");
    let mut actions = Vec::with_capacity(N_SPEEDS * N_HEADINGS);
    for k in 1..=N_SPEEDS {
        let speed = if k == N_SPEEDS {
            v_pref
        } else {
            v_pref * ((k as f64 / N_SPEEDS as f64).exp() - 1.0) / (E - 1.0)
        };
        for j in 0..N_HEADINGS {
            let heading = 2.0 * PI * j as f64 / N_HEADINGS as f64;
            actions.push(Action { speed, heading });
        }
    }
    ActionSpace { actions }
}

/// Predicted world state after one step: the robot follows `action`, every
/// other agent keeps its current velocity.
pub fn predict_states(states: &[AgentState], action: Action, dt: f64) -> Vec<AgentState> {
    states
        .iter()
        .map(|s| match s.kind {
            AgentKind::CenterRobot => integrate(s, action.velocity(), dt).0,
            _ => AgentState {
                position: s.position + s.velocity * dt,
                ..s.clone()
            },
        })
        .collect()
}

pub fn lookahead_propagate(states: &[AgentState], action: Action, dt: f64) -> JointObservation {
    to_robot_frame(&predict_states(states, action, dt))
}

fn robot(states: &[AgentState]) -> &AgentState {
    states
        .iter()
        .find(|s| s.kind == AgentKind::CenterRobot)
        .expect("scene has no center robot")
}

/// Lookahead score of every action, in index order.
pub fn action_scores(
    states: &[AgentState],
    params: &ModelParams,
    space: &ActionSpace,
    gamma: f64,
    config: &ScenarioConfig,
) -> Vec<f64> {
    let prev_goal_distance = robot(states).goal_distance();
    let mut rewards = Vec::with_capacity(space.len());
    let mut next_obs = Vec::with_capacity(space.len());
    for &a in space.actions() {
        let next = predict_states(states, a, config.dt);
        // Timeouts share the shaping reward, so the clock is irrelevant.
        let event = detect_events(&next, 0.0, config);
        rewards.push(reward(prev_goal_distance, robot(&next).goal_distance(), &event, config));
        next_obs.push(to_robot_frame(&next));
    }
    let values = value_batch(&next_obs, params);
    rewards.iter().zip(&values).map(|(r, v)| r + gamma * v).collect()
}

/// Index of the largest score; the lowest index wins ties.
pub fn argmax(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &s) in scores.iter().enumerate() {
        if s > scores[best] {
            best = i;
        }
    }
    best
}

/// Epsilon-greedy selection. Exactly one uniform draw is consumed for the
/// exploration coin, plus one more when exploring.
#[allow(clippy::too_many_arguments)]
pub fn select_action(
    states: &[AgentState],
    params: &ModelParams,
    space: &ActionSpace,
    epsilon: f64,
    gamma: f64,
    config: &ScenarioConfig,
    rng: &mut RngStream,
) -> (Action, usize) {
    assert!((0.0..=1.0).contains(&epsilon), "epsilon must lie in [0, 1], got {epsilon}");
    let index = if rng.unit() < epsilon {
        rng.below(space.len())
    } else {
        argmax(&action_scores(states, params, space, gamma, config))
    };
    (space.get(index), index)
}

/// World-frame bearing from the robot to its goal.
pub fn goal_bearing(states: &[AgentState]) -> f64 {
    let r = robot(states);
    let d: Vec2 = r.goal - r.position;
    d.angle()
}
