use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_heading, Vec2};
use crate::rng::RngStream;
use crate::scenario::{sample_circle_crossing, AgentKind, AgentState, ScenarioConfig, ScenarioError};

use super::orca::{orca_velocity, OrcaParams};
use super::reward::reward;

/// Speed slack tolerated before a command counts as over-speed.
const SPEED_SLACK: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("episode already finished; reset before stepping again")]
    StepAfterDone,
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Center-robot command: speed plus absolute world-frame heading.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Action {
    pub speed: f64,
    pub heading: f64,
}

impl Action {
    pub fn velocity(&self) -> Vec2 {
        Vec2::from_polar(self.speed, self.heading)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EventKind {
    None,
    ReachedGoal,
    Collision,
    Timeout,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepEvent {
    pub kind: EventKind,
    /// Smallest surface gap between the center robot and any other agent;
    /// `+inf` when the robot is alone.
    pub min_separation: f64,
}

impl StepEvent {
    pub fn is_terminal(&self) -> bool {
        self.kind != EventKind::None
    }
}

/// Moves an agent with the commanded velocity for `dt`. Returns the new
/// state and whether the command had to be clamped to `v_pref`.
pub fn integrate(agent: &AgentState, commanded: Vec2, dt: f64) -> (AgentState, bool) {
    let speed = commanded.norm();
    let (velocity, clamped) = if speed > agent.v_pref + SPEED_SLACK {
        (commanded * (agent.v_pref / speed), true)
    } else {
        (commanded, false)
    };
    let heading = if velocity.norm() > 0.0 {
        wrap_heading(velocity.angle())
    } else {
        agent.heading
    };
    let next = AgentState {
        position: agent.position + velocity * dt,
        velocity,
        heading,
        ..agent.clone()
    };
    (next, clamped)
}

pub fn surface_distance(a: &AgentState, b: &AgentState) -> f64 {
    a.position.distance(b.position) - a.radius - b.radius
}

/// Index of the unique center robot.
pub fn center_index(states: &[AgentState]) -> usize {
    states
        .iter()
        .position(|s| s.kind == AgentKind::CenterRobot)
        .expect("scene has no center robot")
}

/// Classifies the post-integration scene. Precedence is
/// Collision > ReachedGoal > Timeout.
pub fn detect_events(states: &[AgentState], t: f64, config: &ScenarioConfig) -> StepEvent {
    let c = center_index(states);
    let robot = &states[c];
    let min_separation = states
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != c)
        .map(|(_, s)| surface_distance(robot, s))
        .fold(f64::INFINITY, f64::min);
    let kind = if min_separation < 0.0 {
        EventKind::Collision
    } else if robot.goal_distance() < config.agent_radius {
        EventKind::ReachedGoal
    } else if t >= config.time_limit - 1e-9 {
        EventKind::Timeout
    } else {
        EventKind::None
    };
    StepEvent {
        kind,
        min_separation,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub reward: f64,
    pub event: StepEvent,
    pub done: bool,
}

/// Per-agent entry of a trajectory record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSnapshot {
    pub p: Vec2,
    pub v: Vec2,
    pub r: f64,
    pub kind: AgentKind,
}

/// One JSON-lines trajectory record, written after each step.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub agents: Vec<AgentSnapshot>,
    pub action: Action,
    pub reward: f64,
    pub event: EventKind,
    /// `None` when the robot has no neighbours.
    pub min_separation: Option<f64>,
}

impl StepRecord {
    pub fn new(t: f64, states: &[AgentState], action: Action, outcome: &StepOutcome) -> Self {
        let sep = outcome.event.min_separation;
        Self {
            t,
            agents: states
                .iter()
                .map(|s| AgentSnapshot {
                    p: s.position,
                    v: s.velocity,
                    r: s.radius,
                    kind: s.kind,
                })
                .collect(),
            action,
            reward: outcome.reward,
            event: outcome.event.kind,
            min_separation: sep.is_finite().then_some(sep),
        }
    }
}

/// One running episode.
#[derive(Debug, Clone)]
pub struct Env {
    config: ScenarioConfig,
    orca: OrcaParams,
    states: Vec<AgentState>,
    steps: usize,
    done: bool,
    over_speed_commands: usize,
}

impl Env {
    pub fn new(config: ScenarioConfig, states: Vec<AgentState>) -> Self {
        let orca = OrcaParams::for_speed(config.v_pref);
        center_index(&states);
        Self {
            config,
            orca,
            states,
            steps: 0,
            done: false,
            over_speed_commands: 0,
        }
    }

    /// Fresh circle-crossing episode.
    pub fn reset(config: &ScenarioConfig, rng: &mut RngStream) -> Result<Self, SimError> {
        let states = sample_circle_crossing(config, rng)?;
        Ok(Self::new(config.clone(), states))
    }

    pub fn with_orca(mut self, orca: OrcaParams) -> Self {
        self.orca = orca;
        self
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.config
    }

    pub fn states(&self) -> &[AgentState] {
        &self.states
    }

    pub fn robot(&self) -> &AgentState {
        &self.states[center_index(&self.states)]
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn time(&self) -> f64 {
        self.steps as f64 * self.config.dt
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    /// Number of commands clamped to `v_pref` so far.
    pub fn over_speed_commands(&self) -> usize {
        self.over_speed_commands
    }

    /// Velocities the ORCA-driven peers choose from the current states.
    /// Humans never see the center robot; other robots see everyone.
    pub fn peer_velocities(&self) -> Vec<Option<Vec2>> {
        let dt = self.config.dt;
        self.states
            .iter()
            .enumerate()
            .map(|(i, agent)| {
                let human = match agent.kind {
                    AgentKind::CenterRobot => return None,
                    AgentKind::Human => true,
                    AgentKind::OtherRobot => false,
                };
                let visible: Vec<&AgentState> = self
                    .states
                    .iter()
                    .enumerate()
                    .filter(|(j, s)| *j != i && !(human && s.kind == AgentKind::CenterRobot))
                    .map(|(_, s)| s)
                    .collect();
                Some(orca_velocity(agent, &visible, &self.orca, dt))
            })
            .collect()
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, SimError> {
        if self.done {
            return Err(SimError::StepAfterDone);
        }
        let dt = self.config.dt;
        let peers = self.peer_velocities();
        let robot_velocity = action.velocity();
        let prev_goal_distance = self.robot().goal_distance();

        let mut next = Vec::with_capacity(self.states.len());
        for (agent, peer) in self.states.iter().zip(&peers) {
            let (state, clamped) = integrate(agent, peer.unwrap_or(robot_velocity), dt);
            if clamped {
                self.over_speed_commands += 1;
            }
            next.push(state);
        }
        self.states = next;
        self.steps += 1;

        let event = detect_events(&self.states, self.time(), &self.config);
        let goal_distance = self.robot().goal_distance();
        let reward = reward(prev_goal_distance, goal_distance, &event, &self.config);
        self.done = event.is_terminal();
        Ok(StepOutcome {
            reward,
            event,
            done: self.done,
        })
    }
}

/// Result of a scene where every agent, the center robot included, runs
/// ORCA with full mutual visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct OrcaOnlyRollout {
    pub steps: usize,
    pub min_pairwise_separation: f64,
    pub all_reached: bool,
}

/// Rolls an ORCA-only scene until everyone is at their goal or the time
/// limit passes, tracking the smallest pairwise surface gap.
pub fn run_orca_only(config: &ScenarioConfig, mut states: Vec<AgentState>) -> OrcaOnlyRollout {
    let orca = OrcaParams::for_speed(config.v_pref);
    let dt = config.dt;
    let max_steps = config.max_steps();
    let min_pairwise = |s: &[AgentState]| {
        let mut best = f64::INFINITY;
        for i in 0..s.len() {
            for j in i + 1..s.len() {
                best = best.min(surface_distance(&s[i], &s[j]));
            }
        }
        best
    };
    let reached = |s: &[AgentState]| s.iter().all(|a| a.goal_distance() < a.radius);
    let mut min_sep = min_pairwise(&states);
    let mut steps = 0;
    while steps < max_steps && !reached(&states) {
        let velocities: Vec<Vec2> = states
            .iter()
            .enumerate()
            .map(|(i, a)| {
                let visible: Vec<&AgentState> = states
                    .iter()
                    .enumerate()
                    .filter(|(j, _)| *j != i)
                    .map(|(_, s)| s)
                    .collect();
                orca_velocity(a, &visible, &orca, dt)
            })
            .collect();
        states = states
            .iter()
            .zip(&velocities)
            .map(|(a, v)| integrate(a, *v, dt).0)
            .collect();
        min_sep = min_sep.min(min_pairwise(&states));
        steps += 1;
    }
    OrcaOnlyRollout {
        steps,
        min_pairwise_separation: min_sep,
        all_reached: reached(&states),
    }
}
