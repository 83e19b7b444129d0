//! Agent state, scenario configuration and circle-crossing placement.

use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{wrap_heading, Vec2};
use crate::rng::RngStream;

/// Minimum surface gap between any two spawn points (and any two goals).
pub const SPAWN_CLEARANCE: f64 = 0.2;
/// Rejection-sampling budget per agent.
pub const MAX_SPAWN_ATTEMPTS: usize = 1000;
/// Radial jitter of starts and goals, meters.
pub const RADIAL_JITTER: f64 = 0.5;
/// Angular jitter of goals around the antipode, radians.
pub const ANGULAR_JITTER: f64 = 0.5;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("invalid scenario config: {0}")]
    Invalid(String),
    #[error("could not place agent {agent} after {attempts} attempts (scenario over-dense)")]
    OverDense { agent: usize, attempts: usize },
    #[error("failed to read scenario config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scenario config: {0}")]
    Parse(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum AgentKind {
    CenterRobot,
    Human,
    OtherRobot,
}

/// Physical state of one agent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentState {
    pub position: Vec2,
    pub velocity: Vec2,
    pub radius: f64,
    pub goal: Vec2,
    pub v_pref: f64,
    /// Heading in `[0, 2pi)`.
    pub heading: f64,
    pub kind: AgentKind,
}

impl AgentState {
    pub fn goal_distance(&self) -> f64 {
        self.position.distance(self.goal)
    }

    /// Checks `r > 0`, `v_pref > 0` and `|v| <= v_pref`.
    pub fn is_valid(&self) -> bool {
        self.radius > 0.0 && self.v_pref > 0.0 && self.velocity.norm() <= self.v_pref + 1e-9
    }
}

/// Model variant switches: heterogeneous vs homogeneous graph, with or
/// without the category bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
pub enum Ablation {
    #[default]
    HeR,
    #[serde(rename = "HeR_nocate")]
    HeRNoCate,
    HoR,
    #[serde(rename = "HoR_nocate")]
    HoRNoCate,
}

impl Ablation {
    pub const ALL: [Ablation; 4] = [
        Ablation::HeR,
        Ablation::HeRNoCate,
        Ablation::HoR,
        Ablation::HoRNoCate,
    ];

    pub fn is_heterogeneous(self) -> bool {
        matches!(self, Ablation::HeR | Ablation::HeRNoCate)
    }

    pub fn uses_category(self) -> bool {
        matches!(self, Ablation::HeR | Ablation::HoR)
    }

    pub fn tag(self) -> &'static str {
        match self {
            Ablation::HeR => "HeR",
            Ablation::HeRNoCate => "HeR_nocate",
            Ablation::HoR => "HoR",
            Ablation::HoRNoCate => "HoR_nocate",
        }
    }

    pub fn from_tag(tag: &str) -> Option<Ablation> {
        Ablation::ALL.into_iter().find(|a| a.tag() == tag)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioConfig {
    pub n_humans: usize,
    pub n_other_robots: usize,
    pub circle_radius: f64,
    pub agent_radius: f64,
    pub v_pref: f64,
    pub dt: f64,
    pub time_limit: f64,
    pub discomfort_dist: f64,
    pub seed: u64,
    pub ablation: Ablation,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_humans: 5,
            n_other_robots: 2,
            circle_radius: 4.0,
            agent_radius: 0.3,
            v_pref: 1.0,
            dt: 0.25,
            time_limit: 25.0,
            discomfort_dist: 0.2,
            seed: 0,
            ablation: Ablation::HeR,
        }
    }
}

impl ScenarioConfig {
    /// `nH mO` crossing with the remaining fields at their defaults.
    pub fn crossing(n_humans: usize, n_other_robots: usize) -> Self {
        Self {
            n_humans,
            n_other_robots,
            ..Self::default()
        }
    }

    pub fn with_ablation(mut self, ablation: Ablation) -> Self {
        self.ablation = ablation;
        self
    }

    pub fn n_agents(&self) -> usize {
        1 + self.n_humans + self.n_other_robots
    }

    /// Largest step count an episode can take.
    pub fn max_steps(&self) -> usize {
        (self.time_limit / self.dt - 1e-9).ceil() as usize
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let finite = [
            self.circle_radius,
            self.agent_radius,
            self.v_pref,
            self.dt,
            self.time_limit,
            self.discomfort_dist,
        ]
        .iter()
        .all(|x| x.is_finite());
        if !finite {
            return Err(ScenarioError::Invalid("non-finite field".into()));
        }
        if self.dt <= 0.0 {
            return Err(ScenarioError::Invalid(format!("dt must be > 0, got {}", self.dt)));
        }
        if self.time_limit <= self.dt {
            return Err(ScenarioError::Invalid(format!(
                "time_limit {} must exceed dt {}",
                self.time_limit, self.dt
            )));
        }
        if self.discomfort_dist < 0.0 {
            return Err(ScenarioError::Invalid("discomfort_dist must be >= 0".into()));
        }
        if self.agent_radius <= 0.0 || self.v_pref <= 0.0 || self.circle_radius <= 0.0 {
            return Err(ScenarioError::Invalid(
                "agent_radius, v_pref and circle_radius must be > 0".into(),
            ));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self, ScenarioError> {
        let cfg: ScenarioConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text = std::fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }
}

/// Samples a circle-crossing scene. The center robot is always first,
/// followed by the humans and then the other robots.
pub fn sample_circle_crossing(
    config: &ScenarioConfig,
    rng: &mut RngStream,
) -> Result<Vec<AgentState>, ScenarioError> {
    config.validate()?;
    let r = config.agent_radius;
    let radius = config.circle_radius;
    let mut agents = Vec::with_capacity(config.n_agents());
    agents.push(AgentState {
        position: Vec2::new(0.0, -radius),
        velocity: Vec2::ZERO,
        radius: r,
        goal: Vec2::new(0.0, radius),
        v_pref: config.v_pref,
        heading: PI / 2.0,
        kind: AgentKind::CenterRobot,
    });

    let kinds = std::iter::repeat_n(AgentKind::Human, config.n_humans)
        .chain(std::iter::repeat_n(AgentKind::OtherRobot, config.n_other_robots));
    for kind in kinds {
        let index = agents.len();
        let mut placed = None;
        for _ in 0..MAX_SPAWN_ATTEMPTS {
            let angle = rng.uniform(0.0, 2.0 * PI);
            let start_radius = radius + rng.uniform(-RADIAL_JITTER, RADIAL_JITTER);
            let goal_radius = radius + rng.uniform(-RADIAL_JITTER, RADIAL_JITTER);
            let goal_angle = angle + PI + rng.uniform(-ANGULAR_JITTER, ANGULAR_JITTER);
            let position = Vec2::from_polar(start_radius, angle);
            let goal = Vec2::from_polar(goal_radius, goal_angle);
            let clear = agents.iter().all(|other| {
                let min_gap = r + other.radius + SPAWN_CLEARANCE;
                position.distance(other.position) >= min_gap && goal.distance(other.goal) >= min_gap
            });
            if clear {
                placed = Some((position, goal));
                break;
            }
        }
        let (position, goal) = placed.ok_or(ScenarioError::OverDense {
            agent: index,
            attempts: MAX_SPAWN_ATTEMPTS,
        })?;
        agents.push(AgentState {
            position,
            velocity: Vec2::ZERO,
            radius: r,
            goal,
            v_pref: config.v_pref,
            heading: wrap_heading((goal - position).angle()),
            kind,
        });
    }
    Ok(agents)
}
