//! Time-stepped crowd environment.

mod env;
pub mod orca;
mod reward;

pub use env::{
    center_index, detect_events, integrate, run_orca_only, surface_distance, Action,
    AgentSnapshot, Env, EventKind, OrcaOnlyRollout, SimError, StepEvent, StepOutcome, StepRecord,
};
pub use orca::{orca_velocity, OrcaParams};
pub use reward::{reward, RewardTable, REWARD};
