//! Crowd-navigation value learning over robot-crowd heterogeneous relation
//! graphs.
//!
//! The crate is organised bottom-up:
//!
//! * [`scenario`] and [`obs`]: agent state, circle-crossing scenario
//!   sampling and the robot-centric observation transform.
//! * [`sim`]: ORCA-driven peers, kinematic integration, events and the
//!   shaped reward.
//! * [`autodiff`]: a small tape-based reverse-mode engine plus Adam.
//! * [`model`]: per-type embeddings, the five-relation graph, the
//!   heterogeneous GNN and the value head.
//! * [`policy`]: the 80-action space and one-step lookahead selection.
//! * [`trainer`]: replay, Bellman targets and the training loop.
//! * [`eval`]: metrics, seeded evaluation suites and trajectory export.
//! * [`selfcheck`]: built-in gradient, reduction and ORCA consistency suites.

pub mod autodiff;
pub mod eval;
pub mod geometry;
pub mod model;
pub mod obs;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod selfcheck;
pub mod sim;
pub mod trainer;

pub use geometry::Vec2;
pub use obs::{to_robot_frame, CenterObs, JointObservation, NeighborObs};
pub use rng::{RngStream, StreamKind};
pub use scenario::{sample_circle_crossing, Ablation, AgentKind, AgentState, ScenarioConfig};
