//! Built-in consistency suites run by `hetnav selfcheck`: gradients
//! against finite differences, the tied-relation reduction to a plain
//! homogeneous layer, and ORCA-only collision freedom.

use std::f64::consts::PI;

use crate::autodiff::Tensor;
use crate::geometry::Vec2;
use crate::model::{build_het_graph, hetgnn_layer_eval, value, value_and_grad, ModelDims, ModelParams};
use crate::obs::{to_robot_frame, JointObservation};
use crate::rng::{RngStream, StreamKind};
use crate::scenario::{sample_circle_crossing, Ablation, AgentKind, AgentState, ScenarioConfig};
use crate::sim::run_orca_only;

#[derive(Debug, Clone, PartialEq)]
pub struct CheckReport {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

/// A scene with the robot plus `n_humans` and `n_other` randomly placed
/// and moving neighbours.
pub fn random_states(n_humans: usize, n_other: usize, rng: &mut RngStream) -> Vec<AgentState> {
    let mut agent = |kind| AgentState {
        position: Vec2::new(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)),
        velocity: Vec2::from_polar(rng.uniform(0.0, 1.0), rng.uniform(0.0, 2.0 * PI)),
        radius: rng.uniform(0.2, 0.4),
        goal: Vec2::new(rng.uniform(-4.0, 4.0), rng.uniform(-4.0, 4.0)),
        v_pref: 1.0,
        heading: rng.uniform(0.0, 2.0 * PI),
        kind,
    };
    let mut states = vec![agent(AgentKind::CenterRobot)];
    states.extend((0..n_humans).map(|_| agent(AgentKind::Human)));
    states.extend((0..n_other).map(|_| agent(AgentKind::OtherRobot)));
    states
}

/// Random observation with 1 to 8 agents in total.
pub fn random_scene(rng: &mut RngStream) -> JointObservation {
    let extra = rng.below(8);
    let n_humans = rng.below(extra + 1);
    to_robot_frame(&random_states(n_humans, extra - n_humans, rng))
}

/// Glorot weights with small random biases so every tensor matters.
pub fn random_params(ablation: Ablation, dims: &ModelDims, rng: &mut RngStream) -> ModelParams {
    let mut p = ModelParams::init(ablation, dims, rng);
    for t in p.tensors_mut() {
        if t.rows() == 1 {
            for x in t.data_mut() {
                *x = rng.uniform(-0.1, 0.1);
            }
        }
    }
    p
}

/// Largest relative error between backprop and central differences.
pub fn gradient_check(n_scenes: usize, coords_per_scene: usize, seed: u64) -> CheckReport {
    const H: f64 = 1e-5;
    const TOL: f64 = 1e-4;
    let mut rng = RngStream::new(seed, StreamKind::Misc, 1);
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for _ in 0..n_scenes {
        let obs = random_scene(&mut rng);
        let params = random_params(Ablation::HeR, &ModelDims::default(), &mut rng);
        let (_, grads) = value_and_grad(&obs, &params);
        for _ in 0..coords_per_scene {
            let t = rng.below(grads.len());
            let i = rng.below(grads[t].len());
            let mut probe = params.clone();
            probe.tensors_mut()[t].data_mut()[i] += H;
            let plus = value(&obs, &probe);
            probe.tensors_mut()[t].data_mut()[i] -= 2.0 * H;
            let minus = value(&obs, &probe);
            let fd = (plus - minus) / (2.0 * H);
            let an = grads[t].data()[i];
            let err = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-4);
            worst = worst.max(err);
            checked += 1;
        }
    }
    CheckReport {
        name: "gradient",
        passed: worst <= TOL,
        detail: format!("{checked} coordinates, max relative error {worst:.2e}"),
    }
}

/// Dense `relu(H W1 + A H W2)` over the complete graph on the scene.
fn homogeneous_layer(feats: &Tensor, w_self: &Tensor, w_neighbor: &Tensor) -> Tensor {
    let n = feats.rows();
    let mut summed = Tensor::zeros(n, feats.cols());
    for v in 0..n {
        for u in (0..n).filter(|&u| u != v) {
            for (s, x) in summed.row_mut(v).iter_mut().zip(feats.row(u)) {
                *s += x;
            }
        }
    }
    let mut out = feats.matmul(w_self);
    out.add_assign(&summed.matmul(w_neighbor));
    out.map(|x| x.max(0.0))
}

/// Tied relation weights must reproduce the homogeneous layer.
pub fn reduction_check(n_scenes: usize, seed: u64) -> CheckReport {
    const TOL: f64 = 1e-9;
    let mut rng = RngStream::new(seed, StreamKind::Misc, 2);
    let mut worst: f64 = 0.0;
    for _ in 0..n_scenes {
        let obs = random_scene(&mut rng);
        let mut params = random_params(Ablation::HeR, &ModelDims::default(), &mut rng);
        params.tie_relations();
        let layer = &params.gnn[0];
        let n = obs.n_agents();
        let d = params.dims.hidden;
        let feats = Tensor::from_vec(n, d, (0..n * d).map(|_| rng.uniform(-1.0, 1.0)).collect());
        let het = hetgnn_layer_eval(&build_het_graph(&obs, Ablation::HeR), &feats, layer);
        let hom = homogeneous_layer(&feats, &layer.relations[0].self_weight, &layer.relations[0].neighbor_weight);
        for (a, b) in het.data().iter().zip(hom.data()) {
            worst = worst.max((a - b).abs());
        }
    }
    CheckReport {
        name: "reduction",
        passed: worst <= TOL,
        detail: format!("{n_scenes} scenes, max abs difference {worst:.2e}"),
    }
}

/// ORCA-only 5H2O episodes never overlap.
pub fn orca_check(n_episodes: usize, seed: u64) -> CheckReport {
    let config = ScenarioConfig::crossing(5, 2);
    let mut worst = f64::INFINITY;
    for i in 0..n_episodes {
        let mut rng = RngStream::new(seed, StreamKind::Misc, 1000 + i as u64);
        let states = sample_circle_crossing(&config, &mut rng).expect("5H2O spawns");
        worst = worst.min(run_orca_only(&config, states).min_pairwise_separation);
    }
    CheckReport {
        name: "orca",
        passed: worst >= 0.0,
        detail: format!("{n_episodes} episodes, min pairwise separation {worst:.4} m"),
    }
}

/// Every suite at its standard size.
pub fn run_all(seed: u64) -> Vec<CheckReport> {
    vec![gradient_check(20, 13, seed), reduction_check(100, seed), orca_check(100, seed)]
}
