//! Value network: embeddings, two heterogeneous GNN layers and the value
//! head, evaluated over a batch of scenes at once.
//!
//! A batch is laid out as the disjoint union of its scene graphs with
//! nodes grouped by type: the `B` center robots in scene order, then every
//! human (scene by scene), then every other robot. The embeddings come out
//! of the per-type MLPs in exactly that order, and the value head reads the
//! first `B` rows.

use std::cell::RefCell;
use std::rc::Rc;

use crate::autodiff::{SparseRows, Tape, Tensor, Var};
use crate::obs::{CenterObs, JointObservation};
use crate::scenario::Ablation;

use super::gnn::hetgnn_layer;
use super::graph::{build_het_graph, GraphPlan, HetGraph};
use super::params::{neighbor_input_dim, ModelParams, ParamVars};

fn neighbor_rows<'a>(
    batch: &'a [JointObservation],
    pick: impl Fn(&'a JointObservation) -> &'a [crate::obs::NeighborObs],
    ablation: Ablation,
) -> Tensor {
    let dim = neighbor_input_dim(ablation);
    let mut data = Vec::new();
    let mut rows = 0;
    for obs in batch {
        for n in pick(obs) {
            data.extend_from_slice(&n.to_array()[..dim]);
            rows += 1;
        }
    }
    Tensor::from_vec(rows, dim, data)
}

/// Node features after embedding, one row per agent in the type-major
/// batch layout.
pub fn embed_on_tape(
    tape: &mut Tape<'_>,
    vars: &ParamVars,
    ablation: Ablation,
    batch: &[JointObservation],
) -> Var {
    let cr_rows: Vec<[f64; CenterObs::DIM]> = batch.iter().map(|o| o.cr.to_array()).collect();
    let x_cr = tape.constant(Tensor::from_rows(&cr_rows));
    let x_h = neighbor_rows(batch, |o| &o.humans, ablation);
    let x_or = neighbor_rows(batch, |o| &o.other_robots, ablation);
    let or_mlp = if ablation.is_heterogeneous() {
        &vars.embed_or
    } else {
        &vars.embed_h
    };

    let mut blocks = vec![vars.embed_cr.forward(tape, x_cr, true)];
    let n_h = x_h.rows();
    let n_or = x_or.rows();
    if n_h > 0 {
        let x = tape.constant(x_h);
        blocks.push(vars.embed_h.forward(tape, x, true));
    }
    if n_or > 0 {
        let x = tape.constant(x_or);
        blocks.push(or_mlp.forward(tape, x, true));
    }
    tape.concat(&blocks)
}

/// Batched graph (type-major layout, see the module docs) and its plan.
pub fn batch_graph(batch: &[JointObservation], ablation: Ablation) -> (HetGraph, GraphPlan) {
    let graphs: Vec<HetGraph> = batch.iter().map(|o| build_het_graph(o, ablation)).collect();
    let b = batch.len();
    let n_h: usize = batch.iter().map(|o| o.humans.len()).sum();
    let (mut next_h, mut next_o) = (b, b + n_h);
    let mut new_index = Vec::new();
    for (i, obs) in batch.iter().enumerate() {
        new_index.push(i);
        new_index.extend(next_h..next_h + obs.humans.len());
        new_index.extend(next_o..next_o + obs.other_robots.len());
        next_h += obs.humans.len();
        next_o += obs.other_robots.len();
    }
    let graph = HetGraph::disjoint_union(&graphs).relabel(&new_index);
    let plan = GraphPlan::new(&graph);
    (graph, plan)
}

type PlanKey = (Ablation, Vec<(usize, usize)>);

const PLAN_CACHE_SIZE: usize = 8;

thread_local! {
    static PLANS: RefCell<Vec<(PlanKey, Rc<GraphPlan>)>> = const { RefCell::new(Vec::new()) };
}

/// [`batch_graph`]'s plan, memoised on the batch composition (most recently
/// used first). Within a scenario every batch of a given size has the same
/// composition, so this is nearly always a hit.
pub fn batch_plan(batch: &[JointObservation], ablation: Ablation) -> Rc<GraphPlan> {
    let key: PlanKey = (
        ablation,
        batch.iter().map(|o| (o.humans.len(), o.other_robots.len())).collect(),
    );
    PLANS.with(|cell| {
        let mut plans = cell.borrow_mut();
        if let Some(i) = plans.iter().position(|(k, _)| *k == key) {
            let entry = plans.remove(i);
            let plan = entry.1.clone();
            plans.insert(0, entry);
            return plan;
        }
        let plan = Rc::new(batch_graph(batch, ablation).1);
        plans.insert(0, (key, plan.clone()));
        plans.truncate(PLAN_CACHE_SIZE);
        plan
    })
}

/// Values of every scene in the batch as a `B x 1` node.
pub fn forward_on_tape(
    tape: &mut Tape<'_>,
    vars: &ParamVars,
    ablation: Ablation,
    batch: &[JointObservation],
) -> Var {
    assert!(!batch.is_empty(), "empty batch");
    let mut h = embed_on_tape(tape, vars, ablation, batch);
    let plan = batch_plan(batch, ablation);
    for layer in &vars.gnn {
        h = hetgnn_layer(tape, &plan, h, layer);
    }
    let b = batch.len();
    let pick = Rc::new(SparseRows::gather(plan.n_nodes, &(0..b).collect::<Vec<_>>()));
    let center = tape.sparse_matmul(pick, h);
    vars.value_head.forward(tape, center, false)
}

/// Per-agent embeddings of one scene (center robot, humans, other robots).
pub fn embed(obs: &JointObservation, params: &ModelParams) -> Tensor {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = embed_on_tape(&mut tape, &vars, params.ablation, std::slice::from_ref(obs));
    tape.value(out).clone()
}

pub fn value_batch(batch: &[JointObservation], params: &ModelParams) -> Vec<f64> {
    if batch.is_empty() {
        return Vec::new();
    }
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward_on_tape(&mut tape, &vars, params.ablation, batch);
    tape.value(out).data().to_vec()
}

pub fn value(obs: &JointObservation, params: &ModelParams) -> f64 {
    value_batch(std::slice::from_ref(obs), params)[0]
}

/// Value and its gradient with respect to every parameter tensor, in
/// [`ModelParams::named_tensors`] order.
pub fn value_and_grad(obs: &JointObservation, params: &ModelParams) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let vars = params.register(&mut tape);
    let out = forward_on_tape(&mut tape, &vars, params.ablation, std::slice::from_ref(obs));
    let v = tape.value(out).item();
    let grads = tape.backward(out);
    let shapes = params.shapes();
    let g = vars
        .all()
        .into_iter()
        .zip(shapes)
        .map(|(var, shape)| grads.get_or_zeros(var, shape))
        .collect();
    (v, g)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::params::ModelDims;
    use crate::obs::to_robot_frame;
    use crate::rng::RngStream;
    use crate::scenario::{sample_circle_crossing, ScenarioConfig};

    fn scene(h: usize, o: usize, seed: u64) -> JointObservation {
        let cfg = ScenarioConfig::crossing(h, o);
        let mut states = sample_circle_crossing(&cfg, &mut RngStream::from_seed(seed)).unwrap();
        let mut rng = RngStream::from_seed(seed + 1000);
        for s in &mut states {
            s.velocity = crate::Vec2::from_polar(rng.uniform(0.0, 1.0), rng.uniform(0.0, std::f64::consts::TAU));
        }
        to_robot_frame(&states)
    }

    #[test]
    fn zero_params_value_is_zero() {
        let p = ModelParams::zeros(Ablation::HeR, &ModelDims::default());
        assert_eq!(value(&scene(5, 2, 1), &p), 0.0);
        let e = embed(&scene(5, 2, 1), &p);
        assert_eq!(e, Tensor::zeros(8, 64));
    }

    #[test]
    fn embedding_shape() {
        let p = ModelParams::init(Ablation::HeR, &ModelDims::default(), &mut RngStream::from_seed(3));
        assert_eq!(embed(&scene(5, 2, 2), &p).shape(), (8, 64));
    }

    #[test]
    fn category_bit_changes_embedding() {
        let p = ModelParams::init(Ablation::HoR, &ModelDims::default(), &mut RngStream::from_seed(3));
        let mut o = scene(1, 1, 4);
        o.other_robots[0] = NeighborObsExt::with_category(o.humans[0], 0.0);
        let e = embed(&o, &p);
        assert_ne!(e.row(1), e.row(2));
        // Without the bit the shared embedding cannot tell them apart.
        let p = ModelParams::init(Ablation::HoRNoCate, &ModelDims::default(), &mut RngStream::from_seed(3));
        let e = embed(&o, &p);
        assert_eq!(e.row(1), e.row(2));
    }

    trait NeighborObsExt {
        fn with_category(self, c: f64) -> Self;
    }

    impl NeighborObsExt for crate::obs::NeighborObs {
        fn with_category(mut self, c: f64) -> Self {
            self.category = c;
            self
        }
    }

    #[test]
    fn batch_matches_single_evaluation() {
        let p = ModelParams::init(Ablation::HeR, &ModelDims::default(), &mut RngStream::from_seed(5));
        let scenes: Vec<JointObservation> =
            [(5, 2), (0, 0), (2, 1), (0, 3), (4, 0)].iter().enumerate().map(|(i, &(h, o))| scene(h, o, i as u64)).collect();
        let batched = value_batch(&scenes, &p);
        for (s, b) in scenes.iter().zip(&batched) {
            assert!((value(s, &p) - b).abs() < 1e-12);
        }
    }
}
