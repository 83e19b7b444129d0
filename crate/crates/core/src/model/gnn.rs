//! Heterogeneous message passing layer.
//!
//! For each node `v` and edge kind `i` touching it, the layer forms
//! `h(v) W1_i + sum_{w in N_i(v)} h(w) W2_i`, sums those terms over kinds
//! and applies ReLU. The self terms are averaged rather than summed over
//! kinds, which makes a layer with identical weights for every relation
//! exactly the homogeneous layer on the union graph.

use crate::autodiff::{Tape, Tensor, Var};

use super::graph::{GraphPlan, HetGraph};
use super::params::{GnnLayerParams, GnnLayerVars};

pub fn hetgnn_layer(tape: &mut Tape<'_>, plan: &GraphPlan, feats: Var, layer: &GnnLayerVars) -> Var {
    assert_eq!(
        tape.value(feats).rows(),
        plan.n_nodes,
        "feature rows do not match graph nodes"
    );
    let mut parts = Vec::with_capacity(plan.self_groups.len() + plan.kinds.len());
    for group in &plan.self_groups {
        let mut mixed = None;
        for &(slot, weight) in &group.mix {
            let w = layer.relations[slot].0;
            let term = if weight == 1.0 { w } else { tape.scale(w, weight) };
            mixed = Some(match mixed {
                None => term,
                Some(acc) => tape.add(acc, term),
            });
        }
        let own = tape.sparse_matmul(group.rows.clone(), feats);
        parts.push(tape.matmul(own, mixed.expect("self group without kinds")));
    }
    for kind in &plan.kinds {
        if kind.neighbor_rows.output_rows() == 0 {
            continue;
        }
        let incoming = tape.sparse_matmul(kind.neighbor_rows.clone(), feats);
        parts.push(tape.matmul(incoming, layer.relations[kind.slot].1));
    }
    let stacked = tape.concat(&parts);
    let summed = tape.sparse_matmul(plan.scatter.clone(), stacked);
    tape.relu(summed)
}

/// Evaluates one layer outside of any training graph.
pub fn hetgnn_layer_eval(graph: &HetGraph, feats: &Tensor, layer: &GnnLayerParams) -> Tensor {
    let plan = GraphPlan::new(graph);
    let mut tape = Tape::new();
    let h = tape.param(feats);
    let vars = GnnLayerVars {
        relations: layer
            .relations
            .iter()
            .map(|w| (tape.param(&w.self_weight), tape.param(&w.neighbor_weight)))
            .collect(),
    };
    let out = hetgnn_layer(&mut tape, &plan, h, &vars);
    tape.value(out).clone()
}
