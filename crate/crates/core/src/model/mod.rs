//! Value model over the robot-crowd relation graph.

mod checkpoint;
mod gnn;
mod graph;
mod network;
mod params;

pub use checkpoint::{
    decode as decode_checkpoint, encode as encode_checkpoint, load_checkpoint, save_checkpoint, CheckpointError,
    FORMAT_VERSION,
};
pub use gnn::{hetgnn_layer, hetgnn_layer_eval};
pub use graph::{build_het_graph, edge_kinds, EdgeKind, EdgeSet, GraphPlan, HetGraph, KindPlan, RelationType, SelfGroup};
pub use network::{batch_graph, batch_plan, embed, embed_on_tape, forward_on_tape, value, value_and_grad, value_batch};
pub use params::{
    neighbor_input_dim, GnnLayerParams, GnnLayerVars, Linear, Mlp, MlpVars, ModelDims, ModelParams,
    ParamVars, RelationWeights, GNN_LAYERS,
};

use crate::rng::RngStream;
use crate::scenario::Ablation;

/// Default-architecture parameters, Glorot initialised.
pub fn init_params(ablation: Ablation, rng: &mut RngStream) -> ModelParams {
    ModelParams::init(ablation, &ModelDims::default(), rng)
}
