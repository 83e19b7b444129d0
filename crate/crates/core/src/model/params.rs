//! Trainable weights and their registration on a tape.

use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor, Var};
use crate::obs::{CenterObs, NeighborObs};
use crate::rng::RngStream;
use crate::scenario::Ablation;

use super::graph::RelationType;

/// Layer widths. The defaults are the production architecture; smaller
/// widths are only useful in tests.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelDims {
    pub hidden: usize,
    pub value_hidden: Vec<usize>,
}

impl Default for ModelDims {
    fn default() -> Self {
        Self {
            hidden: 64,
            value_hidden: vec![128, 64, 32],
        }
    }
}

pub const GNN_LAYERS: usize = 2;

/// Input width of the neighbour embeddings under an ablation.
pub fn neighbor_input_dim(ablation: Ablation) -> usize {
    if ablation.uses_category() {
        NeighborObs::DIM
    } else {
        NeighborObs::DIM - 1
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    /// `in x out`.
    pub weight: Tensor,
    /// `1 x out`.
    pub bias: Tensor,
}

impl Linear {
    fn glorot(fan_in: usize, fan_out: usize, rng: &mut RngStream) -> Self {
        let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
        Self {
            weight: glorot_matrix(fan_in, fan_out, bound, rng),
            bias: Tensor::zeros(1, fan_out),
        }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Tensor::zeros(fan_in, fan_out),
            bias: Tensor::zeros(1, fan_out),
        }
    }
}

fn glorot_matrix(rows: usize, cols: usize, bound: f64, rng: &mut RngStream) -> Tensor {
    Tensor::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| rng.uniform(-bound, bound)).collect(),
    )
}

/// Stack of affine layers.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    pub layers: Vec<Linear>,
}

impl Mlp {
    fn build(widths: &[usize], mut make: impl FnMut(usize, usize) -> Linear) -> Self {
        Self {
            layers: widths.windows(2).map(|w| make(w[0], w[1])).collect(),
        }
    }
}

/// Self and neighbour matrices of one relation in one GNN layer.
#[derive(Debug, Clone, PartialEq)]
pub struct RelationWeights {
    pub self_weight: Tensor,
    pub neighbor_weight: Tensor,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GnnLayerParams {
    /// Indexed by [`RelationType::index`]. Homogeneous models use slot 0
    /// for every edge.
    pub relations: Vec<RelationWeights>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub ablation: Ablation,
    pub dims: ModelDims,
    pub embed_cr: Mlp,
    pub embed_h: Mlp,
    pub embed_or: Mlp,
    pub gnn: Vec<GnnLayerParams>,
    pub value_head: Mlp,
}

impl ModelParams {
    fn build(
        ablation: Ablation,
        dims: &ModelDims,
        mut linear: impl FnMut(usize, usize) -> Linear,
        mut square: impl FnMut(usize) -> Tensor,
    ) -> Self {
        let h = dims.hidden;
        let nd = neighbor_input_dim(ablation);
        let embed_cr = Mlp::build(&[CenterObs::DIM, h, h], &mut linear);
        let embed_h = Mlp::build(&[nd, h, h], &mut linear);
        let embed_or = Mlp::build(&[nd, h, h], &mut linear);
        let gnn = (0..GNN_LAYERS)
            .map(|_| GnnLayerParams {
                relations: RelationType::ALL
                    .iter()
                    .map(|_| RelationWeights {
                        self_weight: square(h),
                        neighbor_weight: square(h),
                    })
                    .collect(),
            })
            .collect();
        let mut widths = vec![h];
        widths.extend(&dims.value_hidden);
        widths.push(1);
        let value_head = Mlp::build(&widths, &mut linear);
        Self {
            ablation,
            dims: dims.clone(),
            embed_cr,
            embed_h,
            embed_or,
            gnn,
            value_head,
        }
    }

    /// Glorot-uniform weights, zero biases.
    pub fn init(ablation: Ablation, dims: &ModelDims, rng: &mut RngStream) -> Self {
        let rng = std::cell::RefCell::new(rng);
        Self::build(
            ablation,
            dims,
            |i, o| Linear::glorot(i, o, &mut rng.borrow_mut()),
            |n| glorot_matrix(n, n, (6.0 / (2 * n) as f64).sqrt(), &mut rng.borrow_mut()),
        )
    }

    pub fn zeros(ablation: Ablation, dims: &ModelDims) -> Self {
        Self::build(ablation, dims, Linear::zeros, |n| Tensor::zeros(n, n))
    }

    /// Every tensor with a stable name, in a fixed order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor)> {
        let mut out = Vec::new();
        let mlps = [
            ("embed_cr", &self.embed_cr),
            ("embed_h", &self.embed_h),
            ("embed_or", &self.embed_or),
        ];
        for (name, mlp) in mlps {
            push_mlp(&mut out, name, mlp);
        }
        for (l, layer) in self.gnn.iter().enumerate() {
            for (rel, w) in RelationType::ALL.iter().zip(&layer.relations) {
                out.push((format!("gnn.{l}.{}.self", rel.name()), &w.self_weight));
                out.push((format!("gnn.{l}.{}.neighbor", rel.name()), &w.neighbor_weight));
            }
        }
        push_mlp(&mut out, "value", &self.value_head);
        out
    }

    /// Mutable views in the same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor> {
        let mut out: Vec<&mut Tensor> = Vec::new();
        for mlp in [&mut self.embed_cr, &mut self.embed_h, &mut self.embed_or] {
            for l in &mut mlp.layers {
                out.push(&mut l.weight);
                out.push(&mut l.bias);
            }
        }
        for layer in &mut self.gnn {
            for w in &mut layer.relations {
                out.push(&mut w.self_weight);
                out.push(&mut w.neighbor_weight);
            }
        }
        for l in &mut self.value_head.layers {
            out.push(&mut l.weight);
            out.push(&mut l.bias);
        }
        out
    }

    pub fn shapes(&self) -> Vec<(usize, usize)> {
        self.named_tensors().iter().map(|(_, t)| t.shape()).collect()
    }

    pub fn n_scalars(&self) -> usize {
        self.named_tensors().iter().map(|(_, t)| t.len()).sum()
    }

    pub fn all_finite(&self) -> bool {
        self.named_tensors().iter().all(|(_, t)| t.all_finite())
    }

    /// Copies relation 0's matrices into every relation of every layer.
    pub fn tie_relations(&mut self) {
        for layer in &mut self.gnn {
            let first = layer.relations[0].clone();
            for w in &mut layer.relations {
                *w = first.clone();
            }
        }
    }

    /// Registers every tensor as a differentiable leaf.
    pub fn register<'p>(&'p self, tape: &mut Tape<'p>) -> ParamVars {
        let mlp = |tape: &mut Tape<'p>, m: &'p Mlp| MlpVars {
            layers: m
                .layers
                .iter()
                .map(|l| (tape.param(&l.weight), tape.param(&l.bias)))
                .collect(),
        };
        let embed_cr = mlp(tape, &self.embed_cr);
        let embed_h = mlp(tape, &self.embed_h);
        let embed_or = mlp(tape, &self.embed_or);
        let gnn = self
            .gnn
            .iter()
            .map(|layer| GnnLayerVars {
                relations: layer
                    .relations
                    .iter()
                    .map(|w| (tape.param(&w.self_weight), tape.param(&w.neighbor_weight)))
                    .collect(),
            })
            .collect();
        let value_head = mlp(tape, &self.value_head);
        ParamVars {
            embed_cr,
            embed_h,
            embed_or,
            gnn,
            value_head,
        }
    }
}

fn push_mlp<'a>(out: &mut Vec<(String, &'a Tensor)>, name: &str, mlp: &'a Mlp) {
    for (i, l) in mlp.layers.iter().enumerate() {
        out.push((format!("{name}.{i}.weight"), &l.weight));
        out.push((format!("{name}.{i}.bias"), &l.bias));
    }
}

#[derive(Debug, Clone)]
pub struct MlpVars {
    pub layers: Vec<(Var, Var)>,
}

impl MlpVars {
    /// Affine layers with ReLU between them; `relu_last` also activates
    /// the output.
    pub fn forward(&self, tape: &mut Tape<'_>, x: Var, relu_last: bool) -> Var {
        let mut h = x;
        for (i, &(w, b)) in self.layers.iter().enumerate() {
            h = tape.affine(h, w, b);
            if relu_last || i + 1 < self.layers.len() {
                h = tape.relu(h);
            }
        }
        h
    }

    fn vars(&self) -> impl Iterator<Item = Var> + '_ {
        self.layers.iter().flat_map(|&(w, b)| [w, b])
    }
}

#[derive(Debug, Clone)]
pub struct GnnLayerVars {
    /// `(self, neighbor)` per relation slot.
    pub relations: Vec<(Var, Var)>,
}

/// Tape handles mirroring [`ModelParams`].
#[derive(Debug, Clone)]
pub struct ParamVars {
    pub embed_cr: MlpVars,
    pub embed_h: MlpVars,
    pub embed_or: MlpVars,
    pub gnn: Vec<GnnLayerVars>,
    pub value_head: MlpVars,
}

impl ParamVars {
    /// Handles in [`ModelParams::named_tensors`] order.
    pub fn all(&self) -> Vec<Var> {
        let mut out: Vec<Var> = self.embed_cr.vars().collect();
        out.extend(self.embed_h.vars());
        out.extend(self.embed_or.vars());
        for layer in &self.gnn {
            out.extend(layer.relations.iter().flat_map(|&(a, b)| [a, b]));
        }
        out.extend(self.value_head.vars());
        out
    }
}
