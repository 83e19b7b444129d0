//! Robot-crowd relation graph.
//!
//! A scene with `n` humans and `m` other robots has nodes
//! `0` (center robot), `1..=n` (humans) and `n+1..=n+m` (other robots).
//! Every pair of agents is linked by exactly one edge whose type is fixed
//! by the two endpoint categories; edges are stored in both directions.

use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::autodiff::SparseRows;
use crate::obs::JointObservation;
use crate::scenario::{Ablation, AgentKind};

/// The five pairwise interaction types.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RelationType {
    /// human - human
    HHI,
    /// human - center robot
    HCRI,
    /// human - other robot
    HORI,
    /// center robot - other robot
    CRORI,
    /// other robot - other robot
    ORORI,
}

impl RelationType {
    pub const ALL: [RelationType; 5] = [
        RelationType::HHI,
        RelationType::HCRI,
        RelationType::HORI,
        RelationType::CRORI,
        RelationType::ORORI,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::HHI => "HHI",
            RelationType::HCRI => "HCRI",
            RelationType::HORI => "HORI",
            RelationType::CRORI => "CRORI",
            RelationType::ORORI => "ORORI",
        }
    }

    /// Relation linking two agent categories.
    pub fn between(a: AgentKind, b: AgentKind) -> RelationType {
        use AgentKind::*;
        match (a, b) {
            (Human, Human) => RelationType::HHI,
            (Human, CenterRobot) | (CenterRobot, Human) => RelationType::HCRI,
            (Human, OtherRobot) | (OtherRobot, Human) => RelationType::HORI,
            (CenterRobot, OtherRobot) | (OtherRobot, CenterRobot) => RelationType::CRORI,
            (OtherRobot, OtherRobot) => RelationType::ORORI,
            (CenterRobot, CenterRobot) => panic!("two center robots in one scene"),
        }
    }
}

/// Edge label: one of the five relations, or the single label of the
/// homogeneous ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum EdgeKind {
    Relation(RelationType),
    Homogeneous,
}

impl EdgeKind {
    /// Weight slot in each GNN layer.
    pub fn slot(self) -> usize {
        match self {
            EdgeKind::Relation(r) => r.index(),
            EdgeKind::Homogeneous => 0,
        }
    }
}

/// Edge kinds a model under `ablation` distinguishes.
pub fn edge_kinds(ablation: Ablation) -> Vec<EdgeKind> {
    if ablation.is_heterogeneous() {
        RelationType::ALL.iter().map(|&r| EdgeKind::Relation(r)).collect()
    } else {
        vec![EdgeKind::Homogeneous]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeSet {
    pub kind: EdgeKind,
    /// Directed `(src, dst)` pairs; every link appears both ways.
    pub edges: Vec<(usize, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HetGraph {
    pub node_kinds: Vec<AgentKind>,
    /// One entry per edge kind of the ablation, possibly empty.
    pub edge_sets: Vec<EdgeSet>,
}

impl HetGraph {
    pub fn n_nodes(&self) -> usize {
        self.node_kinds.len()
    }

    pub fn edges(&self, kind: EdgeKind) -> &[(usize, usize)] {
        self.edge_sets
            .iter()
            .find(|s| s.kind == kind)
            .map_or(&[], |s| &s.edges)
    }

    /// Number of undirected links of a kind.
    pub fn undirected_count(&self, kind: EdgeKind) -> usize {
        self.edges(kind).len() / 2
    }

    /// Every directed edge regardless of kind.
    pub fn all_edges(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.edge_sets.iter().flat_map(|s| s.edges.iter().copied())
    }

    /// Graph whose components are the given graphs, nodes renumbered by
    /// concatenation.
    pub fn disjoint_union(graphs: &[HetGraph]) -> HetGraph {
        let kinds: Vec<EdgeKind> = graphs
            .first()
            .map(|g| g.edge_sets.iter().map(|s| s.kind).collect())
            .unwrap_or_default();
        let mut node_kinds = Vec::new();
        let mut edge_sets: Vec<EdgeSet> = kinds
            .iter()
            .map(|&kind| EdgeSet { kind, edges: Vec::new() })
            .collect();
        for g in graphs {
            let offset = node_kinds.len();
            node_kinds.extend_from_slice(&g.node_kinds);
            for (dst, src) in edge_sets.iter_mut().zip(&g.edge_sets) {
                assert_eq!(dst.kind, src.kind, "graphs built under different ablations");
                dst.edges
                    .extend(src.edges.iter().map(|&(a, b)| (a + offset, b + offset)));
            }
        }
        HetGraph { node_kinds, edge_sets }
    }

    /// Same graph with node `v` renamed to `new_index[v]`, which must be a
    /// permutation.
    pub fn relabel(&self, new_index: &[usize]) -> HetGraph {
        let n = self.n_nodes();
        assert_eq!(new_index.len(), n, "relabel needs one index per node");
        let mut node_kinds = vec![None; n];
        for (v, &w) in new_index.iter().enumerate() {
            assert!(w < n && node_kinds[w].is_none(), "relabel is not a permutation");
            node_kinds[w] = Some(self.node_kinds[v]);
        }
        HetGraph {
            node_kinds: node_kinds.into_iter().map(Option::unwrap).collect(),
            edge_sets: self
                .edge_sets
                .iter()
                .map(|s| EdgeSet {
                    kind: s.kind,
                    edges: s.edges.iter().map(|&(a, b)| (new_index[a], new_index[b])).collect(),
                })
                .collect(),
        }
    }
}

/// Builds the fully connected typed graph of one observation.
pub fn build_het_graph(obs: &JointObservation, ablation: Ablation) -> HetGraph {
    let mut node_kinds = vec![AgentKind::CenterRobot];
    node_kinds.extend(std::iter::repeat_n(AgentKind::Human, obs.humans.len()));
    node_kinds.extend(std::iter::repeat_n(AgentKind::OtherRobot, obs.other_robots.len()));
    build_from_kinds(node_kinds, ablation)
}

fn build_from_kinds(node_kinds: Vec<AgentKind>, ablation: Ablation) -> HetGraph {
    let kinds = edge_kinds(ablation);
    let mut edge_sets: Vec<EdgeSet> = kinds
        .iter()
        .map(|&kind| EdgeSet { kind, edges: Vec::new() })
        .collect();
    let n = node_kinds.len();
    for i in 0..n {
        for j in i + 1..n {
            let kind = if ablation.is_heterogeneous() {
                EdgeKind::Relation(RelationType::between(node_kinds[i], node_kinds[j]))
            } else {
                EdgeKind::Homogeneous
            };
            let set = edge_sets.iter_mut().find(|s| s.kind == kind).expect("edge kind");
            set.edges.push((i, j));
            set.edges.push((j, i));
        }
    }
    HetGraph { node_kinds, edge_sets }
}

/// Sparse operators for one graph, shared by both GNN layers.
///
/// Output rows of a layer are stacked as `[self groups | per-kind
/// neighbour sums]` and routed back to nodes by `scatter`.
#[derive(Debug, Clone)]
pub struct GraphPlan {
    pub n_nodes: usize,
    pub self_groups: Vec<SelfGroup>,
    pub kinds: Vec<KindPlan>,
    pub scatter: Rc<SparseRows>,
}

/// Nodes sharing one mixture of self matrices. A node's self matrix is the
/// mean of the self matrices of the kinds touching it; isolated nodes use
/// the mean over all kinds of the model.
#[derive(Debug, Clone)]
pub struct SelfGroup {
    /// `(slot, weight)` terms of the mixed self matrix.
    pub mix: Vec<(usize, f64)>,
    /// Gathers the group's nodes.
    pub rows: Rc<SparseRows>,
}

#[derive(Debug, Clone)]
pub struct KindPlan {
    pub slot: usize,
    /// Neighbour sum of each node touched by this kind.
    pub neighbor_rows: Rc<SparseRows>,
}

impl GraphPlan {
    pub fn new(graph: &HetGraph) -> Self {
        let n = graph.n_nodes();
        let n_kinds = graph.edge_sets.len();
        let mut neighbors: Vec<Vec<Vec<usize>>> = vec![vec![Vec::new(); n]; n_kinds];
        for (k, set) in graph.edge_sets.iter().enumerate() {
            for &(src, dst) in &set.edges {
                neighbors[k][dst].push(src);
            }
        }

        // Group nodes by the set of kinds touching them, in order of first
        // appearance.
        let mut signatures: Vec<Vec<usize>> = Vec::new();
        let mut members: Vec<Vec<usize>> = Vec::new();
        let mut slot_of = vec![(0, 0); n];
        for v in 0..n {
            let sig: Vec<usize> = (0..n_kinds).filter(|&k| !neighbors[k][v].is_empty()).collect();
            let g = match signatures.iter().position(|s| *s == sig) {
                Some(g) => g,
                None => {
                    signatures.push(sig);
                    members.push(Vec::new());
                    signatures.len() - 1
                }
            };
            slot_of[v] = (g, members[g].len());
            members[g].push(v);
        }

        let mut scatter: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
        let mut stacked = 0;
        let mut self_groups = Vec::with_capacity(signatures.len());
        let mut group_start = Vec::with_capacity(signatures.len());
        for (sig, nodes) in signatures.iter().zip(&members) {
            let touching: Vec<usize> = if sig.is_empty() { (0..n_kinds).collect() } else { sig.clone() };
            let weight = 1.0 / touching.len() as f64;
            group_start.push(stacked);
            self_groups.push(SelfGroup {
                mix: touching.iter().map(|&k| (graph.edge_sets[k].kind.slot(), weight)).collect(),
                rows: Rc::new(SparseRows::gather(n, nodes)),
            });
            stacked += nodes.len();
        }
        for (v, &(g, pos)) in slot_of.iter().enumerate() {
            scatter[v].push((group_start[g] + pos, 1.0));
        }

        let mut kinds = Vec::with_capacity(n_kinds);
        for (k, set) in graph.edge_sets.iter().enumerate() {
            let mut rows = Vec::new();
            for v in 0..n {
                if !neighbors[k][v].is_empty() {
                    scatter[v].push((stacked + rows.len(), 1.0));
                    rows.push(neighbors[k][v].iter().map(|&w| (w, 1.0)).collect());
                }
            }
            stacked += rows.len();
            kinds.push(KindPlan {
                slot: set.kind.slot(),
                neighbor_rows: Rc::new(SparseRows::new(n, rows)),
            });
        }
        Self {
            n_nodes: n,
            self_groups,
            kinds,
            scatter: Rc::new(SparseRows::new(stacked, scatter)),
        }
    }
}
