use std::borrow::Cow;
use std::rc::Rc;

use super::tensor::{gemm, MatRef, Tensor};

/// Handle to a node recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

/// Constant sparse matrix applied from the left: output row `r` is
/// `sum of w * x[c]` over the `(c, w)` entries of row `r`.
///
/// Gathers, scatter-adds, per-graph sums and neighbour aggregation are all
/// instances of this.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseRows {
    input_rows: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl SparseRows {
    pub fn new(input_rows: usize, rows: Vec<Vec<(usize, f64)>>) -> Self {
        for row in &rows {
            for &(c, _) in row {
                assert!(c < input_rows, "sparse entry {c} out of range {input_rows}");
            }
        }
        Self { input_rows, rows }
    }

    /// Selects rows of the input in the given order.
    pub fn gather(input_rows: usize, indices: &[usize]) -> Self {
        Self::new(input_rows, indices.iter().map(|&i| vec![(i, 1.0)]).collect())
    }

    pub fn input_rows(&self) -> usize {
        self.input_rows
    }

    pub fn output_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn rows(&self) -> &[Vec<(usize, f64)>] {
        &self.rows
    }

    pub fn apply(&self, x: &Tensor) -> Tensor {
        assert_eq!(
            x.rows(),
            self.input_rows,
            "sparse matmul expects {} input rows, got {}",
            self.input_rows,
            x.rows()
        );
        let cols = x.cols();
        let mut data = Vec::with_capacity(self.rows.len() * cols);
        for entries in &self.rows {
            let start = data.len();
            match entries.split_first() {
                None => data.resize(start + cols, 0.0),
                Some((&(c, w), rest)) => {
                    if w == 1.0 {
                        data.extend_from_slice(x.row(c));
                    } else {
                        data.extend(x.row(c).iter().map(|v| w * v));
                    }
                    let dst = &mut data[start..];
                    for &(c, w) in rest {
                        for (d, s) in dst.iter_mut().zip(x.row(c)) {
                            *d += w * s;
                        }
                    }
                }
            }
        }
        Tensor::from_vec(self.rows.len(), cols, data)
    }

    fn apply_transposed_into(&self, dy: &Tensor, dx: &mut Tensor) {
        for (r, entries) in self.rows.iter().enumerate() {
            let src = dy.row(r);
            for &(c, w) in entries {
                for (d, s) in dx.row_mut(c).iter_mut().zip(src) {
                    *d += w * s;
                }
            }
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(usize, usize),
    Affine { x: usize, w: usize, b: usize },
    Relu(usize),
    Add(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    Scale(usize, f64),
    SumRows(usize),
    SumAll(usize),
    Concat(Vec<usize>),
    Sparse(Rc<SparseRows>, usize),
}

struct Node<'p> {
    value: Cow<'p, Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Append-only record of one forward pass. Parameters can be borrowed for
/// the lifetime `'p` to avoid copying them onto the tape.
#[derive(Default)]
pub struct Tape<'p> {
    nodes: Vec<Node<'p>>,
}

/// Gradients of a scalar loss, indexed by node.
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    /// Gradient of `v`, or zeros of `shape` when the loss does not depend
    /// on it.
    pub fn get_or_zeros(&self, v: Var, shape: (usize, usize)) -> Tensor {
        self.get(v).cloned().unwrap_or_else(|| Tensor::zeros(shape.0, shape.1))
    }
}

impl<'p> Tape<'p> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Cow<'p, Tensor>, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn needs(&self, ids: &[usize]) -> bool {
        ids.iter().any(|&i| self.nodes[i].requires_grad)
    }

    /// Differentiable leaf borrowing its value.
    pub fn param(&mut self, value: &'p Tensor) -> Var {
        self.push(Cow::Borrowed(value), Op::Leaf, true)
    }

    pub fn param_owned(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, true)
    }

    /// Leaf excluded from differentiation.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(Cow::Owned(value), Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.value(a).matmul(self.value(b));
        let rg = self.needs(&[a.0, b.0]);
        self.push(Cow::Owned(out), Op::MatMul(a.0, b.0), rg)
    }

    /// `x * w + b` with `b` (1 x out) added to every row.
    pub fn affine(&mut self, x: Var, w: Var, b: Var) -> Var {
        let (xv, wv, bv) = (self.value(x), self.value(w), self.value(b));
        assert_eq!(
            bv.shape(),
            (1, wv.cols()),
            "affine bias must be 1x{}, got {}x{}",
            wv.cols(),
            bv.rows(),
            bv.cols()
        );
        let mut out = xv.matmul(wv);
        for r in 0..out.rows() {
            for (o, bias) in out.row_mut(r).iter_mut().zip(bv.data()) {
                *o += bias;
            }
        }
        let rg = self.needs(&[x.0, w.0, b.0]);
        self.push(Cow::Owned(out), Op::Affine { x: x.0, w: w.0, b: b.0 }, rg)
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| if v > 0.0 { v } else { 0.0 });
        let rg = self.needs(&[x.0]);
        self.push(Cow::Owned(out), Op::Relu(x.0), rg)
    }

    fn elementwise(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (av, bv) = (self.value(a), self.value(b));
        assert_eq!(
            av.shape(),
            bv.shape(),
            "elementwise shape mismatch: {:?} vs {:?}",
            av.shape(),
            bv.shape()
        );
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_vec(av.rows(), av.cols(), data);
        let rg = self.needs(&[a.0, b.0]);
        self.push(Cow::Owned(out), op, rg)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.elementwise(a, b, |x, y| x + y, Op::Add(a.0, b.0))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.elementwise(a, b, |x, y| x - y, Op::Sub(a.0, b.0))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.elementwise(a, b, |x, y| x * y, Op::Mul(a.0, b.0))
    }

    pub fn scale(&mut self, x: Var, factor: f64) -> Var {
        let out = self.value(x).map(|v| v * factor);
        let rg = self.needs(&[x.0]);
        self.push(Cow::Owned(out), Op::Scale(x.0, factor), rg)
    }

    /// Column-wise sum over rows: `n x c -> 1 x c`.
    pub fn sum_rows(&mut self, x: Var) -> Var {
        let xv = self.value(x);
        let mut out = Tensor::zeros(1, xv.cols());
        for r in 0..xv.rows() {
            for (o, v) in out.data_mut().iter_mut().zip(xv.row(r)) {
                *o += v;
            }
        }
        let rg = self.needs(&[x.0]);
        self.push(Cow::Owned(out), Op::SumRows(x.0), rg)
    }

    /// Sum of every entry, as a 1x1 tensor.
    pub fn sum_all(&mut self, x: Var) -> Var {
        let total = self.value(x).data().iter().sum();
        let rg = self.needs(&[x.0]);
        self.push(Cow::Owned(Tensor::scalar(total)), Op::SumAll(x.0), rg)
    }

    /// Stacks inputs vertically; all must share a column count.
    pub fn concat(&mut self, xs: &[Var]) -> Var {
        assert!(!xs.is_empty(), "concat of nothing");
        let cols = self.value(xs[0]).cols();
        let mut data = Vec::new();
        let mut rows = 0;
        for &x in xs {
            let v = self.value(x);
            assert_eq!(v.cols(), cols, "concat column mismatch: {} vs {cols}", v.cols());
            data.extend_from_slice(v.data());
            rows += v.rows();
        }
        let ids: Vec<usize> = xs.iter().map(|v| v.0).collect();
        let rg = self.needs(&ids);
        self.push(Cow::Owned(Tensor::from_vec(rows, cols, data)), Op::Concat(ids), rg)
    }

    /// Left-multiplies by a constant sparse matrix.
    pub fn sparse_matmul(&mut self, s: Rc<SparseRows>, x: Var) -> Var {
        let out = s.apply(self.value(x));
        let rg = self.needs(&[x.0]);
        self.push(Cow::Owned(out), Op::Sparse(s, x.0), rg)
    }

    /// Mean squared error between two equally shaped tensors.
    pub fn mse(&mut self, prediction: Var, target: Var) -> Var {
        let n = self.value(prediction).len();
        assert!(n > 0, "mse over empty tensor");
        let diff = self.sub(prediction, target);
        let sq = self.mul(diff, diff);
        let total = self.sum_all(sq);
        self.scale(total, 1.0 / n as f64)
    }

    /// Reverse accumulation from a scalar node.
    pub fn backward(&self, loss: Var) -> Gradients {
        assert_eq!(
            self.value(loss).shape(),
            (1, 1),
            "backward requires a scalar (1x1) loss, got {:?}",
            self.value(loss).shape()
        );
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Tensor::scalar(1.0));

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(dy) = grads[id].take() else { continue };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let (av, bv) = (&self.nodes[*a].value, &self.nodes[*b].value);
                    if self.nodes[*a].requires_grad {
                        let g = slot(&mut grads, *a, av.shape());
                        gemm(MatRef::new(&dy), MatRef::new(bv).t(), g.data_mut(), true);
                    }
                    if self.nodes[*b].requires_grad {
                        let g = slot(&mut grads, *b, bv.shape());
                        gemm(MatRef::new(av).t(), MatRef::new(&dy), g.data_mut(), true);
                    }
                }
                Op::Affine { x, w, b } => {
                    let (xv, wv) = (&self.nodes[*x].value, &self.nodes[*w].value);
                    if self.nodes[*x].requires_grad {
                        let g = slot(&mut grads, *x, xv.shape());
                        gemm(MatRef::new(&dy), MatRef::new(wv).t(), g.data_mut(), true);
                    }
                    if self.nodes[*w].requires_grad {
                        let g = slot(&mut grads, *w, wv.shape());
                        gemm(MatRef::new(xv).t(), MatRef::new(&dy), g.data_mut(), true);
                    }
                    if self.nodes[*b].requires_grad {
                        let g = slot(&mut grads, *b, (1, dy.cols()));
                        for r in 0..dy.rows() {
                            for (gb, d) in g.data_mut().iter_mut().zip(dy.row(r)) {
                                *gb += d;
                            }
                        }
                    }
                }
                Op::Relu(x) => {
                    if self.nodes[*x].requires_grad {
                        let g = slot(&mut grads, *x, dy.shape());
                        for ((gx, d), y) in g.data_mut().iter_mut().zip(dy.data()).zip(node.value.data()) {
                            if *y > 0.0 {
                                *gx += d;
                            }
                        }
                    }
                }
                Op::Add(a, b) | Op::Sub(a, b) => {
                    let sign = if matches!(node.op, Op::Sub(..)) { -1.0 } else { 1.0 };
                    for (p, s) in [(*a, 1.0), (*b, sign)] {
                        if self.nodes[p].requires_grad {
                            let g = slot(&mut grads, p, dy.shape());
                            for (gx, d) in g.data_mut().iter_mut().zip(dy.data()) {
                                *gx += s * d;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    for (p, other) in [(*a, *b), (*b, *a)] {
                        if self.nodes[p].requires_grad {
                            let ov = &self.nodes[other].value;
                            let g = slot(&mut grads, p, dy.shape());
                            for ((gx, d), o) in g.data_mut().iter_mut().zip(dy.data()).zip(ov.data()) {
                                *gx += d * o;
                            }
                        }
                    }
                }
                Op::Scale(x, factor) => {
                    if self.nodes[*x].requires_grad {
                        let g = slot(&mut grads, *x, dy.shape());
                        for (gx, d) in g.data_mut().iter_mut().zip(dy.data()) {
                            *gx += factor * d;
                        }
                    }
                }
                Op::SumRows(x) => {
                    if self.nodes[*x].requires_grad {
                        let shape = self.nodes[*x].value.shape();
                        let g = slot(&mut grads, *x, shape);
                        for r in 0..shape.0 {
                            for (gx, d) in g.row_mut(r).iter_mut().zip(dy.data()) {
                                *gx += d;
                            }
                        }
                    }
                }
                Op::SumAll(x) => {
                    if self.nodes[*x].requires_grad {
                        let shape = self.nodes[*x].value.shape();
                        let d = dy.item();
                        let g = slot(&mut grads, *x, shape);
                        for gx in g.data_mut() {
                            *gx += d;
                        }
                    }
                }
                Op::Concat(parts) => {
                    let cols = dy.cols();
                    let mut offset = 0;
                    for &p in parts {
                        let shape = self.nodes[p].value.shape();
                        if self.nodes[p].requires_grad {
                            let g = slot(&mut grads, p, shape);
                            let src = &dy.data()[offset * cols..(offset + shape.0) * cols];
                            for (gx, d) in g.data_mut().iter_mut().zip(src) {
                                *gx += d;
                            }
                        }
                        offset += shape.0;
                    }
                }
                Op::Sparse(s, x) => {
                    if self.nodes[*x].requires_grad {
                        let shape = self.nodes[*x].value.shape();
                        let g = slot(&mut grads, *x, shape);
                        s.apply_transposed_into(&dy, g);
                    }
                }
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(dy);
            }
        }
        Gradients { grads }
    }
}

fn slot(grads: &mut [Option<Tensor>], id: usize, shape: (usize, usize)) -> &mut Tensor {
    grads[id].get_or_insert_with(|| Tensor::zeros(shape.0, shape.1))
}
