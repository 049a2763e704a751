use std::cell::{Cell, RefCell};
use std::collections::HashMap;
use std::rc::Rc;

use super::{Result, SparseMatrix, Tensor, TensorError, LAYER_NORM_EPS, MASK_SENTINEL};
use crate::entmax;

type NodeId = usize;

/// Recorded operation together with what its backward rule needs.
enum Op {
    Leaf,
    Constant,
    MatMul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Relu(NodeId),
    Sigmoid(NodeId),
    Log(NodeId),
    Exp(NodeId),
    ConcatCols(NodeId, NodeId),
    RowGather(NodeId, Rc<Vec<usize>>),
    RowScatterAdd(NodeId, Rc<Vec<usize>>),
    SpMM(Rc<SparseMatrix>, NodeId),
    LayerNorm {
        input: NodeId,
        keep: Option<Rc<Vec<bool>>>,
        inv_std: Vec<f64>,
    },
    LogSoftmax(NodeId),
    Sum(NodeId),
    GatherEntries(NodeId, Rc<Vec<(usize, usize)>>),
    PairwiseNegDist(NodeId),
    PairDistSums(NodeId, Rc<Vec<Vec<(usize, usize)>>>),
    Entmax {
        scores: NodeId,
        alpha: Option<NodeId>,
        alpha_value: f64,
        keep: Option<Rc<Vec<bool>>>,
    },
}

impl Op {
    fn inputs(&self) -> Vec<NodeId> {
        use Op::*;
        match self {
            Leaf | Constant => vec![],
            MatMul(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | AddRow(a, b) | ConcatCols(a, b) => {
                vec![*a, *b]
            }
            Scale(a, _)
            | AddScalar(a)
            | Relu(a)
            | Sigmoid(a)
            | Log(a)
            | Exp(a)
            | LogSoftmax(a)
            | Sum(a)
            | PairwiseNegDist(a) => vec![*a],
            RowGather(a, _) | RowScatterAdd(a, _) | GatherEntries(a, _) | PairDistSums(a, _) => {
                vec![*a]
            }
            SpMM(_, a) => vec![*a],
            LayerNorm { input, .. } => vec![*input],
            Entmax { scores, alpha, .. } => {
                let mut v = vec![*scores];
                v.extend(alpha.iter().copied());
                v
            }
        }
    }
}

struct Node {
    value: Rc<Tensor>,
    op: Op,
    requires_grad: bool,
}

/// Define-by-run computation tape.
///
/// Every differentiable op on a [`Var`] appends a node. [`Tape::backward`]
/// walks the nodes in reverse, then clears the tape so the next forward pass
/// starts fresh.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
    generation: Cell<u64>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
    generation: u64,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "Var(#{}, {:?})", self.id, self.value())
    }
}

/// Gradients of a scalar loss with respect to every leaf of the tape.
#[derive(Debug, Default)]
pub struct Gradients {
    generation: u64,
    grads: HashMap<NodeId, Tensor>,
}

impl Gradients {
    pub fn get(&self, var: &Var<'_>) -> Option<&Tensor> {
        if var.generation != self.generation {
            return None;
        }
        self.grads.get(&var.id)
    }
}

fn check_finite(op: &'static str, t: &Tensor) -> Result<()> {
    if t.is_finite() {
        Ok(())
    } else {
        Err(TensorError::NonFinite { op })
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::Shape {
            op,
            left: a.shape(),
            right: b.shape(),
        });
    }
    Ok(())
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn push(&self, value: Tensor, op: Op) -> Var<'_> {
        let requires_grad = match op {
            Op::Leaf => true,
            Op::Constant => false,
            ref other => {
                let nodes = self.nodes.borrow();
                other.inputs().iter().any(|&i| nodes[i].requires_grad)
            }
        };
        let mut nodes = self.nodes.borrow_mut();
        let id = nodes.len();
        nodes.push(Node {
            value: Rc::new(value),
            op,
            requires_grad,
        });
        Var {
            tape: self,
            id,
            generation: self.generation.get(),
        }
    }

    /// Trainable input. Receives a gradient from [`Tape::backward`].
    pub fn leaf(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf)
    }

    /// Non-trainable input.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Constant)
    }

    fn value_of(&self, id: NodeId) -> Rc<Tensor> {
        Rc::clone(&self.nodes.borrow()[id].value)
    }

    /// Drops every recorded node. Outstanding handles become invalid.
    pub fn clear(&self) {
        self.nodes.borrow_mut().clear();
        self.generation.set(self.generation.get() + 1);
    }

    /// Reverse sweep from a scalar loss; clears the tape afterwards.
    pub fn backward(&self, loss: Var<'_>) -> Result<Gradients> {
        if !std::ptr::eq(loss.tape, self) || loss.generation != self.generation.get() {
            return Err(TensorError::NotOnTape);
        }
        let nodes = std::mem::take(&mut *self.nodes.borrow_mut());
        let generation = self.generation.get();
        self.generation.set(generation + 1);
        if loss.id >= nodes.len() {
            return Err(TensorError::NotOnTape);
        }
        let shape = nodes[loss.id].value.shape();
        if shape != (1, 1) {
            return Err(TensorError::NotScalar(shape.0, shape.1));
        }

        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.id] = Some(Tensor::scalar(1.0));
        for id in (0..=loss.id).rev() {
            let Some(g) = grads[id].take() else { continue };
            let node = &nodes[id];
            if !node.requires_grad {
                continue;
            }
            if matches!(node.op, Op::Leaf) {
                grads[id] = Some(g);
                continue;
            }
            for (input, contrib) in backward_rule(&nodes, id, &g) {
                if !nodes[input].requires_grad {
                    continue;
                }
                match &mut grads[input] {
                    Some(acc) => acc.add_assign(&contrib),
                    slot @ None => *slot = Some(contrib),
                }
            }
        }

        let mut out = HashMap::new();
        for (id, node) in nodes.iter().enumerate() {
            if matches!(node.op, Op::Leaf) {
                let (r, c) = node.value.shape();
                let g = grads[id].take().unwrap_or_else(|| Tensor::zeros(r, c));
                out.insert(id, g);
            }
        }
        Ok(Gradients { generation, grads: out })
    }
}

/// Returns `(input, dL/dinput)` pairs for node `id` given its upstream grad.
fn backward_rule(nodes: &[Node], id: NodeId, g: &Tensor) -> Vec<(NodeId, Tensor)> {
    let val = |i: NodeId| -> &Tensor { &nodes[i].value };
    let out = &nodes[id].value;
    match &nodes[id].op {
        Op::Leaf | Op::Constant => vec![],
        Op::MatMul(a, b) => {
            let da = g.matmul(&val(*b).transpose()).expect("matmul shapes checked");
            let db = val(*a).transpose().matmul(g).expect("matmul shapes checked");
            vec![(*a, da), (*b, db)]
        }
        Op::Add(a, b) => vec![(*a, g.clone()), (*b, g.clone())],
        Op::Sub(a, b) => vec![(*a, g.clone()), (*b, g.map(|v| -v))],
        Op::Mul(a, b) => vec![
            (*a, g.zip_with(val(*b), |x, y| x * y)),
            (*b, g.zip_with(val(*a), |x, y| x * y)),
        ],
        Op::AddRow(a, bias) => {
            let mut db = Tensor::zeros(1, g.cols());
            for r in 0..g.rows() {
                for (d, v) in db.row_mut(0).iter_mut().zip(g.row(r)) {
                    *d += v;
                }
            }
            vec![(*a, g.clone()), (*bias, db)]
        }
        Op::Scale(a, s) => vec![(*a, g.map(|v| v * s))],
        Op::AddScalar(a) => vec![(*a, g.clone())],
        Op::Relu(a) => vec![(*a, g.zip_with(val(*a), |d, x| if x > 0.0 { d } else { 0.0 }))],
        Op::Sigmoid(a) => vec![(*a, g.zip_with(out, |d, y| d * y * (1.0 - y)))],
        Op::Log(a) => vec![(*a, g.zip_with(val(*a), |d, x| d / x))],
        Op::Exp(a) => vec![(*a, g.zip_with(out, |d, y| d * y))],
        Op::ConcatCols(a, b) => {
            let ca = val(*a).cols();
            let cb = val(*b).cols();
            let mut da = Tensor::zeros(g.rows(), ca);
            let mut db = Tensor::zeros(g.rows(), cb);
            for r in 0..g.rows() {
                da.row_mut(r).copy_from_slice(&g.row(r)[..ca]);
                db.row_mut(r).copy_from_slice(&g.row(r)[ca..]);
            }
            vec![(*a, da), (*b, db)]
        }
        Op::RowGather(a, idx) => {
            let src = val(*a);
            let mut da = Tensor::zeros(src.rows(), src.cols());
            for (k, &i) in idx.iter().enumerate() {
                for (d, v) in da.row_mut(i).iter_mut().zip(g.row(k)) {
                    *d += v;
                }
            }
            vec![(*a, da)]
        }
        Op::RowScatterAdd(a, idx) => {
            let da = g.gather_rows(idx).expect("scatter indices checked");
            vec![(*a, da)]
        }
        Op::SpMM(s, a) => {
            let da = s.transpose().matmul(g).expect("spmm shapes checked");
            vec![(*a, da)]
        }
        Op::LayerNorm { input, keep, inv_std } => {
            let cols = out.cols();
            let mut dx = Tensor::zeros(out.rows(), cols);
            for r in 0..out.rows() {
                let active: Vec<usize> = match keep {
                    Some(k) => (0..cols).filter(|&c| k[r * cols + c]).collect(),
                    None => (0..cols).collect(),
                };
                if active.is_empty() {
                    continue;
                }
                let m = active.len() as f64;
                let y = out.row(r);
                let dy = g.row(r);
                let mean_dy = active.iter().map(|&c| dy[c]).sum::<f64>() / m;
                let mean_dyy = active.iter().map(|&c| dy[c] * y[c]).sum::<f64>() / m;
                let row = dx.row_mut(r);
                for &c in &active {
                    row[c] = inv_std[r] * (dy[c] - mean_dy - y[c] * mean_dyy);
                }
            }
            vec![(*input, dx)]
        }
        Op::LogSoftmax(a) => {
            let mut dx = Tensor::zeros(out.rows(), out.cols());
            for r in 0..out.rows() {
                let s: f64 = g.row(r).iter().sum();
                for ((d, gv), y) in dx.row_mut(r).iter_mut().zip(g.row(r)).zip(out.row(r)) {
                    *d = gv - y.exp() * s;
                }
            }
            vec![(*a, dx)]
        }
        Op::Sum(a) => {
            let (r, c) = val(*a).shape();
            vec![(*a, Tensor::full(r, c, g.data()[0]))]
        }
        Op::GatherEntries(a, entries) => {
            let (r, c) = val(*a).shape();
            let mut da = Tensor::zeros(r, c);
            for (k, &(i, j)) in entries.iter().enumerate() {
                let cur = da.get(i, j);
                da.set(i, j, cur + g.data()[k]);
            }
            vec![(*a, da)]
        }
        Op::PairwiseNegDist(a) => {
            let x = val(*a);
            let n = x.rows();
            let mut dx = Tensor::zeros(n, x.cols());
            for i in 0..n {
                for j in 0..n {
                    if i == j {
                        continue;
                    }
                    let d = out.get(i, j);
                    if d == 0.0 {
                        continue;
                    }
                    // dD_ij/dx_i = (x_i - x_j) / D_ij, and D is symmetric.
                    let w = (g.get(i, j) + g.get(j, i)) / d;
                    if w == 0.0 {
                        continue;
                    }
                    let (xi, xj) = (x.row(i), x.row(j));
                    let diff: Vec<f64> = xi.iter().zip(xj).map(|(p, q)| p - q).collect();
                    for (o, df) in dx.row_mut(i).iter_mut().zip(&diff) {
                        *o += w * df;
                    }
                }
            }
            vec![(*a, dx)]
        }
        Op::PairDistSums(a, groups) => {
            let x = val(*a);
            let mut dx = Tensor::zeros(x.rows(), x.cols());
            for (k, group) in groups.iter().enumerate() {
                let w = g.data()[k];
                if w == 0.0 {
                    continue;
                }
                for &(p, q) in group {
                    let diff: Vec<f64> = x.row(p).iter().zip(x.row(q)).map(|(u, v)| u - v).collect();
                    let d = diff.iter().map(|v| v * v).sum::<f64>().sqrt();
                    if d == 0.0 {
                        continue;
                    }
                    for (o, df) in dx.row_mut(p).iter_mut().zip(&diff) {
                        *o -= w * df / d;
                    }
                    for (o, df) in dx.row_mut(q).iter_mut().zip(&diff) {
                        *o += w * df / d;
                    }
                }
            }
            vec![(*a, dx)]
        }
        Op::Entmax {
            scores,
            alpha,
            alpha_value,
            keep,
        } => {
            let cols = out.cols();
            let mut dz = Tensor::zeros(out.rows(), cols);
            let mut dalpha = 0.0;
            for r in 0..out.rows() {
                let active: Vec<usize> = match keep {
                    Some(k) => (0..cols).filter(|&c| k[r * cols + c]).collect(),
                    None => (0..cols).collect(),
                };
                let probs: Vec<f64> = active.iter().map(|&c| out.get(r, c)).collect();
                let up: Vec<f64> = active.iter().map(|&c| g.get(r, c)).collect();
                let (d, da) = entmax::entmax_backward(&probs, *alpha_value, &up);
                for (&c, v) in active.iter().zip(d) {
                    dz.set(r, c, v);
                }
                dalpha += da;
            }
            let mut v = vec![(*scores, dz)];
            if let Some(a) = alpha {
                v.push((*a, Tensor::scalar(dalpha)));
            }
            v
        }
    }
}

/// Shared row-wise layer normalization; returns the output and per-row 1/σ.
pub(crate) fn layer_norm_forward(x: &Tensor, keep: Option<&[bool]>) -> (Tensor, Vec<f64>) {
    let (rows, cols) = x.shape();
    let mut out = Tensor::zeros(rows, cols);
    let mut inv_std = vec![0.0; rows];
    for r in 0..rows {
        let row = x.row(r);
        let active = |c: usize| keep.is_none_or(|k| k[r * cols + c]);
        let (mut sum, mut m) = (0.0, 0usize);
        for (c, &v) in row.iter().enumerate() {
            if active(c) {
                sum += v;
                m += 1;
            }
        }
        let o = out.row_mut(r);
        if m == 0 {
            o.iter_mut().for_each(|v| *v = MASK_SENTINEL);
            continue;
        }
        let mean = sum / m as f64;
        let var = row
            .iter()
            .enumerate()
            .filter(|(c, _)| active(*c))
            .map(|(_, v)| (v - mean) * (v - mean))
            .sum::<f64>()
            / m as f64;
        let is = 1.0 / (var + LAYER_NORM_EPS).sqrt();
        inv_std[r] = is;
        for (c, (ov, &v)) in o.iter_mut().zip(row).enumerate() {
            *ov = if active(c) { (v - mean) * is } else { MASK_SENTINEL };
        }
    }
    (out, inv_std)
}

/// Plain `-‖x_i - x_j‖₂` matrix with the diagonal set to [`MASK_SENTINEL`].
pub(crate) fn neg_pairwise_dist(x: &Tensor) -> Tensor {
    let n = x.rows();
    let mut out = Tensor::zeros(n, n);
    for i in 0..n {
        out.set(i, i, MASK_SENTINEL);
        for j in (i + 1)..n {
            let d = x
                .row(i)
                .iter()
                .zip(x.row(j))
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                .sqrt();
            out.set(i, j, -d);
            out.set(j, i, -d);
        }
    }
    out
}

impl<'t> Var<'t> {
    pub fn value(&self) -> Rc<Tensor> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    pub fn rows(&self) -> usize {
        self.shape().0
    }

    pub fn cols(&self) -> usize {
        self.shape().1
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    fn check(&self, other: &Var<'_>) -> Result<()> {
        if !std::ptr::eq(self.tape, other.tape)
            || self.generation != other.generation
            || self.generation != self.tape.generation.get()
        {
            return Err(TensorError::NotOnTape);
        }
        Ok(())
    }

    fn alive(&self) -> Result<()> {
        if self.generation != self.tape.generation.get() {
            return Err(TensorError::NotOnTape);
        }
        Ok(())
    }

    fn emit(&self, op_name: &'static str, value: Tensor, op: Op) -> Result<Var<'t>> {
        check_finite(op_name, &value)?;
        Ok(self.tape.push(value, op))
    }

    /// Copy of the value with no gradient path back to `self`.
    pub fn detach(&self) -> Result<Var<'t>> {
        self.alive()?;
        Ok(self.tape.constant((*self.value()).clone()))
    }

    pub fn matmul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check(other)?;
        let v = self.value().matmul(&other.value())?;
        self.emit("matmul", v, Op::MatMul(self.id, other.id))
    }

    pub fn add(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check(other)?;
        let (a, b) = (self.value(), other.value());
        same_shape("add", &a, &b)?;
        self.emit("add", a.zip_with(&b, |x, y| x + y), Op::Add(self.id, other.id))
    }

    pub fn sub(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check(other)?;
        let (a, b) = (self.value(), other.value());
        same_shape("sub", &a, &b)?;
        self.emit("sub", a.zip_with(&b, |x, y| x - y), Op::Sub(self.id, other.id))
    }

    /// Elementwise product.
    pub fn mul(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check(other)?;
        let (a, b) = (self.value(), other.value());
        same_shape("mul", &a, &b)?;
        self.emit("mul", a.zip_with(&b, |x, y| x * y), Op::Mul(self.id, other.id))
    }

    /// Adds a `1×cols` row vector to every row.
    pub fn add_row(&self, bias: &Var<'t>) -> Result<Var<'t>> {
        self.check(bias)?;
        let (a, b) = (self.value(), bias.value());
        if b.rows() != 1 || b.cols() != a.cols() {
            return Err(TensorError::Shape {
                op: "add_row",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let mut v = (*a).clone();
        for r in 0..v.rows() {
            for (x, y) in v.row_mut(r).iter_mut().zip(b.row(0)) {
                *x += y;
            }
        }
        self.emit("add_row", v, Op::AddRow(self.id, bias.id))
    }

    pub fn scale(&self, s: f64) -> Result<Var<'t>> {
        self.alive()?;
        self.emit("scale", self.value().map(|v| v * s), Op::Scale(self.id, s))
    }

    pub fn add_scalar(&self, s: f64) -> Result<Var<'t>> {
        self.alive()?;
        self.emit("add_scalar", self.value().map(|v| v + s), Op::AddScalar(self.id))
    }

    pub fn relu(&self) -> Result<Var<'t>> {
        self.alive()?;
        self.emit("relu", self.value().map(|v| v.max(0.0)), Op::Relu(self.id))
    }

    pub fn sigmoid(&self) -> Result<Var<'t>> {
        self.alive()?;
        let v = self.value().map(|x| 1.0 / (1.0 + (-x).exp()));
        self.emit("sigmoid", v, Op::Sigmoid(self.id))
    }

    pub fn log(&self) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        if x.data().iter().any(|&v| v <= 0.0) {
            return Err(TensorError::Degenerate {
                op: "log",
                reason: "non-positive input".into(),
            });
        }
        self.emit("log", x.map(f64::ln), Op::Log(self.id))
    }

    pub fn exp(&self) -> Result<Var<'t>> {
        self.alive()?;
        self.emit("exp", self.value().map(f64::exp), Op::Exp(self.id))
    }

    pub fn concat_cols(&self, other: &Var<'t>) -> Result<Var<'t>> {
        self.check(other)?;
        let (a, b) = (self.value(), other.value());
        if a.rows() != b.rows() {
            return Err(TensorError::Shape {
                op: "concat_cols",
                left: a.shape(),
                right: b.shape(),
            });
        }
        let cols = a.cols() + b.cols();
        let mut data = Vec::with_capacity(a.rows() * cols);
        for r in 0..a.rows() {
            data.extend_from_slice(a.row(r));
            data.extend_from_slice(b.row(r));
        }
        let v = Tensor::from_raw(a.rows(), cols, data);
        self.emit("concat_cols", v, Op::ConcatCols(self.id, other.id))
    }

    /// Output row `k` is input row `idx[k]`.
    pub fn row_gather(&self, idx: Vec<usize>) -> Result<Var<'t>> {
        self.alive()?;
        let v = self.value().gather_rows(&idx)?;
        self.emit("row_gather", v, Op::RowGather(self.id, Rc::new(idx)))
    }

    /// Output row `idx[k]` accumulates input row `k`; output has `n_out` rows.
    pub fn row_scatter_add(&self, idx: Vec<usize>, n_out: usize) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        if idx.len() != x.rows() {
            return Err(TensorError::Shape {
                op: "row_scatter_add",
                left: x.shape(),
                right: (idx.len(), 1),
            });
        }
        let mut out = Tensor::zeros(n_out, x.cols());
        for (k, &i) in idx.iter().enumerate() {
            if i >= n_out {
                return Err(TensorError::Index {
                    op: "row_scatter_add",
                    index: i,
                    bound: n_out,
                });
            }
            for (o, v) in out.row_mut(i).iter_mut().zip(x.row(k)) {
                *o += v;
            }
        }
        self.emit("row_scatter_add", out, Op::RowScatterAdd(self.id, Rc::new(idx)))
    }

    /// Constant sparse matrix times `self`.
    pub fn spmm(&self, s: Rc<SparseMatrix>) -> Result<Var<'t>> {
        self.alive()?;
        let v = s.matmul(&self.value())?;
        self.emit("spmm", v, Op::SpMM(s, self.id))
    }

    /// Zero mean, unit variance per row (epsilon [`LAYER_NORM_EPS`]).
    pub fn layer_norm_rows(&self) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        if x.cols() < 2 {
            return Err(TensorError::Degenerate {
                op: "layer_norm_row",
                reason: format!("{} column(s); need at least 2", x.cols()),
            });
        }
        let (v, inv_std) = layer_norm_forward(&x, None);
        self.emit(
            "layer_norm_row",
            v,
            Op::LayerNorm {
                input: self.id,
                keep: None,
                inv_std,
            },
        )
    }

    /// Layer normalization restricted to entries with `keep == true`;
    /// the rest are written as [`MASK_SENTINEL`] and get no gradient.
    pub fn layer_norm_rows_masked(&self, keep: Rc<Vec<bool>>) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        if keep.len() != x.len() {
            return Err(TensorError::Shape {
                op: "layer_norm_row",
                left: x.shape(),
                right: (keep.len(), 1),
            });
        }
        let (v, inv_std) = layer_norm_forward(&x, Some(&keep));
        self.emit(
            "layer_norm_row",
            v,
            Op::LayerNorm {
                input: self.id,
                keep: Some(keep),
                inv_std,
            },
        )
    }

    pub fn log_softmax_rows(&self) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        let mut out = (*x).clone();
        for r in 0..out.rows() {
            let row = out.row_mut(r);
            let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            row.iter_mut().for_each(|v| *v -= lse);
        }
        self.emit("log_softmax", out, Op::LogSoftmax(self.id))
    }

    pub fn sum(&self) -> Result<Var<'t>> {
        self.alive()?;
        let s = self.value().sum();
        self.emit("sum", Tensor::scalar(s), Op::Sum(self.id))
    }

    /// Picks `(row, col)` entries into a `k×1` column.
    pub fn gather_entries(&self, entries: Vec<(usize, usize)>) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        let mut data = Vec::with_capacity(entries.len());
        for &(i, j) in &entries {
            if i >= x.rows() || j >= x.cols() {
                return Err(TensorError::Index {
                    op: "gather_entries",
                    index: i.max(j),
                    bound: x.rows().min(x.cols()),
                });
            }
            data.push(x.get(i, j));
        }
        let v = Tensor::from_raw(entries.len(), 1, data);
        self.emit("gather_entries", v, Op::GatherEntries(self.id, Rc::new(entries)))
    }

    /// `N×N` matrix of negative Euclidean distances between rows, diagonal masked.
    pub fn neg_pairwise_dist(&self) -> Result<Var<'t>> {
        self.alive()?;
        let v = neg_pairwise_dist(&self.value());
        self.emit("neg_pairwise_dist", v, Op::PairwiseNegDist(self.id))
    }

    /// `1×G` row: entry `g` is the sum of `-‖x_p - x_q‖₂` over the pairs of group `g`.
    pub fn pair_dist_sums(&self, groups: Vec<Vec<(usize, usize)>>) -> Result<Var<'t>> {
        self.alive()?;
        let x = self.value();
        let mut out = Vec::with_capacity(groups.len());
        for group in &groups {
            let mut s = 0.0;
            for &(p, q) in group {
                if p >= x.rows() || q >= x.rows() {
                    return Err(TensorError::Index {
                        op: "pair_dist_sums",
                        index: p.max(q),
                        bound: x.rows(),
                    });
                }
                s -= x
                    .row(p)
                    .iter()
                    .zip(x.row(q))
                    .map(|(a, b)| (a - b) * (a - b))
                    .sum::<f64>()
                    .sqrt();
            }
            out.push(s);
        }
        let v = Tensor::from_raw(1, groups.len(), out);
        self.emit("pair_dist_sums", v, Op::PairDistSums(self.id, Rc::new(groups)))
    }

    /// Row-wise α-entmax.
    ///
    /// `alpha` is either a fixed value or a `1×1` variable holding α itself
    /// (gradients flow into it). Entries with `keep == false` are excluded
    /// from the solve and receive probability zero.
    pub fn entmax_rows(&self, alpha: Alpha<'t>, keep: Option<Rc<Vec<bool>>>, eps: f64) -> Result<Var<'t>> {
        self.alive()?;
        let (alpha_id, alpha_value) = match alpha {
            Alpha::Fixed(a) => (None, a),
            Alpha::Learned(v) => {
                self.check(&v)?;
                let t = v.value();
                if t.shape() != (1, 1) {
                    return Err(TensorError::Shape {
                        op: "entmax",
                        left: self.shape(),
                        right: t.shape(),
                    });
                }
                (Some(v.id), t.data()[0])
            }
        };
        let x = self.value();
        let cols = x.cols();
        if let Some(k) = &keep {
            if k.len() != x.len() {
                return Err(TensorError::Shape {
                    op: "entmax",
                    left: x.shape(),
                    right: (k.len(), 1),
                });
            }
        }
        let mut out = Tensor::zeros(x.rows(), cols);
        for r in 0..x.rows() {
            let active: Vec<usize> = match &keep {
                Some(k) => (0..cols).filter(|&c| k[r * cols + c]).collect(),
                None => (0..cols).collect(),
            };
            let scores: Vec<f64> = active.iter().map(|&c| x.get(r, c)).collect();
            let res = entmax::entmax_forward(&scores, alpha_value, eps).map_err(|e| TensorError::Degenerate {
                op: "entmax",
                reason: e.to_string(),
            })?;
            for (&c, p) in active.iter().zip(res.probs) {
                out.set(r, c, p);
            }
        }
        self.emit(
            "entmax",
            out,
            Op::Entmax {
                scores: self.id,
                alpha: alpha_id,
                alpha_value,
                keep,
            },
        )
    }
}

/// How α enters an entmax op on the tape.
#[derive(Clone, Copy, Debug)]
pub enum Alpha<'t> {
    Fixed(f64),
    Learned(Var<'t>),
}
