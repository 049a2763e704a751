//! Skeleton inference: auxiliary node embeddings, node-wise entmax edge
//! sampling over negative distances, and graph convolution on the result.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::complex::Skeleton;
use crate::error::{Error, Result};
use crate::nn::{Bound, Linear, ParamStore};
use crate::tensor::{Alpha, SparseMatrix, Tensor, Var};

/// Symmetrically normalized adjacency: entry `(i, j)` is `1/√(d_i d_j)` for
/// every edge. Isolated vertices get empty rows.
pub fn gcn_adjacency(skeleton: &Skeleton) -> SparseMatrix {
    let n = skeleton.n_vertices();
    let deg: Vec<f64> = (0..n).map(|v| skeleton.degree(v) as f64).collect();
    let rows = (0..n)
        .map(|i| {
            skeleton
                .neighbors(i)
                .iter()
                .map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(n, rows).expect("valid skeleton indices")
}

/// One graph convolution `Â (x W) + b` with `Â` from [`gcn_adjacency`].
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GraphConv {
    pub lin: Linear,
}

impl GraphConv {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            lin: Linear::new(store, rng, name, d_in, d_out),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x: &Var<'t>, adj: &Rc<SparseMatrix>) -> Result<Var<'t>> {
        let xw = x.matmul(&p.var(self.lin.weight))?;
        Ok(xw.spmm(Rc::clone(adj))?.add_row(&p.var(self.lin.bias))?)
    }
}

/// Node-level message passing: `ReLU` graph convolutions over `skeleton`.
pub fn node_mp<'t>(p: &Bound<'t>, layers: &[GraphConv], x: &Var<'t>, skeleton: &Skeleton) -> Result<Vec<Var<'t>>> {
    if x.rows() != skeleton.n_vertices() {
        return Err(Error::Mismatch {
            what: "node features rows",
            expected: skeleton.n_vertices(),
            got: x.rows(),
        });
    }
    let adj = Rc::new(gcn_adjacency(skeleton));
    let mut h = *x;
    let mut outs = Vec::with_capacity(layers.len());
    for layer in layers {
        h = layer.forward(p, &h, &adj)?.relu()?;
        outs.push(h);
    }
    Ok(outs)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AuxMode {
    /// Affine layers; no input graph.
    Plain,
    /// Graph convolutions over the supplied input graph.
    Graph,
}

/// Three-layer embedding network producing the node features that the
/// similarity matrix is computed from. Activations ReLU, ReLU, none.
#[derive(Clone, Debug, PartialEq)]
pub struct AuxEncoder {
    pub layers: Vec<GraphConv>,
    pub mode: AuxMode,
}

impl AuxEncoder {
    pub fn new(
        store: &mut ParamStore,
        rng: &mut ChaCha8Rng,
        name: &str,
        d_in: usize,
        width: usize,
        mode: AuxMode,
    ) -> Self {
        let layers = (0..3)
            .map(|l| {
                let d = if l == 0 { d_in } else { width };
                GraphConv::new(store, rng, &format!("{name}.{l}"), d, width)
            })
            .collect();
        Self { layers, mode }
    }

    pub fn encode<'t>(&self, p: &Bound<'t>, x: &Var<'t>, g_in: Option<&Skeleton>) -> Result<Var<'t>> {
        let adj = match self.mode {
            AuxMode::Plain => None,
            AuxMode::Graph => {
                let g = g_in.ok_or(Error::MissingInputGraph)?;
                if g.n_vertices() != x.rows() {
                    return Err(Error::Mismatch {
                        what: "input graph vertices",
                        expected: x.rows(),
                        got: g.n_vertices(),
                    });
                }
                Some(Rc::new(gcn_adjacency(g)))
            }
        };
        let last = self.layers.len() - 1;
        let mut h = *x;
        for (l, layer) in self.layers.iter().enumerate() {
            h = match &adj {
                Some(a) => layer.forward(p, &h, a)?,
                None => layer.lin.forward(p, &h)?,
            };
            if l < last {
                h = h.relu()?;
            }
        }
        Ok(h)
    }
}

/// Negative Euclidean distances between embedding rows; the diagonal holds
/// the mask sentinel.
pub fn similarity_matrix<'t>(aux: &Var<'t>) -> Result<Var<'t>> {
    Ok(aux.neg_pairwise_dist()?)
}

/// Result of node-wise edge sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledSkeleton {
    /// Row `i` is the entmax distribution of node `i` over the other nodes.
    pub probs: Tensor,
    /// Union of the directed supports, as an undirected graph.
    pub skeleton: Skeleton,
}

/// Off-diagonal keep-mask for an `n×n` score matrix.
pub fn off_diagonal(n: usize) -> Rc<Vec<bool>> {
    Rc::new((0..n * n).map(|k| k / n != k % n).collect())
}

/// Masked row layer-norm, row entmax, then symmetrization.
pub fn sample_skeleton<'t>(sim: &Var<'t>, alpha: Alpha<'t>, eps: f64) -> Result<(Var<'t>, SampledSkeleton)> {
    let n = sim.rows();
    if n < 2 {
        return Err(Error::TooFewNodes(n));
    }
    if sim.cols() != n {
        return Err(Error::Mismatch {
            what: "similarity columns",
            expected: n,
            got: sim.cols(),
        });
    }
    let keep = off_diagonal(n);
    let z = sim.layer_norm_rows_masked(Rc::clone(&keep))?;
    let probs = z.entmax_rows(alpha, Some(keep), eps)?;
    let pv = probs.value();
    let mut pairs = Vec::new();
    for i in 0..n {
        for (j, &pij) in pv.row(i).iter().enumerate() {
            if pij > 0.0 && i != j {
                pairs.push((i, j));
            }
        }
    }
    let skeleton = Skeleton::new(n, pairs)?;
    Ok((
        probs,
        SampledSkeleton {
            probs: (*pv).clone(),
            skeleton,
        },
    ))
}
