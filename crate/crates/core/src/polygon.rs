//! Edge features, polygon sampling over induced cycles, and edge-level
//! cell complex convolution.

use std::rc::Rc;

use rand_chacha::ChaCha8Rng;

use crate::complex::{Adjacency, CellComplex, ComplexError, Dim, Skeleton};
use crate::error::{Error, Result};
use crate::nn::{fan_in_uniform, Bound, Linear, ParamId, ParamStore};
use crate::tensor::{Alpha, SparseMatrix, Tensor, Var};

/// `E×N` vertex-edge incidence with unit entries, endpoints in ascending order.
pub fn incidence_matrix(skeleton: &Skeleton) -> SparseMatrix {
    let rows = skeleton
        .edges()
        .iter()
        .map(|&(u, v)| vec![(u, 1.0), (v, 1.0)])
        .collect();
    SparseMatrix::from_rows(skeleton.n_vertices(), rows).expect("valid skeleton indices")
}

/// Node-to-edge lift `β(Σ_{v ∈ ∂e} φ(x_v))` with affine `φ` and `β`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Uplift {
    pub phi: Linear,
    pub beta: Linear,
}

impl Uplift {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        Self {
            phi: Linear::new(store, rng, &format!("{name}.phi"), d_in, d_out),
            beta: Linear::new(store, rng, &format!("{name}.beta"), d_out, d_out),
        }
    }

    pub fn forward<'t>(&self, p: &Bound<'t>, x_nodes: &Var<'t>, skeleton: &Skeleton) -> Result<Var<'t>> {
        self.forward_with(p, x_nodes, &Rc::new(incidence_matrix(skeleton)))
    }

    /// Same as [`Uplift::forward`] with a precomputed incidence matrix.
    pub fn forward_with<'t>(&self, p: &Bound<'t>, x_nodes: &Var<'t>, incidence: &Rc<SparseMatrix>) -> Result<Var<'t>> {
        if x_nodes.rows() != incidence.cols() {
            return Err(Error::Mismatch {
                what: "node features rows",
                expected: incidence.cols(),
                got: x_nodes.rows(),
            });
        }
        let msg = self.phi.forward(p, x_nodes)?;
        let agg = msg.spmm(Rc::clone(incidence))?;
        Ok(self.beta.forward(p, &agg)?)
    }
}

/// Edge ids of a vertex cycle, in walk order.
pub fn cycle_edges(skeleton: &Skeleton, cycle: &[usize]) -> Result<Vec<usize>> {
    let k = cycle.len();
    (0..k)
        .map(|i| {
            skeleton
                .edge_id(cycle[i], cycle[(i + 1) % k])
                .ok_or_else(|| Error::Complex(ComplexError::NotInducedCycle(cycle.to_vec())))
        })
        .collect()
}

/// All `k(k-1)/2` unordered pairs of a cycle's edges.
pub fn edge_pairs(edges: &[usize]) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(edges.len() * edges.len().saturating_sub(1) / 2);
    for i in 0..edges.len() {
        for j in i + 1..edges.len() {
            out.push((edges[i], edges[j]));
        }
    }
    out
}

/// Sum of negative Euclidean distances between the embeddings of every
/// pair of the cycle's edges.
pub fn cycle_similarity(aux_edges: &Tensor, edges: &[usize]) -> Result<f64> {
    if let Some(&bad) = edges.iter().find(|&&e| e >= aux_edges.rows()) {
        return Err(Error::Complex(ComplexError::IdRange {
            what: "edge",
            id: bad,
            len: aux_edges.rows(),
        }));
    }
    let mut s = 0.0;
    for (a, b) in edge_pairs(edges) {
        let d: f64 = aux_edges
            .row(a)
            .iter()
            .zip(aux_edges.row(b))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        s -= d.sqrt();
    }
    Ok(s)
}

/// Outcome of polygon sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct SampledPolygons {
    /// Canonical candidate cycles (vertex lists).
    pub candidates: Vec<Vec<usize>>,
    /// Distribution over candidates.
    pub probs: Vec<f64>,
    /// Candidate ids with positive probability.
    pub selected: Vec<usize>,
}

impl SampledPolygons {
    /// Percentage of candidates kept; 0 when there are none.
    pub fn pct_selected(&self) -> f64 {
        if self.candidates.is_empty() {
            0.0
        } else {
            100.0 * self.selected.len() as f64 / self.candidates.len() as f64
        }
    }
}

/// Scores each candidate by [`cycle_similarity`], layer-normalizes the score
/// vector, and applies one global entmax.
///
/// With `all_polygons` every candidate is kept with uniform probability and
/// the returned probabilities carry no gradient. Returns `None` for the
/// probability variable when there are no candidates.
pub fn sample_polygons<'t>(
    aux_edges: &Var<'t>,
    skeleton: &Skeleton,
    candidates: Vec<Vec<usize>>,
    alpha: Alpha<'t>,
    all_polygons: bool,
    eps: f64,
) -> Result<(Option<Var<'t>>, SampledPolygons)> {
    let count = candidates.len();
    if count == 0 {
        return Ok((
            None,
            SampledPolygons {
                candidates,
                probs: Vec::new(),
                selected: Vec::new(),
            },
        ));
    }
    if aux_edges.rows() != skeleton.n_edges() {
        return Err(Error::Mismatch {
            what: "edge features rows",
            expected: skeleton.n_edges(),
            got: aux_edges.rows(),
        });
    }
    if all_polygons {
        let u = 1.0 / count as f64;
        let probs = aux_edges.tape().constant(Tensor::full(1, count, u));
        return Ok((
            Some(probs),
            SampledPolygons {
                selected: (0..count).collect(),
                probs: vec![u; count],
                candidates,
            },
        ));
    }
    let groups = candidates
        .iter()
        .map(|c| cycle_edges(skeleton, c).map(|e| edge_pairs(&e)))
        .collect::<Result<Vec<_>>>()?;
    let z = aux_edges.pair_dist_sums(groups)?;
    // The masked form tolerates a single candidate (normalized to 0).
    let keep = Rc::new(vec![true; count]);
    let z = z.layer_norm_rows_masked(Rc::clone(&keep))?;
    let probs = z.entmax_rows(alpha, None, eps)?;
    let pv = probs.value().data().to_vec();
    let selected = (0..count).filter(|&c| pv[c] > 0.0).collect();
    Ok((
        Some(probs),
        SampledPolygons {
            candidates,
            probs: pv,
            selected,
        },
    ))
}

/// Degree-normalized sparse adjacency `1/√(d_i d_j)` over one neighborhood.
fn normalized(complex: &CellComplex, kind: Adjacency) -> SparseMatrix {
    let e = complex.n_cells(Dim::Edge);
    let deg: Vec<f64> = (0..e).map(|i| complex.nbrs(Dim::Edge, kind, i).len() as f64).collect();
    let rows = (0..e)
        .map(|i| {
            complex
                .nbrs(Dim::Edge, kind, i)
                .iter()
                .map(|&j| (j, 1.0 / (deg[i] * deg[j]).sqrt()))
                .collect()
        })
        .collect();
    SparseMatrix::from_rows(e, rows).expect("valid complex indices")
}

/// Upper and lower normalized edge adjacencies of a complex.
pub fn edge_adjacencies(complex: &CellComplex) -> (SparseMatrix, SparseMatrix) {
    (
        normalized(complex, Adjacency::Upper),
        normalized(complex, Adjacency::Lower),
    )
}

/// Edge convolution `A_u x W_u + A_d x W_d + x W + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CellConv {
    pub w_up: ParamId,
    pub w_down: ParamId,
    pub skip: Linear,
}

impl CellConv {
    pub fn new(store: &mut ParamStore, rng: &mut ChaCha8Rng, name: &str, d_in: usize, d_out: usize) -> Self {
        let w_up = store.add(format!("{name}.w_up"), fan_in_uniform(rng, d_in, d_out, d_in));
        let w_down = store.add(format!("{name}.w_down"), fan_in_uniform(rng, d_in, d_out, d_in));
        let skip = Linear::new(store, rng, &format!("{name}.skip"), d_in, d_out);
        Self { w_up, w_down, skip }
    }

    pub fn forward<'t>(
        &self,
        p: &Bound<'t>,
        x: &Var<'t>,
        upper: &Rc<SparseMatrix>,
        lower: &Rc<SparseMatrix>,
    ) -> Result<Var<'t>> {
        let up = x.matmul(&p.var(self.w_up))?.spmm(Rc::clone(upper))?;
        let down = x.matmul(&p.var(self.w_down))?.spmm(Rc::clone(lower))?;
        let skip = self.skip.forward(p, x)?;
        Ok(up.add(&down)?.add(&skip)?)
    }
}

/// Edge-level message passing: `ReLU` cell convolutions over `complex`.
pub fn edge_mp<'t>(p: &Bound<'t>, layers: &[CellConv], x: &Var<'t>, complex: &CellComplex) -> Result<Vec<Var<'t>>> {
    let e = complex.n_cells(Dim::Edge);
    if x.rows() != e {
        return Err(Error::Mismatch {
            what: "edge features rows",
            expected: e,
            got: x.rows(),
        });
    }
    let (upper, lower) = edge_adjacencies(complex);
    let (upper, lower) = (Rc::new(upper), Rc::new(lower));
    let mut h = *x;
    let mut outs = Vec::with_capacity(layers.len());
    for layer in layers {
        h = layer.forward(p, &h, &upper, &lower)?.relu()?;
        outs.push(h);
    }
    Ok(outs)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{enumerate_induced_cycles, lift};
    use crate::tensor::Tape;
    use rand::{Rng, SeedableRng};

    fn rng() -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(5)
    }

    fn random(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
    }

    fn identity_uplift(store: &mut ParamStore, d: usize) -> Uplift {
        let up = Uplift::new(store, &mut rng(), "up", d, d);
        for lin in [up.phi, up.beta] {
            *store.get_mut(lin.weight) = Tensor::identity(d);
            store.get_mut(lin.bias).data_mut().fill(0.0);
        }
        up
    }

    #[test]
    fn identity_uplift_sums_endpoints() {
        let mut store = ParamStore::new();
        let up = identity_uplift(&mut store, 2);
        let s = Skeleton::new(3, [(0, 1), (1, 2)]).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0], [1.0, 2.0]]).unwrap());
        let e = up.forward(&p, &x, &s).unwrap().value();
        assert_eq!(e.data(), &[4.0, 6.0, 4.0, 6.0]);
    }

    #[test]
    fn equal_endpoints_give_beta_of_twice_phi() {
        let mut store = ParamStore::new();
        let up = Uplift::new(&mut store, &mut rng(), "up", 3, 4);
        let s = Skeleton::new(2, [(0, 1)]).unwrap();
        let row = [0.5, -1.0, 2.0];
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(Tensor::from_rows(&[row, row]).unwrap());
        let e = up.forward(&p, &x, &s).unwrap().value();
        let one = tape.constant(Tensor::from_rows(&[row]).unwrap());
        let phi = up.phi.forward(&p, &one).unwrap().scale(2.0).unwrap();
        let expect = up.beta.forward(&p, &phi).unwrap().value();
        assert!(e.max_abs_diff(&expect) < 1e-14);
    }

    #[test]
    fn uplift_is_endpoint_swap_invariant() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let up = Uplift::new(&mut store, &mut r, "up", 3, 4);
        let s = Skeleton::new(5, [(0, 1), (1, 2), (2, 3), (3, 4), (0, 4), (1, 3)]).unwrap();
        let swapped =
            SparseMatrix::from_rows(5, s.edges().iter().map(|&(u, v)| vec![(v, 1.0), (u, 1.0)]).collect()).unwrap();
        let tape = Tape::new();
        let p = store.bind(&tape);
        let x = tape.constant(random(&mut r, 5, 3));
        let a = up.forward(&p, &x, &s).unwrap().value();
        let b = up.forward_with(&p, &x, &Rc::new(swapped)).unwrap().value();
        assert_eq!(a, b);
    }

    #[test]
    fn cycle_similarity_examples() {
        let same = Tensor::full(3, 2, 1.5);
        assert_eq!(cycle_similarity(&same, &[0, 1, 2]).unwrap(), 0.0);
        // Vertices of a unit equilateral triangle.
        let h = 3f64.sqrt() / 2.0;
        let tri = Tensor::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.5, h]]).unwrap();
        assert!((cycle_similarity(&tri, &[0, 1, 2]).unwrap() + 3.0).abs() < 1e-12);
        assert!(cycle_similarity(&tri, &[0, 1, 7]).is_err());

        let r = random(&mut rng(), 4, 3);
        let mut oracle = 0.0;
        let mut terms = 0;
        for i in 0..4 {
            for j in 0..4 {
                if i < j {
                    let d: f64 = (0..3).map(|k| (r.get(i, k) - r.get(j, k)).powi(2)).sum();
                    oracle -= d.sqrt();
                    terms += 1;
                }
            }
        }
        assert_eq!(terms, 6);
        assert!((cycle_similarity(&r, &[0, 1, 2, 3]).unwrap() - oracle).abs() < 1e-12);
        // Rotation and reflection invariance.
        let rot = cycle_similarity(&r, &[2, 3, 0, 1]).unwrap();
        let refl = cycle_similarity(&r, &[3, 2, 1, 0]).unwrap();
        assert!((rot - oracle).abs() < 1e-12 && (refl - oracle).abs() < 1e-12);
    }

    #[test]
    fn sampling_special_cases() {
        let k3 = Skeleton::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let tape = Tape::new();
        let aux = tape.constant(random(&mut rng(), 3, 4));
        let (_, s) = sample_polygons(&aux, &k3, vec![vec![0, 1, 2]], Alpha::Fixed(1.5), false, 1e-8).unwrap();
        assert_eq!(s.selected, vec![0]);
        assert_eq!(s.probs, vec![1.0]);

        let k4 = Skeleton::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
        let cands = enumerate_induced_cycles(&k4, 4).unwrap();
        let aux = tape.constant(random(&mut rng(), 6, 4));
        let (_, s) = sample_polygons(&aux, &k4, cands, Alpha::Fixed(1.5), true, 1e-8).unwrap();
        assert_eq!(s.selected, vec![0, 1, 2, 3]);
        assert_eq!(s.probs, vec![0.25; 4]);
        assert_eq!(s.pct_selected(), 100.0);

        let (v, s) = sample_polygons(&aux, &k4, Vec::new(), Alpha::Fixed(1.5), false, 1e-8).unwrap();
        assert!(v.is_none() && s.selected.is_empty());
    }

    #[test]
    fn sampling_is_deterministic_and_on_simplex() {
        let mut r = rng();
        let k5: Vec<(usize, usize)> = (0..6).flat_map(|u| (u + 1..6).map(move |v| (u, v))).collect();
        let s = Skeleton::new(6, k5).unwrap();
        let cands = enumerate_induced_cycles(&s, 4).unwrap();
        let x = random(&mut r, s.n_edges(), 4);
        let tape = Tape::new();
        let run = || {
            let aux = tape.constant(x.clone());
            sample_polygons(&aux, &s, cands.clone(), Alpha::Fixed(1.5), false, 1e-10)
                .unwrap()
                .1
        };
        let a = run();
        assert_eq!(a, run());
        assert!((a.probs.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.selected.len() <= a.candidates.len());
    }

    /// Dense oracle for one cell convolution built from incidence patterns.
    fn dense_cccn(c: &CellComplex, x: &Tensor, wu: &Tensor, wd: &Tensor, w: &Tensor) -> Tensor {
        let s = c.skeleton();
        let (e, p) = (s.n_edges(), c.polygons().len());
        let mut b1 = Tensor::zeros(s.n_vertices(), e);
        for (id, &(u, v)) in s.edges().iter().enumerate() {
            b1.set(u, id, 1.0);
            b1.set(v, id, 1.0);
        }
        let mut b2 = Tensor::zeros(e, p);
        for (pid, cyc) in c.polygons().iter().enumerate() {
            for eid in cycle_edges(s, cyc).unwrap() {
                b2.set(eid, pid, 1.0);
            }
        }
        let pattern = |m: Tensor| {
            let mut a = m.map(|v| if v != 0.0 { 1.0 } else { 0.0 });
            for i in 0..e {
                a.set(i, i, 0.0);
            }
            let d: Vec<f64> = (0..e).map(|i| a.row(i).iter().sum()).collect();
            for i in 0..e {
                for j in 0..e {
                    if a.get(i, j) != 0.0 {
                        a.set(i, j, 1.0 / (d[i] * d[j]).sqrt());
                    }
                }
            }
            a
        };
        let au = pattern(b2.matmul(&b2.transpose()).unwrap());
        let ad = pattern(b1.transpose().matmul(&b1).unwrap());
        let t1 = au.matmul(x).unwrap().matmul(wu).unwrap();
        let t2 = ad.matmul(x).unwrap().matmul(wd).unwrap();
        let t3 = x.matmul(w).unwrap();
        let mut out = t1;
        out.add_assign(&t2);
        out.add_assign(&t3);
        out.map(|v| v.max(0.0))
    }

    fn zero_bias_conv(store: &mut ParamStore, r: &mut ChaCha8Rng, d: usize) -> CellConv {
        let conv = CellConv::new(store, r, "cc", d, d);
        store.get_mut(conv.skip.bias).data_mut().fill(0.0);
        conv
    }

    #[test]
    fn edge_mp_matches_dense_oracle() {
        let mut r = rng();
        for trial in 0..20 {
            let n = 7;
            let pairs: Vec<(usize, usize)> = (0..n)
                .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
                .filter(|_| r.gen_bool(0.5))
                .collect();
            let s = Skeleton::new(n, pairs).unwrap();
            let cands = enumerate_induced_cycles(&s, 4).unwrap();
            let sel: Vec<usize> = (0..cands.len()).filter(|_| trial % 3 == 0 || r.gen_bool(0.5)).collect();
            let c = lift(&s, &cands, &sel).unwrap();
            let mut store = ParamStore::new();
            let conv = zero_bias_conv(&mut store, &mut r, 3);
            let x = random(&mut r, s.n_edges(), 3);
            let tape = Tape::new();
            let p = store.bind(&tape);
            let out = edge_mp(&p, &[conv], &tape.constant(x.clone()), &c).unwrap()[0].value();
            let oracle = dense_cccn(
                &c,
                &x,
                store.get(conv.w_up),
                store.get(conv.w_down),
                store.get(conv.skip.weight),
            );
            assert!(out.max_abs_diff(&oracle) < 1e-10);
        }
    }

    #[test]
    fn edge_mp_structural_reductions() {
        let mut r = rng();
        let mut store = ParamStore::new();
        let conv = zero_bias_conv(&mut store, &mut r, 2);
        let tape = Tape::new();
        let p = store.bind(&tape);

        // Single edge: both neighborhoods empty.
        let one = lift(&Skeleton::new(2, [(0, 1)]).unwrap(), &[], &[]).unwrap();
        let x = tape.constant(random(&mut r, 1, 2));
        let out = edge_mp(&p, &[conv], &x, &one).unwrap()[0].value();
        let expect = x
            .value()
            .matmul(store.get(conv.skip.weight))
            .unwrap()
            .map(|v| v.max(0.0));
        assert!(out.max_abs_diff(&expect) < 1e-15);

        // Lifted triangle with identity weights.
        for id in [conv.w_up, conv.w_down, conv.skip.weight] {
            *store.get_mut(id) = Tensor::identity(2);
        }
        let p = store.bind(&tape);
        let k3 = Skeleton::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let c = lift(&k3, &[vec![0, 1, 2]], &[0]).unwrap();
        let xt = random(&mut r, 3, 2);
        let out = edge_mp(&p, &[conv], &tape.constant(xt.clone()), &c).unwrap()[0].value();
        let i2 = Tensor::identity(2);
        assert!(out.max_abs_diff(&dense_cccn(&c, &xt, &i2, &i2, &i2)) < 1e-10);

        // No polygons: the upper weight has no effect.
        let bare = lift(&k3, &[], &[]).unwrap();
        let before = edge_mp(&p, &[conv], &tape.constant(xt.clone()), &bare).unwrap()[0].value();
        store.get_mut(conv.w_up).data_mut().fill(7.0);
        let p = store.bind(&tape);
        let after = edge_mp(&p, &[conv], &tape.constant(xt), &bare).unwrap()[0].value();
        assert_eq!(before, after);
    }
}
