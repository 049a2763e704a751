//! Finite-difference gradient cases shared by the gradient tests and the
//! acceptance report.
#![allow(dead_code)]

use std::rc::Rc;

use celltop::complex::{enumerate_induced_cycles, lift, Skeleton};
use celltop::data::two_blobs;
use celltop::network::{DcmModel, Downlift, Mode, ModelConfig};
use celltop::nn::{Bound, ParamStore};
use celltop::polygon::{edge_mp, sample_polygons, CellConv, Uplift};
use celltop::skeleton::{node_mp, sample_skeleton, similarity_matrix, AuxEncoder, AuxMode, GraphConv};
use celltop::tensor::{Alpha, SparseMatrix, Tensor, Var};
use celltop::testing::{check_gradients, GradCheck, GradCheckOptions};
use celltop::training::{graph_loss, objective, polygon_loss, LossWeights};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Tight enough that bisection error stays far below finite-difference noise.
pub const FD_ENTMAX_EPS: f64 = 1e-13;

pub fn uniform(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
    Tensor::new(r, c, (0..r * c).map(|_| rng.gen_range(-2.0..2.0)).collect()).unwrap()
}

fn readout<'t>(v: &Var<'t>, w: &Tensor) -> Var<'t> {
    v.mul(&v.tape().constant(w.clone())).unwrap().sum().unwrap()
}

fn positive(v: &Var<'_>) -> Vec<bool> {
    v.value().data().iter().map(|&x| x > 0.0).collect()
}

pub fn random_skeleton(rng: &mut ChaCha8Rng, n: usize, p: f64) -> Skeleton {
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|u| (u + 1..n).map(move |v| (u, v)))
        .filter(|_| rng.gen_bool(p))
        .collect();
    Skeleton::new(n, pairs).unwrap()
}

fn opts(seed: u64) -> GradCheckOptions {
    GradCheckOptions {
        seed,
        ..GradCheckOptions::default()
    }
}

/// One gradient case: name, tolerance and a per-seed check.
pub struct Case {
    pub name: &'static str,
    pub tol: f64,
    pub run: fn(u64) -> GradCheck,
}

pub struct CaseResult {
    pub name: &'static str,
    pub tol: f64,
    pub seeds: usize,
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CaseResult {
    pub fn passed(&self) -> bool {
        self.worst <= self.tol && self.checked > 0
    }
}

pub fn run_case(case: &Case, seeds: u64) -> CaseResult {
    let mut r = CaseResult {
        name: case.name,
        tol: case.tol,
        seeds: seeds as usize,
        worst: 0.0,
        checked: 0,
        skipped: 0,
    };
    for s in 0..seeds {
        let g = (case.run)(s);
        r.worst = r.worst.max(g.max_rel_error());
        r.checked += g.checked;
        r.skipped += g.skipped;
    }
    r
}

fn unary(seed: u64, r: usize, c: usize, f: for<'t> fn(&Var<'t>) -> Var<'t>) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, r, c);
    let w = uniform(&mut rng, r, c);
    let shape = (r, c);
    check_gradients(&[x], opts(seed), |v| {
        let y = f(&v[0]);
        let w = if y.shape() == shape {
            w.clone()
        } else {
            Tensor::full(y.rows(), y.cols(), 0.7)
        };
        (readout(&y, &w), positive(&y))
    })
}

fn binary(seed: u64, a: (usize, usize), b: (usize, usize), f: for<'t> fn(&Var<'t>, &Var<'t>) -> Var<'t>) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, a.0, a.1);
    let y = uniform(&mut rng, b.0, b.1);
    let wr = ChaCha8Rng::seed_from_u64(seed ^ 0xABCD);
    check_gradients(&[x, y], opts(seed), |v| {
        let out = f(&v[0], &v[1]);
        let w = uniform(&mut wr.clone(), out.rows(), out.cols());
        (readout(&out, &w), ())
    })
}

fn masked_row_keep(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Rc<Vec<bool>> {
    let mut keep = vec![false; r * c];
    for i in 0..r {
        let a = rng.gen_range(0..c);
        let b = (a + 1 + rng.gen_range(0..c - 1)) % c;
        keep[i * c + a] = true;
        keep[i * c + b] = true;
        for j in 0..c {
            if rng.gen_bool(0.5) {
                keep[i * c + j] = true;
            }
        }
    }
    Rc::new(keep)
}

fn entmax_case(seed: u64, learned: bool) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (r, c) = (4, 6);
    let x = uniform(&mut rng, r, c);
    let w = uniform(&mut rng, r, c);
    let keep = masked_row_keep(&mut rng, r, c);
    let fixed = [1.0, 1.25, 1.5, 1.75, 2.0][seed as usize % 5];
    let raw = Tensor::scalar(rng.gen_range(-1.5..1.5));
    let inputs = if learned { vec![x, raw] } else { vec![x] };
    check_gradients(&inputs, opts(seed), |v| {
        let alpha = if learned {
            Alpha::Learned(v[1].sigmoid().unwrap().add_scalar(1.0).unwrap())
        } else {
            Alpha::Fixed(fixed)
        };
        let p = v[0]
            .scale(3.0)
            .unwrap()
            .entmax_rows(alpha, Some(Rc::clone(&keep)), FD_ENTMAX_EPS)
            .unwrap();
        (readout(&p, &w), positive(&p))
    })
}

fn with_params<F>(seed: u64, x: Tensor, store: &ParamStore, f: F) -> GradCheck
where
    F: for<'t> Fn(&Bound<'t>, &Var<'t>) -> (Var<'t>, Vec<bool>),
{
    let mut inputs = vec![x];
    inputs.extend(store.values().iter().cloned());
    let opts = GradCheckOptions {
        max_coords_per_input: Some(12),
        seed,
        ..GradCheckOptions::default()
    };
    check_gradients(&inputs, opts, |v| {
        let p = Bound::from_vars(v[1..].to_vec());
        f(&p, &v[0])
    })
}

fn node_mp_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_skeleton(&mut rng, 7, 0.4);
    let mut store = ParamStore::new();
    let layers = vec![
        GraphConv::new(&mut store, &mut rng, "g0", 4, 5),
        GraphConv::new(&mut store, &mut rng, "g1", 5, 3),
    ];
    let x = uniform(&mut rng, 7, 4);
    let w = uniform(&mut rng, 7, 3);
    with_params(seed, x, &store, |p, x| {
        let outs = node_mp(p, &layers, x, &s).unwrap();
        let sig = outs.iter().flat_map(positive).collect();
        (readout(outs.last().unwrap(), &w), sig)
    })
}

fn uplift_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = random_skeleton(&mut rng, 6, 0.5);
    let mut store = ParamStore::new();
    let up = Uplift::new(&mut store, &mut rng, "up", 3, 4);
    let x = uniform(&mut rng, 6, 3);
    let w = uniform(&mut rng, s.n_edges(), 4);
    with_params(seed, x, &store, |p, x| {
        (readout(&up.forward(p, x, &s).unwrap(), &w), vec![])
    })
}

fn random_complex(rng: &mut ChaCha8Rng, n: usize) -> celltop::complex::CellComplex {
    let s = random_skeleton(rng, n, 0.5);
    let cands = enumerate_induced_cycles(&s, 5).unwrap();
    let sel: Vec<usize> = (0..cands.len()).filter(|_| rng.gen_bool(0.6)).collect();
    lift(&s, &cands, &sel).unwrap()
}

fn edge_mp_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_complex(&mut rng, 7);
    let e = c.skeleton().n_edges();
    let mut store = ParamStore::new();
    let layers = vec![
        CellConv::new(&mut store, &mut rng, "c0", 3, 4),
        CellConv::new(&mut store, &mut rng, "c1", 4, 2),
    ];
    let x = uniform(&mut rng, e, 3);
    let w = uniform(&mut rng, e, 2);
    with_params(seed, x, &store, |p, x| {
        let outs = edge_mp(p, &layers, x, &c).unwrap();
        let sig = outs.iter().flat_map(positive).collect();
        (readout(outs.last().unwrap(), &w), sig)
    })
}

fn downlift_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let c = random_complex(&mut rng, 6);
    let e = c.skeleton().n_edges();
    let mut store = ParamStore::new();
    let dl = Downlift::new(&mut store, &mut rng, "dl", 3);
    let xe = uniform(&mut rng, e, 3);
    let xn = uniform(&mut rng, 6, 3);
    let w = uniform(&mut rng, 6, 6);
    with_params(seed, xe, &store, |p, xe| {
        let xn = xe.tape().constant(xn.clone());
        (readout(&dl.forward(p, xe, &xn, &c).unwrap(), &w), vec![])
    })
}

fn graph_loss_case(seed: u64, n: usize) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut store = ParamStore::new();
    let aux = AuxEncoder::new(&mut store, &mut rng, "aux", 3, 4, AuxMode::Plain);
    let raw = store.add("alpha", Tensor::scalar(rng.gen_range(-1.0..1.0)));
    let x = uniform(&mut rng, n, 3);
    let delta: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    with_params(seed, x, &store, |p, x| {
        let h = aux.encode(p, x, None).unwrap();
        let alpha = p.var(raw).sigmoid().unwrap().add_scalar(1.0).unwrap();
        let (probs, sampled) =
            sample_skeleton(&similarity_matrix(&h).unwrap(), Alpha::Learned(alpha), FD_ENTMAX_EPS).unwrap();
        let sig = positive(&probs);
        (graph_loss(&delta, &probs, &sampled.skeleton).unwrap(), sig)
    })
}

fn polygon_loss_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k4 = Skeleton::new(4, [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)]).unwrap();
    let cands = enumerate_induced_cycles(&k4, 4).unwrap();
    assert_eq!(cands.len(), 4);
    let mut store = ParamStore::new();
    let aux = AuxEncoder::new(&mut store, &mut rng, "aux", 3, 4, AuxMode::Plain);
    let up = Uplift::new(&mut store, &mut rng, "aux_up", 4, 4);
    let raw = store.add("alpha", Tensor::scalar(rng.gen_range(-1.0..1.0)));
    let x = uniform(&mut rng, 4, 3);
    let delta: Vec<f64> = (0..4).map(|_| rng.gen_range(-1.0..1.0)).collect();
    with_params(seed, x, &store, |p, x| {
        let tape = x.tape();
        let h = aux.encode(p, x, None).unwrap();
        let he = up.forward(p, &h, &k4).unwrap();
        let alpha = p.var(raw).sigmoid().unwrap().add_scalar(1.0).unwrap();
        let (probs, polys) =
            sample_polygons(&he, &k4, cands.clone(), Alpha::Learned(alpha), false, FD_ENTMAX_EPS).unwrap();
        let sig = probs.as_ref().map(positive).unwrap_or_default();
        (polygon_loss(tape, &delta, probs.as_ref(), &polys).unwrap(), sig)
    })
}

/// The full objective on a 6-node instance, dropout active with a fixed mask.
///
/// The inference branch reads a detached copy of the encoder output, so
/// for encoder parameters the tape gradient of the full objective is the
/// task-loss gradient; that is what their finite differences are taken of.
/// Every other parameter is checked against the full objective.
pub fn full_model_case(seed: u64) -> GradCheck {
    let ds = two_blobs(6, 3, 1.5, seed);
    let cfg = ModelConfig {
        hidden: 8,
        entmax_eps: FD_ENTMAX_EPS,
        ..ModelConfig::default()
    };
    let model = DcmModel::new(cfg, 3, 2, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let delta: Vec<f64> = (0..6).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let train = vec![0, 1, 2, 3];
    let inputs = model.params.values().to_vec();
    let encoder: Vec<usize> = model
        .params
        .ids()
        .filter(|&id| model.params.name(id).starts_with("encoder."))
        .map(|id| id.index())
        .collect();
    let rest: Vec<usize> = (0..inputs.len()).filter(|k| !encoder.contains(k)).collect();
    let task_only = LossWeights {
        graph: 0.0,
        polygon: 0.0,
        ..LossWeights::default()
    };
    let run = |weights: LossWeights, skip: Vec<usize>| {
        let opts = GradCheckOptions {
            max_coords_per_input: Some(8),
            seed,
            skip_inputs: skip,
            ..GradCheckOptions::default()
        };
        check_gradients(&inputs, opts, |v| {
            let p = Bound::from_vars(v.to_vec());
            let x = v[0].tape().constant(ds.features.clone());
            let mut drop = ChaCha8Rng::seed_from_u64(seed + 1000);
            let out = model.forward(&p, &x, None, Mode::Train(&mut drop)).unwrap();
            let mut sig = Vec::new();
            for l in &out.layers {
                sig.extend(positive(&l.edge_probs));
                sig.extend(l.polygon_probs.as_ref().map(positive).unwrap_or_default());
            }
            let obj = objective(&out, &ds.labels, &train, &delta, &weights).unwrap();
            (obj.total, sig)
        })
    };
    let full = run(LossWeights::default(), encoder);
    let enc = run(task_only, rest);
    GradCheck {
        checked: full.checked + enc.checked,
        skipped: full.skipped + enc.skipped,
        worst: [full.worst, enc.worst]
            .into_iter()
            .flatten()
            .max_by(|a, b| a.rel_error.total_cmp(&b.rel_error)),
    }
}

fn sparse(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Rc<SparseMatrix> {
    let rows = (0..r)
        .map(|_| {
            let mut row = Vec::new();
            for j in 0..c {
                if rng.gen_bool(0.5) {
                    row.push((j, rng.gen_range(-1.0..1.0)));
                }
            }
            row
        })
        .collect();
    Rc::new(SparseMatrix::from_rows(c, rows).unwrap())
}

pub fn cases() -> Vec<Case> {
    const T: f64 = 1e-4;
    vec![
        Case {
            name: "matmul",
            tol: T,
            run: |s| binary(s, (5, 4), (4, 3), |a, b| a.matmul(b).unwrap()),
        },
        Case {
            name: "add",
            tol: T,
            run: |s| binary(s, (3, 4), (3, 4), |a, b| a.add(b).unwrap()),
        },
        Case {
            name: "sub",
            tol: T,
            run: |s| binary(s, (3, 4), (3, 4), |a, b| a.sub(b).unwrap()),
        },
        Case {
            name: "mul",
            tol: T,
            run: |s| binary(s, (3, 4), (3, 4), |a, b| a.mul(b).unwrap()),
        },
        Case {
            name: "add_row",
            tol: T,
            run: |s| binary(s, (3, 4), (1, 4), |a, b| a.add_row(b).unwrap()),
        },
        Case {
            name: "concat_cols",
            tol: T,
            run: |s| binary(s, (3, 2), (3, 3), |a, b| a.concat_cols(b).unwrap()),
        },
        Case {
            name: "scale",
            tol: T,
            run: |s| unary(s, 3, 4, |a| a.scale(-0.7).unwrap()),
        },
        Case {
            name: "add_scalar",
            tol: T,
            run: |s| unary(s, 3, 4, |a| a.add_scalar(1.3).unwrap().mul(a).unwrap()),
        },
        Case {
            name: "relu",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.relu().unwrap()),
        },
        Case {
            name: "sigmoid",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.sigmoid().unwrap()),
        },
        Case {
            name: "exp",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.exp().unwrap()),
        },
        Case {
            name: "log",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.mul(a).unwrap().add_scalar(0.5).unwrap().log().unwrap()),
        },
        Case {
            name: "row_gather",
            tol: T,
            run: |s| unary(s, 3, 4, |a| a.row_gather(vec![2, 0, 2, 1]).unwrap()),
        },
        Case {
            name: "row_scatter_add",
            tol: T,
            run: |s| unary(s, 4, 3, |a| a.row_scatter_add(vec![1, 1, 0, 2], 3).unwrap()),
        },
        Case {
            name: "layer_norm_rows",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.layer_norm_rows().unwrap()),
        },
        Case {
            name: "log_softmax_rows",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.log_softmax_rows().unwrap()),
        },
        Case {
            name: "sum",
            tol: T,
            run: |s| unary(s, 4, 5, |a| a.mul(a).unwrap().sum().unwrap()),
        },
        Case {
            name: "gather_entries",
            tol: T,
            run: |s| {
                unary(s, 4, 5, |a| {
                    a.mul(a)
                        .unwrap()
                        .gather_entries(vec![(0, 1), (3, 4), (0, 1), (2, 0)])
                        .unwrap()
                })
            },
        },
        Case {
            name: "pair_dist_sums",
            tol: T,
            run: |s| {
                unary(s, 6, 3, |a| {
                    a.pair_dist_sums(vec![vec![(0, 1), (1, 2)], vec![(3, 4)], vec![(5, 0), (2, 4), (1, 3)]])
                        .unwrap()
                })
            },
        },
        Case {
            name: "neg_pairwise_dist",
            tol: T,
            run: neg_pairwise_dist_case,
        },
        Case {
            name: "layer_norm_rows_masked",
            tol: T,
            run: masked_layer_norm_case,
        },
        Case {
            name: "spmm",
            tol: T,
            run: spmm_case,
        },
        Case {
            name: "entmax (fixed alpha)",
            tol: T,
            run: |s| entmax_case(s, false),
        },
        Case {
            name: "entmax (d_alpha)",
            tol: T,
            run: |s| entmax_case(s, true),
        },
        Case {
            name: "node_mp",
            tol: T,
            run: node_mp_case,
        },
        Case {
            name: "uplift",
            tol: T,
            run: uplift_case,
        },
        Case {
            name: "edge_mp",
            tol: T,
            run: edge_mp_case,
        },
        Case {
            name: "downlift",
            tol: T,
            run: downlift_case,
        },
        Case {
            name: "graph_loss (3 nodes)",
            tol: T,
            run: |s| graph_loss_case(s, 3),
        },
        Case {
            name: "graph_loss (6 nodes)",
            tol: T,
            run: |s| graph_loss_case(s, 6),
        },
        Case {
            name: "polygon_loss (K4)",
            tol: T,
            run: polygon_loss_case,
        },
        Case {
            name: "full model",
            tol: 1e-3,
            run: full_model_case,
        },
    ]
}

fn neg_pairwise_dist_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, 5, 3);
    let mut w = uniform(&mut rng, 5, 5);
    // The diagonal holds a constant sentinel.
    for i in 0..5 {
        w.set(i, i, 0.0);
    }
    check_gradients(&[x], opts(seed), |v| {
        (readout(&v[0].neg_pairwise_dist().unwrap(), &w), ())
    })
}

fn masked_layer_norm_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = uniform(&mut rng, 4, 5);
    let mut w = uniform(&mut rng, 4, 5);
    let keep = masked_row_keep(&mut rng, 4, 5);
    // Masked entries hold a constant sentinel.
    for (k, &kept) in keep.iter().enumerate() {
        if !kept {
            w.data_mut()[k] = 0.0;
        }
    }
    check_gradients(&[x], opts(seed), |v| {
        (readout(&v[0].layer_norm_rows_masked(Rc::clone(&keep)).unwrap(), &w), ())
    })
}

fn spmm_case(seed: u64) -> GradCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let s = sparse(&mut rng, 4, 5);
    let x = uniform(&mut rng, 5, 3);
    let w = uniform(&mut rng, 4, 3);
    check_gradients(&[x], opts(seed), |v| {
        (readout(&v[0].spmm(Rc::clone(&s)).unwrap(), &w), ())
    })
}
