//! Training loop, sampling losses and evaluation metrics.
//!
//! The objective is `λ_task·CE + λ_graph·L_graph + λ_polygon·L_polygon`.
//! Both sampling losses are weighted by a per-node reward
//! `δ_i = ema_i − a_i`, where `a_i` is 1 for a correct prediction. The
//! reward is a plain number, so those losses only reach the inference
//! branches; the cross-entropy never does, because the inference branches
//! see detached inputs and their samples enter the main branch only as
//! discrete structure.

use std::collections::BTreeMap;
use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::complex::{degree_histogram, homophily, Skeleton};
use crate::data::{split_seed, Dataset, Split};
use crate::error::{Error, Result};
use crate::network::{DcmModel, ForwardOutput, Mode, ModelConfig, Prediction};
use crate::nn::Adam;
use crate::polygon::SampledPolygons;
use crate::tensor::{Tape, Tensor, Var};

/// Per-node exponential moving average of accuracy.
#[derive(Clone, Debug, PartialEq)]
pub struct RewardState {
    pub ema: Vec<f64>,
    pub mu: f64,
}

impl RewardState {
    pub const DEFAULT_MU: f64 = 0.9;

    /// `len` tracked nodes, every estimate starting at chance level.
    pub fn new(len: usize, n_classes: usize, mu: f64) -> Self {
        Self {
            ema: vec![1.0 / n_classes.max(1) as f64; len],
            mu,
        }
    }

    /// Returns `ema − a` and then folds `a` into the average.
    pub fn reward(&mut self, y_true: &[usize], y_pred: &[usize]) -> Result<Vec<f64>> {
        for (what, got) in [("reward labels", y_true.len()), ("reward predictions", y_pred.len())] {
            if got != self.ema.len() {
                return Err(Error::Mismatch {
                    what,
                    expected: self.ema.len(),
                    got,
                });
            }
        }
        let mu = self.mu;
        Ok(self
            .ema
            .iter_mut()
            .zip(y_true.iter().zip(y_pred))
            .map(|(e, (t, p))| {
                let a = if t == p { 1.0 } else { 0.0 };
                let delta = *e - a;
                *e = mu * *e + (1.0 - mu) * a;
                delta
            })
            .collect())
    }
}

/// Edge sampling loss over the undirected skeleton:
/// `Σ_{u,v} (δ_u + δ_v)(p_u(v) + p_v(u))`.
pub fn graph_loss<'t>(delta: &[f64], edge_probs: &Var<'t>, skeleton: &Skeleton) -> Result<Var<'t>> {
    if delta.len() != skeleton.n_vertices() {
        return Err(Error::Mismatch {
            what: "reward length",
            expected: skeleton.n_vertices(),
            got: delta.len(),
        });
    }
    let tape = edge_probs.tape();
    if skeleton.n_edges() == 0 {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    }
    let mut entries = Vec::with_capacity(2 * skeleton.n_edges());
    let mut coef = Vec::with_capacity(2 * skeleton.n_edges());
    for &(u, v) in skeleton.edges() {
        let w = delta[u] + delta[v];
        entries.extend([(u, v), (v, u)]);
        coef.extend([w, w]);
    }
    let c = tape.constant(Tensor::new(coef.len(), 1, coef)?);
    Ok(edge_probs.gather_entries(entries)?.mul(&c)?.sum()?)
}

/// Polygon sampling loss `Σ_{c selected} p(c) Σ_{i ∈ c} δ_i`.
///
/// Without a probability variable (no candidates) the loss is zero.
pub fn polygon_loss<'t>(
    tape: &'t Tape,
    delta: &[f64],
    polygon_probs: Option<&Var<'t>>,
    polygons: &SampledPolygons,
) -> Result<Var<'t>> {
    let Some(probs) = polygon_probs.filter(|_| !polygons.selected.is_empty()) else {
        return Ok(tape.constant(Tensor::scalar(0.0)));
    };
    let mut entries = Vec::with_capacity(polygons.selected.len());
    let mut coef = Vec::with_capacity(polygons.selected.len());
    for &c in &polygons.selected {
        let mut w = 0.0;
        for &i in &polygons.candidates[c] {
            w += *delta.get(i).ok_or(Error::Mismatch {
                what: "reward length",
                expected: i + 1,
                got: delta.len(),
            })?;
        }
        entries.push((0, c));
        coef.push(w);
    }
    let c = tape.constant(Tensor::new(coef.len(), 1, coef)?);
    Ok(probs.gather_entries(entries)?.mul(&c)?.sum()?)
}

/// Mean negative log-likelihood of `labels` over the nodes in `mask`.
pub fn cross_entropy<'t>(logits: &Var<'t>, labels: &[usize], mask: &[usize]) -> Result<Var<'t>> {
    if mask.is_empty() {
        return Err(Error::EmptyTrainMask);
    }
    let entries = mask.iter().map(|&i| (i, labels[i])).collect();
    Ok(logits
        .log_softmax_rows()?
        .gather_entries(entries)?
        .sum()?
        .scale(-1.0 / mask.len() as f64)?)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LossWeights {
    pub task: f64,
    pub graph: f64,
    pub polygon: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            task: 1.0,
            graph: 1.0,
            polygon: 1.0,
        }
    }
}

/// Weighted objective plus the unweighted value of each term.
pub struct Objective<'t> {
    pub total: Var<'t>,
    pub task: f64,
    pub graph: f64,
    pub polygon: f64,
}

/// Builds the weighted objective from a forward pass. Terms with a zero
/// weight are left out of `total` entirely.
pub fn objective<'t>(
    out: &ForwardOutput<'t>,
    labels: &[usize],
    train: &[usize],
    delta: &[f64],
    weights: &LossWeights,
) -> Result<Objective<'t>> {
    let tape = out.logits.tape();
    let task = cross_entropy(&out.logits, labels, train)?;
    let mut graph = tape.constant(Tensor::scalar(0.0));
    let mut polygon = tape.constant(Tensor::scalar(0.0));
    for layer in &out.layers {
        graph = graph.add(&graph_loss(delta, &layer.edge_probs, &layer.skeleton.skeleton)?)?;
        polygon = polygon.add(&polygon_loss(
            tape,
            delta,
            layer.polygon_probs.as_ref(),
            &layer.polygons,
        )?)?;
    }
    let mut total: Option<Var<'t>> = None;
    for (w, term) in [
        (weights.task, &task),
        (weights.graph, &graph),
        (weights.polygon, &polygon),
    ] {
        if w != 0.0 {
            let t = term.scale(w)?;
            total = Some(match total {
                Some(acc) => acc.add(&t)?,
                None => t,
            });
        }
    }
    let value = |v: &Var<'t>| v.value().data()[0];
    Ok(Objective {
        total: total.ok_or_else(|| Error::Config("all loss weights are zero".into()))?,
        task: value(&task),
        graph: value(&graph),
        polygon: value(&polygon),
    })
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GraphMode {
    /// Condition the inference branch on the dataset's input graph.
    WithGraph,
    #[default]
    WithoutGraph,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    #[default]
    Full,
    /// Keep every candidate polygon.
    AllPolygons,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub splits: usize,
    pub seed: u64,
    pub lambda_task: f64,
    pub lambda_graph: f64,
    pub lambda_polygon: f64,
    pub mode: GraphMode,
    pub variant: Variant,
    pub mu: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            epochs: 200,
            splits: 10,
            seed: 0,
            lambda_task: 1.0,
            lambda_graph: 1.0,
            lambda_polygon: 1.0,
            mode: GraphMode::default(),
            variant: Variant::default(),
            mu: RewardState::DEFAULT_MU,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("lr must be positive");
        }
        if self.epochs == 0 || self.splits == 0 {
            return bad("epochs and splits must be positive");
        }
        if !(0.0..1.0).contains(&self.mu) {
            return bad("mu must lie in [0, 1)");
        }
        let w = self.weights();
        if [w.task, w.graph, w.polygon]
            .iter()
            .any(|v| !(v.is_finite() && *v >= 0.0))
        {
            return bad("loss weights must be finite and non-negative");
        }
        if w.task == 0.0 && w.graph == 0.0 && w.polygon == 0.0 {
            return bad("all loss weights are zero");
        }
        Ok(())
    }

    pub fn weights(&self) -> LossWeights {
        LossWeights {
            task: self.lambda_task,
            graph: self.lambda_graph,
            polygon: self.lambda_polygon,
        }
    }

    /// The model configuration with graph conditioning and the polygon
    /// variant taken from this run's mode and variant.
    pub fn model_config(&self, base: &ModelConfig) -> ModelConfig {
        ModelConfig {
            graph_conditioned: self.mode == GraphMode::WithGraph,
            all_polygons: self.variant == Variant::AllPolygons,
            ..base.clone()
        }
    }
}

/// Fraction of `idx` whose prediction matches the label; 0 for an empty set.
pub fn accuracy(pred: &[usize], labels: &[usize], idx: &[usize]) -> f64 {
    if idx.is_empty() {
        return 0.0;
    }
    idx.iter().filter(|&&i| pred[i] == labels[i]).count() as f64 / idx.len() as f64
}

/// Coefficient of determination. A constant target scores 1 when matched
/// exactly and 0 otherwise.
pub fn r2_score(y_true: &[f64], y_pred: &[f64]) -> f64 {
    assert_eq!(y_true.len(), y_pred.len(), "r2_score inputs differ in length");
    let n = y_true.len() as f64;
    let mean = y_true.iter().sum::<f64>() / n;
    let ss_tot: f64 = y_true.iter().map(|y| (y - mean).powi(2)).sum();
    let ss_res: f64 = y_true.iter().zip(y_pred).map(|(y, p)| (y - p).powi(2)).sum();
    if ss_tot == 0.0 {
        return if ss_res == 0.0 { 1.0 } else { 0.0 };
    }
    1.0 - ss_res / ss_tot
}

/// Eval-mode metrics of one model on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    /// `None` when the inferred skeleton has no edges.
    pub homophily: Option<f64>,
    pub pct_polygons: f64,
    pub n_edges: usize,
    pub n_polygons: usize,
    pub n_candidates: usize,
    pub degree_histogram: BTreeMap<usize, usize>,
}

impl EvalMetrics {
    pub fn from_prediction(pred: &Prediction, labels: &[usize], split: &Split) -> Result<Self> {
        let classes = pred.classes();
        let skel = &pred.skeleton.skeleton;
        Ok(Self {
            train_acc: accuracy(&classes, labels, &split.train),
            val_acc: accuracy(&classes, labels, &split.val),
            test_acc: accuracy(&classes, labels, &split.test),
            homophily: match homophily(skel, labels) {
                Ok(h) => Some(h),
                Err(crate::complex::ComplexError::NoEdges) => None,
                Err(e) => return Err(e.into()),
            },
            pct_polygons: pred.polygons.pct_selected(),
            n_edges: skel.n_edges(),
            n_polygons: pred.polygons.selected.len(),
            n_candidates: pred.polygons.candidates.len(),
            degree_histogram: degree_histogram(skel),
        })
    }
}

fn input_graph(model: &DcmModel, dataset: &Dataset) -> Result<Option<Skeleton>> {
    if !model.config.graph_conditioned {
        return Ok(None);
    }
    dataset.input_graph().map(Some).ok_or(Error::MissingInputGraph)
}

fn check_split(dataset: &Dataset, split: &Split) -> Result<()> {
    split
        .validate(dataset.n())
        .map_err(|m| Error::Config(format!("split: {m}")))
}

/// Eval-mode forward and metrics on one split.
pub fn evaluate(model: &DcmModel, dataset: &Dataset, split: &Split) -> Result<(EvalMetrics, Prediction)> {
    check_split(dataset, split)?;
    let g_in = input_graph(model, dataset)?;
    let pred = model.predict(&dataset.features, g_in.as_ref())?;
    Ok((EvalMetrics::from_prediction(&pred, &dataset.labels, split)?, pred))
}

/// One row of the training history.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: usize,
    pub loss_task: f64,
    pub loss_graph: f64,
    pub loss_polygon: f64,
    pub alpha_edge: f64,
    pub alpha_polygon: f64,
    #[serde(flatten)]
    pub metrics: EvalMetrics,
}

pub const HISTORY_HEADER: [&str; 17] = [
    "epoch",
    "split",
    "loss_task",
    "loss_graph",
    "loss_polygon",
    "train_acc",
    "val_acc",
    "test_acc",
    "homophily",
    "pct_polygons",
    "n_edges",
    "n_polygons",
    "n_candidates",
    "alpha_edge",
    "alpha_polygon",
    "degree_histogram",
    "mean_degree",
];

impl EpochRecord {
    fn csv_fields(&self) -> Vec<String> {
        let m = &self.metrics;
        let hist = m
            .degree_histogram
            .iter()
            .map(|(d, c)| format!("{d}:{c}"))
            .collect::<Vec<_>>()
            .join(" ");
        let n: usize = m.degree_histogram.values().sum();
        let mean_degree = if n == 0 { 0.0 } else { 2.0 * m.n_edges as f64 / n as f64 };
        vec![
            self.epoch.to_string(),
            self.split.to_string(),
            self.loss_task.to_string(),
            self.loss_graph.to_string(),
            self.loss_polygon.to_string(),
            m.train_acc.to_string(),
            m.val_acc.to_string(),
            m.test_acc.to_string(),
            m.homophily.map(|h| h.to_string()).unwrap_or_default(),
            m.pct_polygons.to_string(),
            m.n_edges.to_string(),
            m.n_polygons.to_string(),
            m.n_candidates.to_string(),
            self.alpha_edge.to_string(),
            self.alpha_polygon.to_string(),
            hist,
            mean_degree.to_string(),
        ]
    }
}

/// Writes the history as CSV with a header row.
pub fn write_history<W: Write>(records: &[EpochRecord], out: W) -> std::io::Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(HISTORY_HEADER)?;
    for r in records {
        w.write_record(r.csv_fields())?;
    }
    w.flush()
}

pub struct TrainOutcome {
    /// Snapshot with the highest validation accuracy.
    pub best: DcmModel,
    pub best_epoch: usize,
    /// Model after the last epoch.
    pub last: DcmModel,
    pub history: Vec<EpochRecord>,
}

impl TrainOutcome {
    pub fn best_record(&self) -> &EpochRecord {
        &self.history[self.best_epoch]
    }
}

/// Trains on one split without observing epochs.
pub fn train(
    dataset: &Dataset,
    split: &Split,
    split_id: usize,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
) -> Result<TrainOutcome> {
    train_observed(dataset, split, split_id, cfg, model_cfg, |_, _, _| {})
}

/// Trains for `cfg.epochs` epochs and keeps the snapshot with the best
/// validation accuracy (earliest on ties). `observe` sees every epoch's
/// record, the model after the update and its eval-mode prediction.
///
/// Parameters are initialized from `cfg.seed`; dropout draws from a
/// generator derived from it.
pub fn train_observed(
    dataset: &Dataset,
    split: &Split,
    split_id: usize,
    cfg: &TrainConfig,
    model_cfg: &ModelConfig,
    mut observe: impl FnMut(&EpochRecord, &DcmModel, &Prediction),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    dataset.validate().map_err(Error::Config)?;
    check_split(dataset, split)?;
    if split.train.is_empty() {
        return Err(Error::EmptyTrainMask);
    }
    let mut model = DcmModel::new(cfg.model_config(model_cfg), dataset.f_in(), dataset.n_classes, cfg.seed)?;
    let g_in = input_graph(&model, dataset)?;
    let mut adam = Adam::new(&model.params, cfg.lr);
    let mut drop_rng = ChaCha8Rng::seed_from_u64(split_seed(cfg.seed, usize::MAX));
    let labels = &dataset.labels;
    let train_labels: Vec<usize> = split.train.iter().map(|&i| labels[i]).collect();
    let mut reward = RewardState::new(split.train.len(), dataset.n_classes, cfg.mu);

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, usize, DcmModel)> = None;
    for epoch in 0..cfg.epochs {
        let tape = Tape::new();
        let p = model.params.bind(&tape);
        let x = tape.constant(dataset.features.clone());
        let out = model.forward(&p, &x, g_in.as_ref(), Mode::Train(&mut drop_rng))?;
        let pred = out.logits.value().argmax_rows();
        let train_pred: Vec<usize> = split.train.iter().map(|&i| pred[i]).collect();
        let mut delta = vec![0.0; dataset.n()];
        for (&i, d) in split.train.iter().zip(reward.reward(&train_labels, &train_pred)?) {
            delta[i] = d;
        }
        let obj = objective(&out, labels, &split.train, &delta, &cfg.weights())?;
        if ![obj.task, obj.graph, obj.polygon].iter().all(|v| v.is_finite()) {
            return Err(Error::NonFiniteLoss {
                epoch,
                task: obj.task,
                graph: obj.graph,
                polygon: obj.polygon,
            });
        }
        let grads = tape.backward(obj.total)?;
        adam.step(&mut model.params, &p.collect(&grads));
        model.clamp_alphas();

        let (metrics, prediction) = evaluate(&model, dataset, split)?;
        let (alpha_edge, alpha_polygon) = *model.alphas().last().expect("at least one layer");
        let record = EpochRecord {
            epoch,
            split: split_id,
            loss_task: obj.task,
            loss_graph: obj.graph,
            loss_polygon: obj.polygon,
            alpha_edge,
            alpha_polygon,
            metrics,
        };
        if best.as_ref().is_none_or(|(v, _, _)| record.metrics.val_acc > *v) {
            best = Some((record.metrics.val_acc, epoch, model.clone()));
        }
        observe(&record, &model, &prediction);
        history.push(record);
    }
    let (_, best_epoch, best) = best.expect("at least one epoch");
    Ok(TrainOutcome {
        best,
        best_epoch,
        last: model,
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{stratified_splits, two_blobs};
    use crate::polygon::SampledPolygons;

    #[test]
    fn reward_examples() {
        let mut s = RewardState::new(1, 4, 0.9);
        assert_eq!(s.reward(&[1], &[0]).unwrap(), vec![0.25]);
        let mut s = RewardState::new(1, 4, 0.9);
        let d = s.reward(&[1], &[1]).unwrap();
        assert_eq!(d, vec![0.25 - 1.0]);
        assert!((s.ema[0] - 0.325).abs() < 1e-15);
        for _ in 0..500 {
            s.reward(&[1], &[1]).unwrap();
        }
        assert!((1.0 - s.ema[0]).abs() < 1e-12);
        assert!(s.reward(&[1], &[1]).unwrap()[0].abs() < 1e-12);
        assert!(s.reward(&[1, 2], &[1, 2]).is_err());
    }

    #[test]
    fn graph_loss_examples() {
        let tape = Tape::new();
        let probs = tape.leaf(Tensor::from_rows(&[[0.0, 0.7, 0.3], [0.5, 0.0, 0.5], [1.0, 0.0, 0.0]]).unwrap());
        let skel = Skeleton::new(3, [(0, 1), (0, 2), (1, 2)]).unwrap();
        let zero = graph_loss(&[0.0; 3], &probs, &skel).unwrap();
        assert_eq!(zero.value().data()[0], 0.0);
        let gl = graph_loss(&[0.5; 3], &probs, &skel).unwrap();
        // Every directed probability appears once with weight δ_u + δ_v = 1.
        assert!((gl.value().data()[0] - 3.0).abs() < 1e-12);
        let g = tape.backward(gl).unwrap();
        // Descent lowers incident probabilities.
        assert!(g.get(&probs).unwrap().get(0, 1) > 0.0);
        assert_eq!(g.get(&probs).unwrap().get(0, 0), 0.0);
    }

    #[test]
    fn polygon_loss_examples() {
        let tape = Tape::new();
        let probs = tape.leaf(Tensor::from_rows(&[[0.6, 0.4]]).unwrap());
        let none = SampledPolygons {
            candidates: vec![vec![0, 1, 2], vec![1, 2, 3]],
            probs: vec![0.6, 0.4],
            selected: vec![],
        };
        let l = polygon_loss(&tape, &[0.3; 4], Some(&probs), &none).unwrap();
        assert_eq!(l.value().data()[0], 0.0);
        let tri = SampledPolygons {
            selected: vec![0],
            ..none
        };
        let l = polygon_loss(&tape, &[0.3, 0.3, 0.3, 0.0], Some(&probs), &tri).unwrap();
        assert!((l.value().data()[0] - 3.0 * 0.3 * 0.6).abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_matches_manual() {
        let tape = Tape::new();
        let logits = tape.leaf(Tensor::from_rows(&[[1.0, 2.0], [0.5, -0.5], [3.0, 0.0]]).unwrap());
        let ce = cross_entropy(&logits, &[1, 0, 0], &[0, 1]).unwrap();
        let lse = |a: f64, b: f64| (a.exp() + b.exp()).ln();
        let want = ((lse(1.0, 2.0) - 2.0) + (lse(0.5, -0.5) - 0.5)) / 2.0;
        assert!((ce.value().data()[0] - want).abs() < 1e-12);
        assert_eq!(cross_entropy(&logits, &[0; 3], &[]).unwrap_err(), Error::EmptyTrainMask);
    }

    #[test]
    fn accuracy_and_r2() {
        assert_eq!(
            accuracy(&[0; 10], &[0, 1, 2, 3, 4, 0, 1, 2, 3, 4], &(0..10).collect::<Vec<_>>()),
            0.2
        );
        assert_eq!(r2_score(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]), 1.0);
        assert!((r2_score(&[1.0, 2.0, 3.0], &[2.0, 2.0, 2.0])).abs() < 1e-15);
        assert_eq!(r2_score(&[2.0, 2.0], &[2.0, 2.0]), 1.0);
    }

    fn small() -> (Dataset, Split) {
        let ds = two_blobs(24, 3, 4.0, 5);
        let split = stratified_splits(&ds.labels, 2, 1, 3, 0.6, 0.2).remove(0);
        (ds, split)
    }

    #[test]
    fn training_is_reproducible_and_tracks_best_val() {
        let (ds, split) = small();
        let cfg = TrainConfig {
            epochs: 6,
            seed: 11,
            ..TrainConfig::default()
        };
        let mc = ModelConfig::default();
        let a = train(&ds, &split, 0, &cfg, &mc).unwrap();
        let b = train(&ds, &split, 0, &cfg, &mc).unwrap();
        assert_eq!(a.history, b.history);
        assert_eq!(a.best, b.best);
        let best_val = a.best_record().metrics.val_acc;
        assert!(a.history.iter().all(|r| r.metrics.val_acc <= best_val));
        assert!(a.history[..a.best_epoch].iter().all(|r| r.metrics.val_acc < best_val));
        let (m, _) = evaluate(&a.best, &ds, &split).unwrap();
        assert_eq!(m, a.best_record().metrics);
        let mut csv = Vec::new();
        write_history(&a.history, &mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 7);
    }

    #[test]
    fn all_polygons_variant_keeps_every_candidate() {
        let (ds, split) = small();
        let cfg = TrainConfig {
            epochs: 3,
            variant: Variant::AllPolygons,
            ..TrainConfig::default()
        };
        let out = train(&ds, &split, 0, &cfg, &ModelConfig::default()).unwrap();
        for r in &out.history {
            if r.metrics.n_candidates > 0 {
                assert_eq!(r.metrics.pct_polygons, 100.0);
            }
        }
    }

    #[test]
    fn with_graph_needs_edges() {
        let (ds, split) = small();
        let cfg = TrainConfig {
            epochs: 1,
            mode: GraphMode::WithGraph,
            ..TrainConfig::default()
        };
        assert_eq!(
            train(&ds, &split, 0, &cfg, &ModelConfig::default()).err(),
            Some(Error::MissingInputGraph)
        );
        let empty = Split { train: vec![], ..split };
        assert_eq!(
            train(&ds, &empty, 0, &TrainConfig::default(), &ModelConfig::default()).err(),
            Some(Error::EmptyTrainMask)
        );
    }
}
