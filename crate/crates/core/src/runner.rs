//! Runs an experiment over every split and writes its artifacts.
//!
//! Output layout under `run.out_dir`:
//!
//! ```text
//! config.toml              resolved configuration
//! summary.json             per-split results, mean ± σ, dataset hash
//! metrics.csv              all splits' histories
//! split_00/metrics.csv     one split's history
//! split_00/complex/        epoch_NNNN.{json,dot} at the export cadence
//! split_00/best/           best-validation parameters and complex
//! split_00/params/         epoch_NNNN/ when parameter snapshots are enabled
//! ```

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::complex::export::{ComplexSnapshot, TopologyPoint};
use crate::config::ExperimentConfig;
use crate::data::{load_dataset, split_seed, stratified_splits, DataError, Dataset, Split};
use crate::error::Error;
use crate::training::{evaluate, train_observed, write_history, EpochRecord, GraphMode, TrainConfig};

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("{0}")]
    Config(Error),
    #[error("split {split}: {source}")]
    Train { split: usize, source: Error },
    #[error("{}: {source}", path.display())]
    Io { path: PathBuf, source: std::io::Error },
}

impl RunError {
    /// 1 for invalid input or configuration, 2 for an aborted training run.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Train { .. } => 2,
            _ => 1,
        }
    }
}

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> RunError + '_ {
    move |source| RunError::Io {
        path: path.to_path_buf(),
        source,
    }
}

/// Result of one split at its best-validation epoch.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitReport {
    pub split: usize,
    pub seed: u64,
    pub best_epoch: usize,
    pub train_acc: f64,
    pub val_acc: f64,
    pub test_acc: f64,
    pub homophily: Option<f64>,
    pub pct_polygons: f64,
    pub n_edges: usize,
    /// Homophily of the skeleton after the last epoch.
    pub final_homophily: Option<f64>,
}

/// Mean and population standard deviation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    pub std: f64,
    pub n: usize,
}

impl Stat {
    pub fn of(values: &[f64]) -> Option<Stat> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Some(Stat {
            mean,
            std: var.sqrt(),
            n: values.len(),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub dataset: String,
    /// SHA-256 of the dataset contents.
    pub dataset_hash: String,
    pub n_nodes: usize,
    pub n_classes: usize,
    pub config: ExperimentConfig,
    pub splits: Vec<SplitReport>,
    pub aggregate: BTreeMap<String, Stat>,
}

type Metric = (&'static str, fn(&SplitReport) -> Option<f64>);

impl RunSummary {
    fn aggregate(splits: &[SplitReport]) -> BTreeMap<String, Stat> {
        let metrics: [Metric; 7] = [
            ("train_acc", |s| Some(s.train_acc)),
            ("val_acc", |s| Some(s.val_acc)),
            ("test_acc", |s| Some(s.test_acc)),
            ("homophily", |s| s.homophily),
            ("final_homophily", |s| s.final_homophily),
            ("pct_polygons", |s| Some(s.pct_polygons)),
            ("n_edges", |s| Some(s.n_edges as f64)),
        ];
        metrics
            .iter()
            .filter_map(|(name, f)| {
                let vals: Vec<f64> = splits.iter().filter_map(f).collect();
                Stat::of(&vals).map(|s| (name.to_string(), s))
            })
            .collect()
    }
}

/// The splits a run trains on: the dataset's own when configured and
/// available, otherwise stratified splits drawn from the seed.
pub fn resolve_splits(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<Vec<Split>, RunError> {
    let count = cfg.train.splits;
    match &dataset.splits {
        Some(own) if cfg.data.use_dataset_splits => {
            if own.len() < count {
                return Err(RunError::Config(Error::Config(format!(
                    "dataset provides {} splits, {count} requested",
                    own.len()
                ))));
            }
            Ok(own[..count].to_vec())
        }
        _ => Ok(stratified_splits(
            &dataset.labels,
            dataset.n_classes,
            count,
            cfg.train.seed,
            cfg.data.train_frac,
            cfg.data.val_frac,
        )),
    }
}

/// Loads `cfg.data.path` and runs.
pub fn run(cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    let dataset = load_dataset(&cfg.data.path)?;
    run_on(&dataset, cfg)
}

pub fn run_on(dataset: &Dataset, cfg: &ExperimentConfig) -> Result<RunSummary, RunError> {
    cfg.validate().map_err(RunError::Config)?;
    if cfg.train.mode == GraphMode::WithGraph && dataset.edges.is_none() {
        return Err(RunError::Config(Error::MissingInputGraph));
    }
    let splits = resolve_splits(dataset, cfg)?;
    let out = &cfg.run.out_dir;
    std::fs::create_dir_all(out).map_err(io(out))?;
    let cfg_path = out.join("config.toml");
    std::fs::write(&cfg_path, cfg.to_toml()).map_err(io(&cfg_path))?;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.run.workers)
        .build()
        .map_err(|e| RunError::Config(Error::Config(format!("worker pool: {e}"))))?;
    let results: Vec<Result<(SplitReport, Vec<EpochRecord>), RunError>> = pool.install(|| {
        splits
            .par_iter()
            .enumerate()
            .map(|(k, split)| run_split(dataset, cfg, k, split))
            .collect()
    });
    let mut reports = Vec::with_capacity(results.len());
    let mut all = Vec::new();
    for r in results {
        let (report, history) = r?;
        reports.push(report);
        all.extend(history);
    }
    let csv_path = out.join("metrics.csv");
    write_history(&all, BufWriter::new(File::create(&csv_path).map_err(io(&csv_path))?)).map_err(io(&csv_path))?;

    let summary = RunSummary {
        dataset: dataset.name.clone(),
        dataset_hash: dataset.content_hash(),
        n_nodes: dataset.n(),
        n_classes: dataset.n_classes,
        config: cfg.clone(),
        aggregate: RunSummary::aggregate(&reports),
        splits: reports,
    };
    let sum_path = out.join("summary.json");
    std::fs::write(
        &sum_path,
        serde_json::to_string_pretty(&summary).expect("summary serializes"),
    )
    .map_err(io(&sum_path))?;
    Ok(summary)
}

fn run_split(
    dataset: &Dataset,
    cfg: &ExperimentConfig,
    k: usize,
    split: &Split,
) -> Result<(SplitReport, Vec<EpochRecord>), RunError> {
    let dir = cfg.run.out_dir.join(format!("split_{k:02}"));
    let complex_dir = dir.join("complex");
    std::fs::create_dir_all(&complex_dir).map_err(io(&complex_dir))?;
    let seed = split_seed(cfg.train.seed, k);
    let train_cfg = TrainConfig {
        seed,
        ..cfg.train.clone()
    };
    let every = cfg.run.export_every;
    let mut points = Vec::new();
    let mut export_err = None;
    let outcome = train_observed(dataset, split, k, &train_cfg, &cfg.model, |rec, model, pred| {
        points.push(TopologyPoint {
            epoch: rec.epoch,
            homophily: rec.metrics.homophily,
            pct_polygons: rec.metrics.pct_polygons,
        });
        if export_err.is_some() || (rec.epoch + 1) % every != 0 {
            return;
        }
        let stem = format!("epoch_{:04}", rec.epoch);
        let snap = ComplexSnapshot::new(&pred.complex)
            .with_labels(dataset.labels.clone())
            .with_history(points.clone());
        let mut res = snap.write(&complex_dir, &stem).map_err(io(&complex_dir));
        if res.is_ok() && cfg.run.snapshot_params {
            let p = dir.join("params").join(&stem);
            res = model.save(&p).map_err(io(&p));
        }
        if let Err(e) = res {
            export_err = Some(e);
        }
    })
    .map_err(|source| RunError::Train { split: k, source })?;
    if let Some(e) = export_err {
        return Err(e);
    }

    let best_dir = dir.join("best");
    outcome.best.save(&best_dir).map_err(io(&best_dir))?;
    let (_, pred) = evaluate(&outcome.best, dataset, split).map_err(|source| RunError::Train { split: k, source })?;
    ComplexSnapshot::new(&pred.complex)
        .with_labels(dataset.labels.clone())
        .with_history(points)
        .write(&best_dir, "complex")
        .map_err(io(&best_dir))?;
    let csv_path = dir.join("metrics.csv");
    write_history(
        &outcome.history,
        BufWriter::new(File::create(&csv_path).map_err(io(&csv_path))?),
    )
    .map_err(io(&csv_path))?;

    let best = outcome.best_record();
    let last = outcome.history.last().expect("at least one epoch");
    let report = SplitReport {
        split: k,
        seed,
        best_epoch: outcome.best_epoch,
        train_acc: best.metrics.train_acc,
        val_acc: best.metrics.val_acc,
        test_acc: best.metrics.test_acc,
        homophily: best.metrics.homophily,
        pct_polygons: best.metrics.pct_polygons,
        n_edges: best.metrics.n_edges,
        final_homophily: last.metrics.homophily,
    };
    Ok((report, outcome.history))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::two_blobs;

    fn config(out: &Path) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.train.epochs = 4;
        cfg.train.splits = 2;
        cfg.train.seed = 3;
        cfg.run.out_dir = out.to_path_buf();
        cfg.run.export_every = 2;
        cfg.run.snapshot_params = true;
        cfg
    }

    #[test]
    fn writes_self_describing_output() {
        let dir = tempfile::tempdir().unwrap();
        let ds = two_blobs(20, 3, 4.0, 1);
        let cfg = config(dir.path());
        let summary = run_on(&ds, &cfg).unwrap();
        assert_eq!(summary.splits.len(), 2);
        assert_eq!(summary.dataset_hash, ds.content_hash());
        assert_eq!(summary.aggregate["test_acc"].n, 2);
        for k in 0..2 {
            let s = dir.path().join(format!("split_{k:02}"));
            assert!(s.join("metrics.csv").exists());
            assert!(s.join("complex/epoch_0001.json").exists());
            assert!(s.join("complex/epoch_0003.dot").exists());
            assert!(!s.join("complex/epoch_0002.json").exists());
            assert!(s.join("params/epoch_0003/manifest.json").exists());
            assert!(s.join("best/params.bin").exists());
            assert!(s.join("best/complex.json").exists());
        }
        let back: RunSummary =
            serde_json::from_str(&std::fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
        assert_eq!(back, summary);
        let echoed = ExperimentConfig::from_toml(&std::fs::read_to_string(dir.path().join("config.toml")).unwrap());
        assert_eq!(echoed.unwrap(), cfg);
    }

    #[test]
    fn workers_do_not_change_results() {
        let ds = two_blobs(16, 2, 4.0, 2);
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let mut cfg = config(a.path());
        run_on(&ds, &cfg).unwrap();
        cfg.run.out_dir = b.path().to_path_buf();
        cfg.run.workers = 2;
        run_on(&ds, &cfg).unwrap();
        let read = |d: &Path| std::fs::read(d.join("metrics.csv")).unwrap();
        assert_eq!(read(a.path()), read(b.path()));
    }

    #[test]
    fn errors_map_to_exit_codes() {
        let dir = tempfile::tempdir().unwrap();
        let ds = two_blobs(16, 2, 4.0, 2);
        let mut cfg = config(dir.path());
        cfg.train.mode = GraphMode::WithGraph;
        assert_eq!(run_on(&ds, &cfg).unwrap_err().exit_code(), 1);
        let mut cfg = config(dir.path());
        cfg.data.path = dir.path().join("missing");
        assert_eq!(run(&cfg).unwrap_err().exit_code(), 1);
        let with_splits = Dataset {
            splits: Some(vec![Split {
                train: vec![0, 1],
                val: vec![2],
                test: vec![3],
            }]),
            ..ds
        };
        let cfg = config(dir.path());
        assert!(matches!(resolve_splits(&with_splits, &cfg), Err(RunError::Config(_))));
        let mut cfg = config(dir.path());
        cfg.train.splits = 1;
        assert_eq!(resolve_splits(&with_splits, &cfg).unwrap(), with_splits.splits.unwrap());
    }
}
