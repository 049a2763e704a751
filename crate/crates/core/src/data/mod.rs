//! Node-classification datasets on disk.
//!
//! A dataset directory holds `dataset.json`:
//!
//! ```json
//! { "name": "texas", "n": 183, "f_in": 1703, "n_classes": 5,
//!   "features": "features.csv", "labels": [0, 3, ...],
//!   "edges": "edges.csv", "splits": [{"train": [...], "val": [...], "test": [...]}] }
//! ```
//!
//! `features.csv` has one comma-separated row of `f_in` reals per node and
//! `edges.csv` one `u,v` pair per line. `edges` and `splits` may be `null`.

pub mod convert;
mod synthetic;

pub use synthetic::two_blobs;

use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::complex::Skeleton;
use crate::tensor::Tensor;

#[derive(Debug, Error)]
pub enum DataError {
    #[error("{file}: {source}")]
    Io {
        file: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{file}: schema error: {msg}")]
    Schema { file: PathBuf, msg: String },
    #[error("{file}:{line}: {msg}")]
    Record { file: PathBuf, line: usize, msg: String },
    #[error("{0}")]
    Invalid(String),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Train/validation/test node indices.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Checks ranges and pairwise disjointness.
    pub fn validate(&self, n: usize) -> std::result::Result<(), String> {
        let mut seen = vec![false; n];
        for (part, idx) in [("train", &self.train), ("val", &self.val), ("test", &self.test)] {
            for &i in idx {
                if i >= n {
                    return Err(format!("{part} index {i} out of range for {n} nodes"));
                }
                if seen[i] {
                    return Err(format!("node {i} appears twice in a split"));
                }
                seen[i] = true;
            }
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    pub name: String,
    pub features: Tensor,
    pub labels: Vec<usize>,
    pub n_classes: usize,
    pub edges: Option<Vec<(usize, usize)>>,
    pub splits: Option<Vec<Split>>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    name: String,
    n: usize,
    f_in: usize,
    n_classes: usize,
    features: String,
    labels: Vec<usize>,
    edges: Option<String>,
    splits: Option<Vec<Split>>,
}

impl Dataset {
    pub fn n(&self) -> usize {
        self.labels.len()
    }

    pub fn f_in(&self) -> usize {
        self.features.cols()
    }

    pub fn validate(&self) -> std::result::Result<(), String> {
        if self.features.rows() != self.labels.len() {
            return Err(format!(
                "{} feature rows but {} labels",
                self.features.rows(),
                self.labels.len()
            ));
        }
        if let Some((i, &l)) = self.labels.iter().enumerate().find(|(_, &l)| l >= self.n_classes) {
            return Err(format!("label {l} of node {i} outside [0, {})", self.n_classes));
        }
        if let Some(edges) = &self.edges {
            for (k, &(u, v)) in edges.iter().enumerate() {
                if u >= self.n() || v >= self.n() {
                    return Err(format!("edge {k} ({u}, {v}) out of range for {} nodes", self.n()));
                }
            }
        }
        if let Some(splits) = &self.splits {
            for (k, s) in splits.iter().enumerate() {
                s.validate(self.n()).map_err(|e| format!("split {k}: {e}"))?;
            }
        }
        Ok(())
    }

    /// The input graph as a skeleton; self-loops and duplicates are dropped.
    pub fn input_graph(&self) -> Option<Skeleton> {
        self.edges.as_ref().map(|edges| {
            Skeleton::new(self.n(), edges.iter().copied().filter(|(u, v)| u != v)).expect("validated edge indices")
        })
    }

    /// SHA-256 over a canonical byte encoding of every field.
    pub fn content_hash(&self) -> String {
        let mut h = Sha256::new();
        h.update(self.name.as_bytes());
        h.update([0]);
        for d in [self.n(), self.f_in(), self.n_classes] {
            h.update((d as u64).to_le_bytes());
        }
        for v in self.features.data() {
            h.update(v.to_le_bytes());
        }
        for &l in &self.labels {
            h.update((l as u64).to_le_bytes());
        }
        match &self.edges {
            Some(e) => {
                h.update([1]);
                for &(u, v) in e {
                    h.update((u as u64).to_le_bytes());
                    h.update((v as u64).to_le_bytes());
                }
            }
            None => h.update([0]),
        }
        match &self.splits {
            Some(s) => h.update(serde_json::to_vec(s).expect("splits serialize")),
            None => h.update([0]),
        }
        hex::encode(h.finalize())
    }
}

fn io_err(file: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| DataError::Io {
        file: file.to_path_buf(),
        source,
    }
}

fn csv_reader(path: &Path) -> Result<csv::Reader<std::fs::File>> {
    let f = std::fs::File::open(path).map_err(io_err(path))?;
    Ok(csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_reader(f))
}

fn record_line(r: &csv::StringRecord, fallback: usize) -> usize {
    r.position().map_or(fallback, |p| p.line() as usize)
}

/// Reads and validates a dataset directory.
pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let header_path = dir.join("dataset.json");
    let text = std::fs::read_to_string(&header_path).map_err(io_err(&header_path))?;
    let header: Header = serde_json::from_str(&text).map_err(|e| DataError::Record {
        file: header_path.clone(),
        line: e.line(),
        msg: e.to_string(),
    })?;
    let schema = |msg: String| DataError::Schema {
        file: header_path.clone(),
        msg,
    };
    if header.labels.len() != header.n {
        return Err(schema(format!("{} labels for n = {}", header.labels.len(), header.n)));
    }
    if let Some((i, &l)) = header.labels.iter().enumerate().find(|(_, &l)| l >= header.n_classes) {
        return Err(schema(format!(
            "label {l} of node {i} outside [0, {})",
            header.n_classes
        )));
    }

    let fpath = dir.join(&header.features);
    let mut data = Vec::with_capacity(header.n * header.f_in);
    let mut rows = 0;
    for (k, rec) in csv_reader(&fpath)?.records().enumerate() {
        let rec = rec.map_err(|e| DataError::Record {
            file: fpath.clone(),
            line: e.position().map_or(k + 1, |p| p.line() as usize),
            msg: e.to_string(),
        })?;
        let line = record_line(&rec, k + 1);
        if rec.len() != header.f_in {
            return Err(DataError::Record {
                file: fpath.clone(),
                line,
                msg: format!("expected {} features, found {}", header.f_in, rec.len()),
            });
        }
        for field in rec.iter() {
            let v: f64 = field.parse().map_err(|_| DataError::Record {
                file: fpath.clone(),
                line,
                msg: format!("not a number: {field:?}"),
            })?;
            if !v.is_finite() {
                return Err(DataError::Record {
                    file: fpath.clone(),
                    line,
                    msg: "non-finite feature".into(),
                });
            }
            data.push(v);
        }
        rows += 1;
    }
    if rows != header.n {
        return Err(DataError::Schema {
            file: fpath,
            msg: format!("{rows} feature rows for n = {}", header.n),
        });
    }
    let features = Tensor::new(header.n, header.f_in, data).map_err(|e| schema(e.to_string()))?;

    let edges = match &header.edges {
        None => None,
        Some(name) => {
            let epath = dir.join(name);
            let mut edges = Vec::new();
            for (k, rec) in csv_reader(&epath)?.records().enumerate() {
                let rec = rec.map_err(|e| DataError::Record {
                    file: epath.clone(),
                    line: e.position().map_or(k + 1, |p| p.line() as usize),
                    msg: e.to_string(),
                })?;
                let line = record_line(&rec, k + 1);
                let bad = |msg: String| DataError::Record {
                    file: epath.clone(),
                    line,
                    msg,
                };
                if rec.len() != 2 {
                    return Err(bad(format!("expected 2 fields, found {}", rec.len())));
                }
                let mut pair = [0usize; 2];
                for (slot, field) in pair.iter_mut().zip(rec.iter()) {
                    *slot = field.parse().map_err(|_| bad(format!("not a node index: {field:?}")))?;
                }
                if pair.iter().any(|&v| v >= header.n) {
                    return Err(bad(format!(
                        "edge ({}, {}) out of range for {} nodes",
                        pair[0], pair[1], header.n
                    )));
                }
                edges.push((pair[0], pair[1]));
            }
            Some(edges)
        }
    };

    let ds = Dataset {
        name: header.name,
        features,
        labels: header.labels,
        n_classes: header.n_classes,
        edges,
        splits: header.splits,
    };
    ds.validate().map_err(schema)?;
    Ok(ds)
}

/// Writes `dataset.json`, `features.csv` and (when present) `edges.csv`.
pub fn save_dataset(ds: &Dataset, dir: &Path) -> Result<()> {
    ds.validate().map_err(DataError::Invalid)?;
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    let fpath = dir.join("features.csv");
    let mut w = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(&fpath)
        .map_err(|e| DataError::Invalid(e.to_string()))?;
    for r in 0..ds.n() {
        w.write_record(ds.features.row(r).iter().map(|v| v.to_string()))
            .map_err(|e| DataError::Invalid(e.to_string()))?;
    }
    w.flush().map_err(io_err(&fpath))?;
    if let Some(edges) = &ds.edges {
        let epath = dir.join("edges.csv");
        let mut w = csv::WriterBuilder::new()
            .has_headers(false)
            .from_path(&epath)
            .map_err(|e| DataError::Invalid(e.to_string()))?;
        for &(u, v) in edges {
            w.write_record([u.to_string(), v.to_string()])
                .map_err(|e| DataError::Invalid(e.to_string()))?;
        }
        w.flush().map_err(io_err(&epath))?;
    }
    let header = Header {
        name: ds.name.clone(),
        n: ds.n(),
        f_in: ds.f_in(),
        n_classes: ds.n_classes,
        features: "features.csv".into(),
        labels: ds.labels.clone(),
        edges: ds.edges.as_ref().map(|_| "edges.csv".into()),
        splits: ds.splits.clone(),
    };
    let hpath = dir.join("dataset.json");
    std::fs::write(&hpath, serde_json::to_string(&header).expect("header serializes")).map_err(io_err(&hpath))
}

/// Stratified random splits: within every class, `train_frac` of the nodes
/// (rounded) go to train, `val_frac` to validation and the rest to test.
pub fn stratified_splits(
    labels: &[usize],
    n_classes: usize,
    count: usize,
    seed: u64,
    train_frac: f64,
    val_frac: f64,
) -> Vec<Split> {
    (0..count)
        .map(|k| {
            let mut rng = ChaCha8Rng::seed_from_u64(split_seed(seed, k));
            let mut split = Split {
                train: Vec::new(),
                val: Vec::new(),
                test: Vec::new(),
            };
            for c in 0..n_classes {
                let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == c).collect();
                idx.shuffle(&mut rng);
                let n_tr = (train_frac * idx.len() as f64).round() as usize;
                let n_va = ((val_frac * idx.len() as f64).round() as usize).min(idx.len() - n_tr);
                split.train.extend(&idx[..n_tr]);
                split.val.extend(&idx[n_tr..n_tr + n_va]);
                split.test.extend(&idx[n_tr + n_va..]);
            }
            split.train.sort_unstable();
            split.val.sort_unstable();
            split.test.sort_unstable();
            split
        })
        .collect()
}

/// Per-split seed derived from a master seed (SplitMix64 step).
pub fn split_seed(master: u64, k: usize) -> u64 {
    let mut z = master.wrapping_add((k as u64).wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}
