//! Converters from public raw formats into [`Dataset`].
//!
//! * WebKB / geometric-split layout: `out1_node_feature_label.txt` with a
//!   header and rows `id<TAB>f1,f2,...<TAB>label`, plus
//!   `out1_graph_edges.txt` with a header and rows `u<TAB>v`.
//! * LINQS layout (Cora, CiteSeer): `<name>.content` rows
//!   `id<TAB>w1<TAB>...<TAB>wF<TAB>class` and `<name>.cites` rows
//!   `cited<TAB>citing`. Class names are numbered in sorted order.
//!
//! Features are kept as given unless row normalization is requested.
//! Edges are made undirected and deduplicated; self-loops and references
//! to unknown nodes are dropped and counted.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use super::{DataError, Dataset, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct ConvertOptions {
    /// Divide each feature row by its sum (rows summing to zero are kept).
    pub row_normalize: bool,
}

/// What the converter discarded.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct ConvertReport {
    pub self_loops: usize,
    pub duplicate_edges: usize,
    pub unknown_nodes: usize,
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|source| DataError::Io {
        file: path.to_path_buf(),
        source,
    })
}

fn record(path: &Path, line: usize, msg: impl Into<String>) -> DataError {
    DataError::Record {
        file: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn parse_f64(path: &Path, line: usize, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .ok()
        .filter(|v| v.is_finite())
        .ok_or_else(|| record(path, line, format!("not a finite number: {s:?}")))
}

fn normalize_rows(data: &mut [f64], cols: usize) {
    for row in data.chunks_mut(cols.max(1)) {
        let s: f64 = row.iter().sum();
        if s != 0.0 {
            row.iter_mut().for_each(|v| *v /= s);
        }
    }
}

fn undirected(
    n: usize,
    pairs: impl IntoIterator<Item = (usize, usize)>,
    report: &mut ConvertReport,
) -> Vec<(usize, usize)> {
    let mut set = BTreeSet::new();
    for (u, v) in pairs {
        debug_assert!(u < n && v < n);
        if u == v {
            report.self_loops += 1;
        } else if !set.insert((u.min(v), u.max(v))) {
            report.duplicate_edges += 1;
        }
    }
    set.into_iter().collect()
}

/// Converts the WebKB node/edge files.
pub fn convert_webkb(
    name: &str,
    node_file: &Path,
    edge_file: &Path,
    opts: ConvertOptions,
) -> Result<(Dataset, ConvertReport)> {
    let text = read(node_file)?;
    let mut rows: BTreeMap<usize, (Vec<f64>, usize)> = BTreeMap::new();
    let mut f_in = None;
    for (k, line) in text.lines().enumerate().skip(1) {
        let ln = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() != 3 {
            return Err(record(
                node_file,
                ln,
                format!("expected 3 tab-separated fields, found {}", parts.len()),
            ));
        }
        let id: usize = parts[0]
            .trim()
            .parse()
            .map_err(|_| record(node_file, ln, "bad node id"))?;
        let feats = parts[1]
            .split(',')
            .map(|s| parse_f64(node_file, ln, s))
            .collect::<Result<Vec<_>>>()?;
        if *f_in.get_or_insert(feats.len()) != feats.len() {
            return Err(record(node_file, ln, "inconsistent feature count"));
        }
        let label: usize = parts[2]
            .trim()
            .parse()
            .map_err(|_| record(node_file, ln, "bad label"))?;
        if rows.insert(id, (feats, label)).is_some() {
            return Err(record(node_file, ln, format!("duplicate node id {id}")));
        }
    }
    let n = rows.len();
    if let Some((&last, _)) = rows.iter().next_back() {
        if last != n - 1 {
            return Err(DataError::Invalid(format!(
                "{}: node ids are not 0..{n}",
                node_file.display()
            )));
        }
    }
    let f_in = f_in.unwrap_or(0);
    let mut data = Vec::with_capacity(n * f_in);
    let mut labels = Vec::with_capacity(n);
    for (_, (f, l)) in rows {
        data.extend(f);
        labels.push(l);
    }
    if opts.row_normalize {
        normalize_rows(&mut data, f_in);
    }

    let mut report = ConvertReport::default();
    let etext = read(edge_file)?;
    let mut pairs = Vec::new();
    for (k, line) in etext.lines().enumerate().skip(1) {
        let ln = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(record(edge_file, ln, "expected 2 fields"));
        }
        let u: usize = parts[0].parse().map_err(|_| record(edge_file, ln, "bad node id"))?;
        let v: usize = parts[1].parse().map_err(|_| record(edge_file, ln, "bad node id"))?;
        if u >= n || v >= n {
            report.unknown_nodes += 1;
            continue;
        }
        pairs.push((u, v));
    }
    let edges = undirected(n, pairs, &mut report);
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let ds = Dataset {
        name: name.to_string(),
        features: Tensor::new(n, f_in, data).map_err(|e| DataError::Invalid(e.to_string()))?,
        labels,
        n_classes,
        edges: Some(edges),
        splits: None,
    };
    Ok((ds, report))
}

/// Converts LINQS `.content` / `.cites` files.
pub fn convert_linqs(
    name: &str,
    content_file: &Path,
    cites_file: &Path,
    opts: ConvertOptions,
) -> Result<(Dataset, ConvertReport)> {
    let text = read(content_file)?;
    let mut ids: HashMap<String, usize> = HashMap::new();
    let mut raw_labels = Vec::new();
    let mut data = Vec::new();
    let mut f_in = None;
    for (k, line) in text.lines().enumerate() {
        let ln = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split('\t').collect();
        if parts.len() < 3 {
            return Err(record(content_file, ln, "expected id, features and class"));
        }
        let feats = &parts[1..parts.len() - 1];
        if *f_in.get_or_insert(feats.len()) != feats.len() {
            return Err(record(content_file, ln, "inconsistent feature count"));
        }
        for s in feats {
            data.push(parse_f64(content_file, ln, s)?);
        }
        let id = parts[0].trim().to_string();
        if ids.insert(id.clone(), raw_labels.len()).is_some() {
            return Err(record(content_file, ln, format!("duplicate node id {id}")));
        }
        raw_labels.push(parts[parts.len() - 1].trim().to_string());
    }
    let n = raw_labels.len();
    let f_in = f_in.unwrap_or(0);
    if opts.row_normalize {
        normalize_rows(&mut data, f_in);
    }
    let classes: BTreeSet<&String> = raw_labels.iter().collect();
    let class_id: HashMap<&String, usize> = classes.iter().enumerate().map(|(i, c)| (*c, i)).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| class_id[l]).collect();

    let mut report = ConvertReport::default();
    let ctext = read(cites_file)?;
    let mut pairs = Vec::new();
    for (k, line) in ctext.lines().enumerate() {
        let ln = k + 1;
        if line.trim().is_empty() {
            continue;
        }
        let parts: Vec<&str> = line.split_whitespace().collect();
        if parts.len() != 2 {
            return Err(record(cites_file, ln, "expected 2 fields"));
        }
        match (ids.get(parts[0]), ids.get(parts[1])) {
            (Some(&u), Some(&v)) => pairs.push((u, v)),
            _ => report.unknown_nodes += 1,
        }
    }
    let edges = undirected(n, pairs, &mut report);
    let ds = Dataset {
        name: name.to_string(),
        features: Tensor::new(n, f_in, data).map_err(|e| DataError::Invalid(e.to_string()))?,
        labels,
        n_classes: classes.len(),
        edges: Some(edges),
        splits: None,
    };
    Ok((ds, report))
}
