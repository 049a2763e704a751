//! Plottable snapshots of an inferred complex (JSON and Graphviz DOT).

use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::CellComplex;

/// Per-epoch topology summary carried alongside a snapshot.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TopologyPoint {
    pub epoch: usize,
    /// Edge homophily of the inferred skeleton; absent when it has no edges.
    pub homophily: Option<f64>,
    /// Percentage of candidate cycles kept as polygons.
    pub pct_polygons: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ComplexSnapshot {
    pub vertices: usize,
    pub edges: Vec<[usize; 2]>,
    pub polygons: Vec<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub history: Vec<TopologyPoint>,
}

impl ComplexSnapshot {
    pub fn new(complex: &CellComplex) -> Self {
        Self {
            vertices: complex.skeleton().n_vertices(),
            edges: complex.skeleton().edges().iter().map(|&(u, v)| [u, v]).collect(),
            polygons: complex.polygons().to_vec(),
            labels: None,
            positions: None,
            history: Vec::new(),
        }
    }

    pub fn with_labels(mut self, labels: Vec<usize>) -> Self {
        self.labels = Some(labels);
        self
    }

    pub fn with_positions(mut self, positions: Vec<Vec<f64>>) -> Self {
        self.positions = Some(positions);
        self
    }

    pub fn with_history(mut self, history: Vec<TopologyPoint>) -> Self {
        self.history = history;
        self
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("snapshot serializes")
    }

    /// Undirected DOT graph; polygons appear as comment lines.
    pub fn to_dot(&self) -> String {
        let mut s = String::from("graph complex {\n");
        for (i, p) in self.polygons.iter().enumerate() {
            let verts: Vec<String> = p.iter().map(|v| v.to_string()).collect();
            let _ = writeln!(s, "  // polygon {i}: {}", verts.join(" "));
        }
        for v in 0..self.vertices {
            match &self.labels {
                Some(l) => {
                    let _ = writeln!(s, "  {v} [label=\"{v}\", group={}];", l[v]);
                }
                None => {
                    let _ = writeln!(s, "  {v};");
                }
            }
        }
        for [u, v] in &self.edges {
            let _ = writeln!(s, "  {u} -- {v};");
        }
        s.push_str("}\n");
        s
    }

    /// Writes `<stem>.json` and `<stem>.dot` into `dir`.
    pub fn write(&self, dir: &Path, stem: &str) -> std::io::Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(format!("{stem}.json")), self.to_json())?;
        std::fs::write(dir.join(format!("{stem}.dot")), self.to_dot())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::complex::{lift, Skeleton};

    #[test]
    fn json_round_trip_and_dot() {
        let s = Skeleton::new(3, [(0, 1), (1, 2), (0, 2)]).unwrap();
        let c = lift(&s, &[vec![0, 1, 2]], &[0]).unwrap();
        let snap = ComplexSnapshot::new(&c)
            .with_labels(vec![0, 0, 1])
            .with_history(vec![TopologyPoint {
                epoch: 1,
                homophily: Some(1.0 / 3.0),
                pct_polygons: 100.0,
            }]);
        let back: ComplexSnapshot = serde_json::from_str(&snap.to_json()).unwrap();
        assert_eq!(back, snap);
        let dot = snap.to_dot();
        assert!(dot.contains("// polygon 0: 0 1 2"));
        assert!(dot.contains("1 -- 2;"));
    }
}
