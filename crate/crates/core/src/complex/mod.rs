//! Regular cell complexes of order 2 lifted from a graph skeleton.
//!
//! A [`Skeleton`] is an undirected simple graph with canonical edge ids.
//! [`CellComplex`] attaches polygons to a chosen subset of its induced
//! cycles and materializes boundary, coboundary, lower and upper
//! adjacencies for vertices, edges and polygons.

mod cycles;
pub mod export;
mod metrics;

pub use cycles::{canonical_cycle, enumerate_induced_cycles, is_induced_cycle};
pub use metrics::{degree_histogram, homophily};

use std::collections::{BTreeSet, HashMap};

use thiserror::Error;

/// Default maximum polygon length.
pub const DEFAULT_K_MAX: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ComplexError {
    #[error("self-loop at vertex {0}")]
    SelfLoop(usize),
    #[error("vertex {vertex} out of range for {n} vertices")]
    VertexRange { vertex: usize, n: usize },
    #[error("{what} id {id} out of range ({len} available)")]
    IdRange { what: &'static str, id: usize, len: usize },
    #[error("polygon {0:?} is not an induced cycle of the skeleton")]
    NotInducedCycle(Vec<usize>),
    #[error("labels have length {labels}, skeleton has {n} vertices")]
    LabelLength { labels: usize, n: usize },
    #[error("homophily of a graph without edges is undefined")]
    NoEdges,
    #[error("k_max must be at least 3, got {0}")]
    KMax(usize),
}

pub type Result<T> = std::result::Result<T, ComplexError>;

/// Undirected simple graph; edge ids follow sorted `(u, v)` order with `u < v`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Skeleton {
    n: usize,
    edges: Vec<(usize, usize)>,
    edge_index: HashMap<(usize, usize), usize>,
    neighbors: Vec<Vec<usize>>,
}

impl Skeleton {
    /// Builds a skeleton from unordered pairs. Duplicates (in either
    /// orientation) collapse to one edge; self-loops are rejected.
    pub fn new(n: usize, pairs: impl IntoIterator<Item = (usize, usize)>) -> Result<Self> {
        let mut set = BTreeSet::new();
        for (a, b) in pairs {
            for v in [a, b] {
                if v >= n {
                    return Err(ComplexError::VertexRange { vertex: v, n });
                }
            }
            if a == b {
                return Err(ComplexError::SelfLoop(a));
            }
            set.insert((a.min(b), a.max(b)));
        }
        let edges: Vec<(usize, usize)> = set.into_iter().collect();
        let edge_index = edges.iter().enumerate().map(|(i, &e)| (e, i)).collect();
        let mut neighbors = vec![Vec::new(); n];
        for &(u, v) in &edges {
            neighbors[u].push(v);
            neighbors[v].push(u);
        }
        for nb in &mut neighbors {
            nb.sort_unstable();
        }
        Ok(Self {
            n,
            edges,
            edge_index,
            neighbors,
        })
    }

    pub fn empty(n: usize) -> Self {
        Self::new(n, std::iter::empty()).expect("empty skeleton is valid")
    }

    pub fn n_vertices(&self) -> usize {
        self.n
    }

    pub fn n_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.edge_index.get(&(u.min(v), u.max(v))).copied()
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.neighbors[v]
    }

    pub fn degree(&self, v: usize) -> usize {
        self.neighbors[v].len()
    }

    pub fn adjacent(&self, u: usize, v: usize) -> bool {
        self.neighbors[u].binary_search(&v).is_ok()
    }

    /// The same graph with vertex `v` renamed to `perm[v]`.
    pub fn relabel(&self, perm: &[usize]) -> Result<Self> {
        Skeleton::new(self.n, self.edges.iter().map(|&(u, v)| (perm[u], perm[v])))
    }
}

/// Cell dimension: 0 vertices, 1 edges, 2 polygons.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dim {
    Vertex,
    Edge,
    Polygon,
}

/// Neighborhood kind.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Adjacency {
    /// Faces one dimension down.
    Boundary,
    /// Cofaces one dimension up.
    Coboundary,
    /// Same-dimension cells sharing a face.
    Lower,
    /// Same-dimension cells sharing a coface.
    Upper,
}

/// Order-2 regular cell complex with all adjacency indices precomputed.
///
/// Index lists are sorted ascending. Neighborhoods that do not exist for a
/// dimension (e.g. the boundary of a vertex) are empty.
#[derive(Clone, Debug, PartialEq)]
pub struct CellComplex {
    skeleton: Skeleton,
    polygons: Vec<Vec<usize>>,
    /// Edge ids of each polygon in walk order.
    polygon_walks: Vec<Vec<usize>>,
    vertex_cb: Vec<Vec<usize>>,
    edge_b: Vec<Vec<usize>>,
    edge_cb: Vec<Vec<usize>>,
    edge_nd: Vec<Vec<usize>>,
    edge_nu: Vec<Vec<usize>>,
    poly_b: Vec<Vec<usize>>,
    poly_nd: Vec<Vec<usize>>,
}

const EMPTY: &[usize] = &[];

impl CellComplex {
    /// Attaches one polygon per vertex cycle. Each cycle must be an induced
    /// cycle of the skeleton; it is stored in canonical form.
    pub fn new(skeleton: Skeleton, polygons: Vec<Vec<usize>>) -> Result<Self> {
        let mut canon = Vec::with_capacity(polygons.len());
        for p in polygons {
            if p.iter().any(|&v| v >= skeleton.n_vertices()) || !is_induced_cycle(&skeleton, &p) {
                return Err(ComplexError::NotInducedCycle(p));
            }
            canon.push(canonical_cycle(&p));
        }
        Ok(Self::build(skeleton, canon))
    }

    fn build(skeleton: Skeleton, polygons: Vec<Vec<usize>>) -> Self {
        let n = skeleton.n_vertices();
        let e = skeleton.n_edges();

        let mut vertex_cb = vec![Vec::new(); n];
        let mut edge_b = Vec::with_capacity(e);
        for (id, &(u, v)) in skeleton.edges().iter().enumerate() {
            vertex_cb[u].push(id);
            vertex_cb[v].push(id);
            edge_b.push(vec![u, v]);
        }

        let mut polygon_walks = Vec::with_capacity(polygons.len());
        let mut poly_b = Vec::with_capacity(polygons.len());
        let mut edge_cb = vec![Vec::new(); e];
        for (pid, cyc) in polygons.iter().enumerate() {
            let k = cyc.len();
            let walk: Vec<usize> = (0..k)
                .map(|i| {
                    skeleton
                        .edge_id(cyc[i], cyc[(i + 1) % k])
                        .expect("validated cycle edge")
                })
                .collect();
            for &eid in &walk {
                edge_cb[eid].push(pid);
            }
            let mut b = walk.clone();
            b.sort_unstable();
            poly_b.push(b);
            polygon_walks.push(walk);
        }

        let edge_nd = (0..e)
            .map(|id| {
                let (u, v) = skeleton.edges()[id];
                let mut s: Vec<usize> = vertex_cb[u]
                    .iter()
                    .chain(&vertex_cb[v])
                    .copied()
                    .filter(|&x| x != id)
                    .collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let edge_nu = (0..e)
            .map(|id| {
                let mut s: Vec<usize> = edge_cb[id]
                    .iter()
                    .flat_map(|&p| poly_b[p].iter().copied())
                    .filter(|&x| x != id)
                    .collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();
        let poly_nd = (0..polygons.len())
            .map(|pid| {
                let mut s: Vec<usize> = poly_b[pid]
                    .iter()
                    .flat_map(|&eid| edge_cb[eid].iter().copied())
                    .filter(|&x| x != pid)
                    .collect();
                s.sort_unstable();
                s.dedup();
                s
            })
            .collect();

        Self {
            skeleton,
            polygons,
            polygon_walks,
            vertex_cb,
            edge_b,
            edge_cb,
            edge_nd,
            edge_nu,
            poly_b,
            poly_nd,
        }
    }

    pub fn skeleton(&self) -> &Skeleton {
        &self.skeleton
    }

    pub fn n_cells(&self, dim: Dim) -> usize {
        match dim {
            Dim::Vertex => self.skeleton.n_vertices(),
            Dim::Edge => self.skeleton.n_edges(),
            Dim::Polygon => self.polygons.len(),
        }
    }

    /// Polygons as canonical vertex cycles.
    pub fn polygons(&self) -> &[Vec<usize>] {
        &self.polygons
    }

    /// Edge ids of polygon `p` in the order of its vertex cycle.
    pub fn polygon_walk(&self, p: usize) -> &[usize] {
        &self.polygon_walks[p]
    }

    /// Sorted neighborhood of cell `id` of dimension `dim`.
    pub fn adjacency(&self, dim: Dim, kind: Adjacency, id: usize) -> Result<&[usize]> {
        let len = self.n_cells(dim);
        if id >= len {
            return Err(ComplexError::IdRange {
                what: match dim {
                    Dim::Vertex => "vertex",
                    Dim::Edge => "edge",
                    Dim::Polygon => "polygon",
                },
                id,
                len,
            });
        }
        Ok(match (dim, kind) {
            (Dim::Vertex, Adjacency::Coboundary) => &self.vertex_cb[id],
            (Dim::Vertex, Adjacency::Upper) => self.skeleton.neighbors(id),
            (Dim::Edge, Adjacency::Boundary) => &self.edge_b[id],
            (Dim::Edge, Adjacency::Coboundary) => &self.edge_cb[id],
            (Dim::Edge, Adjacency::Lower) => &self.edge_nd[id],
            (Dim::Edge, Adjacency::Upper) => &self.edge_nu[id],
            (Dim::Polygon, Adjacency::Boundary) => &self.poly_b[id],
            (Dim::Polygon, Adjacency::Lower) => &self.poly_nd[id],
            _ => EMPTY,
        })
    }

    /// Infallible accessor for internal callers iterating over valid ids.
    pub(crate) fn nbrs(&self, dim: Dim, kind: Adjacency, id: usize) -> &[usize] {
        self.adjacency(dim, kind, id).expect("id in range")
    }
}

/// Builds the complex whose polygons are `candidates[selected[..]]`.
///
/// `candidates` must come from [`enumerate_induced_cycles`] on the same
/// skeleton; they are trusted to be canonical induced cycles.
pub fn lift(skeleton: &Skeleton, candidates: &[Vec<usize>], selected: &[usize]) -> Result<CellComplex> {
    let mut polygons = Vec::with_capacity(selected.len());
    for &id in selected {
        let c = candidates.get(id).ok_or(ComplexError::IdRange {
            what: "candidate",
            id,
            len: candidates.len(),
        })?;
        polygons.push(c.clone());
    }
    Ok(CellComplex::build(skeleton.clone(), polygons))
}
