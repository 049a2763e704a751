use std::collections::BTreeMap;

use super::{ComplexError, Result, Skeleton};

/// Edge homophily: the fraction of edges whose endpoints share a label.
pub fn homophily(skeleton: &Skeleton, labels: &[usize]) -> Result<f64> {
    if labels.len() != skeleton.n_vertices() {
        return Err(ComplexError::LabelLength {
            labels: labels.len(),
            n: skeleton.n_vertices(),
        });
    }
    if skeleton.n_edges() == 0 {
        return Err(ComplexError::NoEdges);
    }
    let same = skeleton
        .edges()
        .iter()
        .filter(|&&(u, v)| labels[u] == labels[v])
        .count();
    Ok(same as f64 / skeleton.n_edges() as f64)
}

/// Number of vertices per degree.
pub fn degree_histogram(skeleton: &Skeleton) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for v in 0..skeleton.n_vertices() {
        *h.entry(skeleton.degree(v)).or_insert(0) += 1;
    }
    h
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn homophily_extremes() {
        let c4 = Skeleton::new(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(homophily(&c4, &[7, 7, 7, 7]).unwrap(), 1.0);
        // C4 is bipartite with sides {0, 2} and {1, 3}.
        assert_eq!(homophily(&c4, &[0, 1, 0, 1]).unwrap(), 0.0);
        assert_eq!(homophily(&c4, &[0, 0, 1, 1]).unwrap(), 0.5);
        assert!(matches!(homophily(&c4, &[0]), Err(ComplexError::LabelLength { .. })));
        assert_eq!(homophily(&Skeleton::empty(2), &[0, 0]), Err(ComplexError::NoEdges));
    }

    #[test]
    fn histograms() {
        let c4 = Skeleton::new(4, [(0, 1), (1, 2), (2, 3), (3, 0)]).unwrap();
        assert_eq!(degree_histogram(&c4), BTreeMap::from([(2, 4)]));
        let star = Skeleton::new(4, [(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(degree_histogram(&star), BTreeMap::from([(1, 3), (3, 1)]));
    }
}
