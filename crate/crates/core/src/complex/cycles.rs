use super::{ComplexError, Result, Skeleton};

/// Rotates a vertex cycle so its smallest vertex comes first, then picks the
/// direction whose second vertex is smaller.
pub fn canonical_cycle(cycle: &[usize]) -> Vec<usize> {
    let k = cycle.len();
    if k == 0 {
        return Vec::new();
    }
    let start = (0..k).min_by_key(|&i| cycle[i]).unwrap_or(0);
    let fwd: Vec<usize> = (0..k).map(|i| cycle[(start + i) % k]).collect();
    let bwd: Vec<usize> = (0..k).map(|i| cycle[(start + k - i) % k]).collect();
    if k > 1 && bwd[1] < fwd[1] {
        bwd
    } else {
        fwd
    }
}

/// True when `cycle` lists ≥ 3 distinct vertices forming a chordless cycle.
pub fn is_induced_cycle(skeleton: &Skeleton, cycle: &[usize]) -> bool {
    let k = cycle.len();
    if k < 3 {
        return false;
    }
    let mut seen = cycle.to_vec();
    seen.sort_unstable();
    seen.dedup();
    if seen.len() != k || seen.iter().any(|&v| v >= skeleton.n_vertices()) {
        return false;
    }
    for i in 0..k {
        for j in i + 1..k {
            let consecutive = j == i + 1 || (i == 0 && j == k - 1);
            if skeleton.adjacent(cycle[i], cycle[j]) != consecutive {
                return false;
            }
        }
    }
    true
}

/// All chordless cycles of length `3..=k_max`, each once in canonical form,
/// sorted lexicographically.
///
/// For each start vertex `v` a depth-first search grows induced paths whose
/// other vertices all exceed `v`. A path closes into a cycle as soon as its
/// endpoint can return to `v`; keeping the second vertex below the last one
/// removes the mirrored duplicate.
pub fn enumerate_induced_cycles(skeleton: &Skeleton, k_max: usize) -> Result<Vec<Vec<usize>>> {
    if k_max < 3 {
        return Err(ComplexError::KMax(k_max));
    }
    let n = skeleton.n_vertices();
    let mut out = Vec::new();
    let mut on_path = vec![false; n];
    let mut path = Vec::with_capacity(k_max);
    for v in 0..n {
        on_path[v] = true;
        path.push(v);
        for &u in skeleton.neighbors(v) {
            if u < v {
                continue;
            }
            on_path[u] = true;
            path.push(u);
            extend(skeleton, k_max, &mut path, &mut on_path, &mut out);
            path.pop();
            on_path[u] = false;
        }
        path.pop();
        on_path[v] = false;
    }
    out.sort();
    Ok(out)
}

fn extend(g: &Skeleton, k_max: usize, path: &mut Vec<usize>, on_path: &mut [bool], out: &mut Vec<Vec<usize>>) {
    let start = path[0];
    let last = *path.last().expect("path has two vertices");
    let m = path.len();
    for &w in g.neighbors(last) {
        if w <= start || on_path[w] {
            continue;
        }
        if path[1..m - 1].iter().any(|&x| g.adjacent(w, x)) {
            continue;
        }
        if g.adjacent(w, start) {
            if path[1] < w {
                let mut c = path.clone();
                c.push(w);
                out.push(c);
            }
        } else if m + 1 < k_max {
            on_path[w] = true;
            path.push(w);
            extend(g, k_max, path, on_path, out);
            path.pop();
            on_path[w] = false;
        }
    }
}
