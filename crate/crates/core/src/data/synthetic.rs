use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::Dataset;
use crate::tensor::Tensor;

/// Two isotropic unit-variance Gaussian clusters in `f` dimensions.
///
/// Node `i` has label `i % 2`; the class-1 mean is offset by `separation`
/// standard deviations along every axis from the class-0 mean at the origin.
pub fn two_blobs(n: usize, f: usize, separation: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let data = labels
        .iter()
        .flat_map(|&l| {
            let shift = l as f64 * separation;
            (0..f)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    shift + z
                })
                .collect::<Vec<f64>>()
        })
        .collect();
    Dataset {
        name: format!("blobs-{seed}"),
        features: Tensor::new(n, f, data).expect("finite samples"),
        labels,
        n_classes: 2,
        edges: None,
        splits: None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn shape_balance_and_determinism() {
        let a = two_blobs(100, 8, 4.0, 3);
        assert_eq!(a.features.shape(), (100, 8));
        assert_eq!(a.labels.iter().filter(|&&l| l == 1).count(), 50);
        assert_eq!(a, two_blobs(100, 8, 4.0, 3));
        let mean1: f64 = (0..100)
            .filter(|i| i % 2 == 1)
            .map(|i| a.features.get(i, 0))
            .sum::<f64>()
            / 50.0;
        assert!((mean1 - 4.0).abs() < 0.6);
    }
}
