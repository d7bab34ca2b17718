//! Synthetic one-class dataset for desk-scale experiments: a genuine-class
//! Gaussian cluster at 0.3 and a fraud cluster shifted by `shift`, both
//! clipped to the unit interval.

use super::{FeatureKind, FeatureSpec, TabularDataset};
use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

const CLUSTER_CENTER: f64 = 0.3;
const CLUSTER_STD: f64 = 0.05;

/// Builds `n_neg` class-0 rows around `0.3` and `n_pos` class-1 rows around
/// `0.3 + shift` (per coordinate std 0.05, clipped to [0, 1]). Negatives come
/// first. Deterministic per seed.
pub fn synth_occ(seed: u64, n_neg: usize, n_pos: usize, nf: usize, shift: f64) -> TabularDataset {
    assert!(n_neg >= 1 && n_pos >= 1 && nf >= 1, "need at least one row per class and one feature");
    assert!(shift >= 0.0, "shift must be non-negative");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = n_neg + n_pos;
    let mut rows = Array2::zeros((n, nf));
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let (center, label) = if i < n_neg {
            (CLUSTER_CENTER, 0)
        } else {
            (CLUSTER_CENTER + shift, 1)
        };
        for j in 0..nf {
            let e: f64 = rng.sample(StandardNormal);
            rows[(i, j)] = (center + CLUSTER_STD * e).clamp(0.0, 1.0);
        }
        labels.push(label);
    }
    let specs = (0..nf)
        .map(|j| FeatureSpec {
            name: format!("f{j}"),
            kind: FeatureKind::Numerical,
            categories: Vec::new(),
            range: Some((0.0, 1.0)),
        })
        .collect();
    TabularDataset {
        rows,
        labels,
        specs,
        provenance: format!("synthetic(seed={seed},n_neg={n_neg},n_pos={n_pos},nf={nf},shift={shift})"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_seed_is_identical() {
        let a = synth_occ(7, 50, 10, 4, 0.4);
        let b = synth_occ(7, 50, 10, 4, 0.4);
        assert_eq!(a.rows, b.rows);
        assert_eq!(a.labels, b.labels);
    }

    #[test]
    fn different_seed_differs() {
        let a = synth_occ(7, 50, 10, 4, 0.4);
        let b = synth_occ(8, 50, 10, 4, 0.4);
        assert_ne!(a.rows, b.rows);
    }

    #[test]
    fn zero_shift_overlaps_the_classes() {
        let ds = synth_occ(3, 2000, 2000, 3, 0.0);
        let (neg, pos) = ds.split_by_label().unwrap();
        let neg_mean = neg.sum() / neg.len() as f64;
        let pos_mean = pos.sum() / pos.len() as f64;
        assert!(
            (neg_mean - pos_mean).abs() < 0.01,
            "means {neg_mean} vs {pos_mean} should overlap"
        );
    }

    #[test]
    fn labels_partition_counts() {
        let ds = synth_occ(1, 500, 50, 8, 0.4);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 0).count(), 500);
        assert_eq!(ds.labels.iter().filter(|&&l| l == 1).count(), 50);
        let (train, test) = ds.split_by_label().unwrap();
        assert_eq!(train.nrows(), 500);
        assert_eq!(test.nrows(), 50);
        assert_eq!(train.ncols(), 8);
        for v in ds.rows.iter() {
            assert!((0.0..=1.0).contains(v));
        }
    }
}
