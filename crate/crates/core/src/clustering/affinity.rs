use ndarray::Array2;

use super::distance::{build_distance_matrix, within_block_pairs, DistanceMatrix};
use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::recording::EmbeddingIndex;

/// Bandwidth of the Gaussian kernel `exp(-d^2 / (2 sigma^2))`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    /// `sigma = scale * median` of the off-diagonal distances.
    MedianScaled(f64),
    Fixed(f64),
}

/// Median scale used by the clustering dispatcher. With the plain median,
/// well-separated speakers still get cross affinities near `exp(-1/2)`,
/// which hides the eigengap.
pub const DEFAULT_SPECTRAL_BANDWIDTH: Bandwidth = Bandwidth::MedianScaled(0.3);

impl Default for Bandwidth {
    fn default() -> Self {
        Bandwidth::MedianScaled(1.0)
    }
}

/// Symmetric similarity graph with entries in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityMatrix {
    pub entries: Array2<f64>,
    pub index_map: Vec<EmbeddingIndex>,
}

impl AffinityMatrix {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }
}

/// Median of the strictly-upper-triangular distances. Falls back to the
/// median of the positive distances when the plain median is zero, and to 1
/// when there are no positive distances at all.
pub fn median_distance(d: &DistanceMatrix) -> f64 {
    let n = d.len();
    let mut all: Vec<f64> = Vec::with_capacity(n * n.saturating_sub(1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            all.push(d.entries[[a, b]]);
        }
    }
    let median = |v: &mut Vec<f64>| -> f64 {
        v.sort_by(f64::total_cmp);
        let m = v.len();
        if m % 2 == 1 {
            v[m / 2]
        } else {
            0.5 * (v[m / 2 - 1] + v[m / 2])
        }
    };
    if all.is_empty() {
        return 1.0;
    }
    let med = median(&mut all);
    if med > 0.0 {
        return med;
    }
    let mut positive: Vec<f64> = all.into_iter().filter(|&x| x > 0.0).collect();
    if positive.is_empty() {
        1.0
    } else {
        median(&mut positive)
    }
}

pub fn resolve_bandwidth(d: &DistanceMatrix, bandwidth: Bandwidth) -> Result<f64> {
    let sigma = match bandwidth {
        Bandwidth::MedianScaled(scale) => scale * median_distance(d),
        Bandwidth::Fixed(sigma) => sigma,
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("kernel bandwidth must be positive, got {sigma}")));
    }
    Ok(sigma)
}

pub fn affinity_from_distances(d: &DistanceMatrix, bandwidth: Bandwidth) -> Result<AffinityMatrix> {
    let sigma = resolve_bandwidth(d, bandwidth)?;
    let denom = 2.0 * sigma * sigma;
    let mut entries = d.entries.mapv(|x| (-(x * x) / denom).exp());
    entries.diag_mut().fill(1.0);
    Ok(AffinityMatrix {
        entries,
        index_map: d.index_map.clone(),
    })
}

/// Gaussian affinity of Euclidean distances with median bandwidth.
pub fn build_affinity_matrix(set: &EmbeddingSet) -> AffinityMatrix {
    build_affinity_matrix_with(set, Bandwidth::default()).expect("median bandwidth is positive")
}

pub fn build_affinity_matrix_with(set: &EmbeddingSet, bandwidth: Bandwidth) -> Result<AffinityMatrix> {
    affinity_from_distances(&build_distance_matrix(set), bandwidth)
}

/// Zeroes the edge between every pair of distinct same-block embeddings.
pub fn apply_cannot_link_affinity(a: &AffinityMatrix) -> AffinityMatrix {
    let mut out = a.clone();
    for (x, y) in within_block_pairs(&a.index_map) {
        out.entries[[x, y]] = 0.0;
        out.entries[[y, x]] = 0.0;
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn set(rows: Vec<(usize, usize, Vec<f64>)>) -> EmbeddingSet {
        EmbeddingSet::from_rows(
            rows.into_iter()
                .map(|(b, s, v)| (EmbeddingIndex::new(b, s), v))
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn identical_vectors() {
        let a = build_affinity_matrix(&set(vec![(0, 0, vec![1.0, 2.0]), (1, 0, vec![1.0, 2.0])]));
        assert_eq!(a.entries[[0, 1]], 1.0);
    }

    #[test]
    fn distance_equal_to_sigma() {
        // two points: the only distance is the median
        let a = build_affinity_matrix(&set(vec![(0, 0, vec![0.0]), (1, 0, vec![3.0])]));
        assert!((a.entries[[0, 1]] - (-0.5f64).exp()).abs() < 1e-15);
        assert!((a.entries[[0, 1]] - 0.6065).abs() < 1e-4);
    }

    #[test]
    fn single_point_uses_unit_bandwidth() {
        let s = set(vec![(0, 0, vec![4.0])]);
        let d = build_distance_matrix(&s);
        assert_eq!(median_distance(&d), 1.0);
        assert_eq!(build_affinity_matrix(&s).entries[[0, 0]], 1.0);
    }

    #[test]
    fn matches_hand_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let pts: Vec<Vec<f64>> = (0..5).map(|_| (0..3).map(|_| rng.random::<f64>()).collect()).collect();
        let s = set(pts.iter().enumerate().map(|(i, p)| (i, 0, p.clone())).collect());
        let a = build_affinity_matrix(&s);

        let dist = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let mut pair_d = Vec::new();
        for i in 0..5 {
            for j in i + 1..5 {
                pair_d.push(dist(&pts[i], &pts[j]));
            }
        }
        pair_d.sort_by(f64::total_cmp);
        let sigma = 0.5 * (pair_d[4] + pair_d[5]);
        for i in 0..5 {
            for j in 0..5 {
                let want = if i == j { 1.0 } else { (-dist(&pts[i], &pts[j]).powi(2) / (2.0 * sigma * sigma)).exp() };
                assert!((a.entries[[i, j]] - want).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_median_falls_back_to_positive_distances() {
        let s = set(vec![
            (0, 0, vec![0.0]),
            (1, 0, vec![0.0]),
            (2, 0, vec![0.0]),
            (3, 0, vec![2.0]),
        ]);
        // distances: three zeros, three 2.0 -> median 1.0
        assert_eq!(median_distance(&build_distance_matrix(&s)), 1.0);
        let s = set(vec![(0, 0, vec![0.0]), (1, 0, vec![0.0]), (2, 0, vec![0.0]), (3, 0, vec![0.0]), (4, 0, vec![2.0])]);
        // six zeros, four 2.0 -> plain median 0 -> positive median 2.0
        assert_eq!(median_distance(&build_distance_matrix(&s)), 2.0);
    }

    #[test]
    fn cannot_link_zeroes_within_block() {
        let index_map = vec![
            EmbeddingIndex::new(0, 0),
            EmbeddingIndex::new(0, 1),
            EmbeddingIndex::new(1, 0),
            EmbeddingIndex::new(1, 1),
        ];
        let mut entries = Array2::from_elem((4, 4), 0.9);
        entries.diag_mut().fill(1.0);
        let a = AffinityMatrix { entries, index_map };
        let c = apply_cannot_link_affinity(&a);
        for i in 0..4 {
            for j in 0..4 {
                let same_block = a.index_map[i].block == a.index_map[j].block;
                let want = if i == j { 1.0 } else if same_block { 0.0 } else { 0.9 };
                assert_eq!(c.entries[[i, j]], want);
            }
        }
        assert_eq!(apply_cannot_link_affinity(&c), c);
    }

    #[test]
    fn one_slot_per_block_unchanged() {
        let s = set(vec![(0, 0, vec![0.0]), (1, 2, vec![1.0]), (2, 1, vec![3.0])]);
        let a = build_affinity_matrix(&s);
        assert_eq!(apply_cannot_link_affinity(&a), a);
    }
}
