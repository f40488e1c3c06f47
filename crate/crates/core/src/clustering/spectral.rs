//! Spectral clustering on the unnormalized graph Laplacian.

use ndarray::{s, Array2, Axis};

use super::affinity::AffinityMatrix;
use super::eigen::symmetric_eigendecomposition;
use super::kmeans::{kmeans_best_of, DEFAULT_MAX_ITER};
use crate::error::{Error, Result};
use crate::recording::ClusterAssignment;

pub const DEFAULT_MAX_K: usize = 10;
const KMEANS_RESTARTS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClusterCount {
    Fixed(usize),
    /// Pick `k` by the largest gap among the `max_k + 1` smallest eigenvalues.
    Eigengap { max_k: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct SpectralResult {
    pub assignment: ClusterAssignment,
    pub k: usize,
    /// Laplacian spectrum, ascending.
    pub eigenvalues: Vec<f64>,
}

/// `L = D - A` with `D` the diagonal degree matrix.
pub fn unnormalized_laplacian(a: &AffinityMatrix) -> Array2<f64> {
    let degrees = a.entries.sum_axis(Axis(1));
    let mut l = -a.entries.clone();
    for (i, d) in degrees.iter().enumerate() {
        l[[i, i]] += d;
    }
    l
}

/// Returns `argmax_j (lambda[j+1] - lambda[j])` over `1 <= j <= min(max_k, n - 1)`
/// (1-based), smallest `j` on ties; 1 when fewer than two eigenvalues exist.
pub fn eigengap_estimate(eigenvalues: &[f64], max_k: usize) -> usize {
    let n = eigenvalues.len();
    if n < 2 {
        return 1;
    }
    let upper = max_k.clamp(1, n - 1);
    let mut best = (1, f64::NEG_INFINITY);
    for j in 1..=upper {
        let gap = eigenvalues[j] - eigenvalues[j - 1];
        if gap > best.1 {
            best = (j, gap);
        }
    }
    best.0
}

pub fn spectral_clustering(a: &AffinityMatrix, count: ClusterCount, seed: u64) -> Result<SpectralResult> {
    let n = a.len();
    if n == 0 {
        return Err(Error::invalid("spectral clustering needs at least one embedding"));
    }
    let eig = symmetric_eigendecomposition(unnormalized_laplacian(a).view())?;
    let k = match count {
        ClusterCount::Fixed(k) => k,
        ClusterCount::Eigengap { max_k } => {
            if max_k == 0 {
                return Err(Error::invalid("max_k must be at least 1"));
            }
            eigengap_estimate(&eig.eigenvalues, max_k)
        }
    };
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::TooManyClusters {
            requested: k,
            available: n,
        });
    }
    let embedding = eig.eigenvectors.slice(s![.., ..k]).to_owned();
    let fit = kmeans_best_of(embedding.view(), k, seed, DEFAULT_MAX_ITER, KMEANS_RESTARTS)?;
    Ok(SpectralResult {
        assignment: ClusterAssignment::from_cluster_ids(&a.index_map, &fit.labels),
        k,
        eigenvalues: eig.eigenvalues,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::EmbeddingIndex;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn block_diagonal(sizes: &[usize], within: f64) -> AffinityMatrix {
        let n: usize = sizes.iter().sum();
        let mut group = Vec::new();
        for (g, &s) in sizes.iter().enumerate() {
            group.extend(std::iter::repeat_n(g, s));
        }
        let entries = Array2::from_shape_fn((n, n), |(i, j)| {
            if i == j {
                1.0
            } else if group[i] == group[j] {
                within
            } else {
                0.0
            }
        });
        AffinityMatrix {
            entries,
            index_map: (0..n).map(|i| EmbeddingIndex::new(i, 0)).collect(),
        }
    }

    fn groups(a: &ClusterAssignment) -> Vec<Vec<usize>> {
        a.clusters()
            .into_iter()
            .map(|c| c.into_iter().map(|i| i.block).collect())
            .collect()
    }

    #[test]
    fn eigengap_examples() {
        assert_eq!(eigengap_estimate(&[0.0, 0.0, 0.0, 2.0, 2.1], 4), 3);
        assert_eq!(eigengap_estimate(&[0.0, 5.0], 4), 1);
        assert_eq!(eigengap_estimate(&[0.0, 1.0, 2.0, 3.0], 4), 1);
        assert_eq!(eigengap_estimate(&[0.3], 4), 1);
        assert_eq!(eigengap_estimate(&[], 4), 1);
        // max_k caps the search
        assert_eq!(eigengap_estimate(&[0.0, 0.1, 0.2, 5.0], 2), 1);
    }

    #[test]
    fn two_components() {
        let a = block_diagonal(&[3, 4], 0.8);
        let r = spectral_clustering(&a, ClusterCount::Fixed(2), 0).unwrap();
        assert_eq!(groups(&r.assignment), vec![vec![0, 1, 2], vec![3, 4, 5, 6]]);
    }

    #[test]
    fn three_components_by_eigengap() {
        let a = block_diagonal(&[2, 3, 4], 0.9);
        let r = spectral_clustering(&a, ClusterCount::Eigengap { max_k: 6 }, 0).unwrap();
        assert_eq!(r.k, 3);
        assert_eq!(groups(&r.assignment), vec![vec![0, 1], vec![2, 3, 4], vec![5, 6, 7, 8]]);
    }

    #[test]
    fn k_larger_than_n() {
        let a = block_diagonal(&[2], 1.0);
        assert!(matches!(
            spectral_clustering(&a, ClusterCount::Fixed(3), 0),
            Err(Error::TooManyClusters { .. })
        ));
    }

    // Exhaustive normalized and ratio cuts over all bipartitions.
    fn best_cuts(w: &Array2<f64>) -> (u32, u32) {
        let n = w.nrows();
        let deg: Vec<f64> = (0..n).map(|i| w.row(i).sum()).collect();
        let (mut best_n, mut best_r) = ((f64::INFINITY, 0u32), (f64::INFINITY, 0u32));
        // fix node 0 on side A to skip mirror images
        for mask in 0u32..(1 << (n - 1)) {
            let in_a = |i: usize| i == 0 || mask & (1 << (i - 1)) == 0;
            let size_a = (0..n).filter(|&i| in_a(i)).count();
            if size_a == n {
                continue;
            }
            let mut cut = 0.0;
            let (mut vol_a, mut vol_b) = (0.0, 0.0);
            for i in 0..n {
                if in_a(i) {
                    vol_a += deg[i];
                } else {
                    vol_b += deg[i];
                }
                for j in 0..n {
                    if in_a(i) && !in_a(j) {
                        cut += w[[i, j]];
                    }
                }
            }
            let ncut = cut / vol_a + cut / vol_b;
            let rcut = cut / size_a as f64 + cut / (n - size_a) as f64;
            if ncut < best_n.0 {
                best_n = (ncut, mask);
            }
            if rcut < best_r.0 {
                best_r = (rcut, mask);
            }
        }
        (best_n.1, best_r.1)
    }

    #[test]
    fn noisy_two_clusters_match_best_cut() {
        for seed in 0..5u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let n = 10;
            let truth: Vec<usize> = (0..n).map(|i| usize::from(i % 3 == 0)).collect();
            let mut w = Array2::zeros((n, n));
            for i in 0..n {
                for j in i + 1..n {
                    let v = if truth[i] == truth[j] {
                        0.6 + 0.4 * rng.random::<f64>()
                    } else {
                        0.15 * rng.random::<f64>()
                    };
                    w[[i, j]] = v;
                    w[[j, i]] = v;
                }
                w[[i, i]] = 1.0;
            }
            let (ncut_mask, rcut_mask) = best_cuts(&w);
            assert_eq!(ncut_mask, rcut_mask);
            let a = AffinityMatrix {
                entries: w,
                index_map: (0..n).map(|i| EmbeddingIndex::new(i, 0)).collect(),
            };
            let r = spectral_clustering(&a, ClusterCount::Fixed(2), 1).unwrap();
            let node0 = r.assignment.label(EmbeddingIndex::new(0, 0));
            for i in 1..n {
                let same_side_in_cut = ncut_mask & (1 << (i - 1)) == 0;
                let same_cluster = r.assignment.label(EmbeddingIndex::new(i, 0)) == node0;
                assert_eq!(same_side_in_cut, same_cluster, "seed {seed} node {i}");
            }
        }
    }
}
