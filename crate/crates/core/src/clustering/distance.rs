use ndarray::Array2;

use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::recording::EmbeddingIndex;

/// Default distance inserted between cannot-linked embeddings.
pub const DEFAULT_KAPPA: f64 = 10_000.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Metric {
    #[default]
    Euclidean,
    /// `1 - cos(a, b)`; zero vectors are treated as orthogonal to everything.
    Cosine,
}

impl Metric {
    pub fn distance(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Metric::Euclidean => a
                .iter()
                .zip(b)
                .map(|(x, y)| (x - y) * (x - y))
                .sum::<f64>()
                .sqrt(),
            Metric::Cosine => {
                let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
                let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
                let nb = b.iter().map(|x| x * x).sum::<f64>().sqrt();
                if na == 0.0 || nb == 0.0 {
                    1.0
                } else {
                    (1.0 - dot / (na * nb)).max(0.0)
                }
            }
        }
    }
}

/// Symmetric pairwise distances with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    pub entries: Array2<f64>,
    pub index_map: Vec<EmbeddingIndex>,
}

impl DistanceMatrix {
    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn max_entry(&self) -> f64 {
        self.entries.iter().copied().fold(0.0, f64::max)
    }
}

pub fn build_distance_matrix(set: &EmbeddingSet) -> DistanceMatrix {
    build_distance_matrix_with(set, Metric::Euclidean)
}

pub fn build_distance_matrix_with(set: &EmbeddingSet, metric: Metric) -> DistanceMatrix {
    let n = set.len();
    let rows: Vec<Vec<f64>> = set.vectors().rows().into_iter().map(|r| r.to_vec()).collect();
    let mut entries = Array2::zeros((n, n));
    for a in 0..n {
        for b in a + 1..n {
            let d = metric.distance(&rows[a], &rows[b]);
            entries[[a, b]] = d;
            entries[[b, a]] = d;
        }
    }
    DistanceMatrix {
        entries,
        index_map: set.index_map().to_vec(),
    }
}

/// Pairs `(a, b)`, `a < b`, of distinct rows that share a block.
pub(crate) fn within_block_pairs(index_map: &[EmbeddingIndex]) -> Vec<(usize, usize)> {
    let mut pairs = Vec::new();
    for a in 0..index_map.len() {
        for b in a + 1..index_map.len() {
            if index_map[a].block == index_map[b].block {
                pairs.push((a, b));
            }
        }
    }
    pairs
}

/// Sets the distance between every pair of distinct same-block embeddings to
/// `kappa`.
///
/// `kappa` must exceed every entry that stays unchanged, so applying the
/// constraint twice is the same as applying it once.
pub fn apply_cannot_link_distance(d: &DistanceMatrix, kappa: f64) -> Result<DistanceMatrix> {
    let n = d.len();
    let mut max_kept = 0.0f64;
    for a in 0..n {
        for b in a + 1..n {
            if d.index_map[a].block != d.index_map[b].block {
                max_kept = max_kept.max(d.entries[[a, b]]);
            }
        }
    }
    if !(kappa.is_finite() && kappa > max_kept) {
        return Err(Error::invalid(format!(
            "kappa {kappa} must exceed the largest unconstrained distance {max_kept}"
        )));
    }
    let mut out = d.clone();
    for (a, b) in within_block_pairs(&d.index_map) {
        out.entries[[a, b]] = kappa;
        out.entries[[b, a]] = kappa;
    }
    Ok(out)
}
