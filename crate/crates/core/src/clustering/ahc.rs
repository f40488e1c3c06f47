//! Average-linkage agglomerative clustering, optionally with cannot-link
//! constraints encoded as a dominating distance.

use super::distance::{apply_cannot_link_distance, build_distance_matrix_with, DistanceMatrix, Metric};
use super::EmbeddingSet;
use crate::error::{Error, Result};
use crate::recording::ClusterAssignment;

/// Default merge threshold for estimated-speaker-count mode.
pub const DEFAULT_AHC_THRESHOLD: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StoppingRule {
    /// Stop once exactly `K` clusters remain.
    NumClusters(usize),
    /// Merge while the closest pair of clusters is nearer than `theta`.
    DistanceThreshold(f64),
}

/// One merge step. Clusters are named by their smallest member row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    pub kept: usize,
    pub absorbed: usize,
    pub distance: f64,
    pub size: usize,
}

/// Full merge history of `n` leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    pub num_leaves: usize,
    pub merges: Vec<Merge>,
}

impl Dendrogram {
    /// Cluster ids per leaf after applying the first `steps` merges.
    pub fn cut(&self, steps: usize) -> Vec<usize> {
        let mut parent: Vec<usize> = (0..self.num_leaves).collect();
        fn find(parent: &mut [usize], mut x: usize) -> usize {
            while parent[x] != x {
                parent[x] = parent[parent[x]];
                x = parent[x];
            }
            x
        }
        for m in &self.merges[..steps.min(self.merges.len())] {
            let a = find(&mut parent, m.kept);
            let b = find(&mut parent, m.absorbed);
            parent[b] = a;
        }
        (0..self.num_leaves).map(|i| find(&mut parent, i)).collect()
    }

    /// Number of merges the stopping rule allows.
    pub fn steps_for(&self, stop: StoppingRule) -> Result<usize> {
        match stop {
            StoppingRule::NumClusters(k) => {
                if k == 0 {
                    return Err(Error::invalid("number of clusters must be at least 1"));
                }
                if k > self.num_leaves {
                    return Err(Error::TooManyClusters {
                        requested: k,
                        available: self.num_leaves,
                    });
                }
                Ok(self.num_leaves - k)
            }
            StoppingRule::DistanceThreshold(theta) => {
                if !(theta > 0.0) {
                    return Err(Error::invalid(format!("distance threshold must be > 0, got {theta}")));
                }
                Ok(self.merges.iter().take_while(|m| m.distance < theta).count())
            }
        }
    }
}

/// Builds the complete average-linkage dendrogram.
///
/// Linkage distances are updated with the Lance-Williams rule for the
/// unweighted pair-group average. Ties go to the lexicographically smallest
/// `(row, col)` pair.
pub fn average_linkage(d: &DistanceMatrix) -> Dendrogram {
    let n = d.len();
    let mut dist = d.entries.clone();
    let mut size = vec![1usize; n];
    let mut active = vec![true; n];
    let mut merges = Vec::with_capacity(n.saturating_sub(1));

    for _ in 1..n {
        let mut best = (usize::MAX, usize::MAX, f64::INFINITY);
        for i in 0..n {
            if !active[i] {
                continue;
            }
            for j in i + 1..n {
                if active[j] && dist[[i, j]] < best.2 {
                    best = (i, j, dist[[i, j]]);
                }
            }
        }
        let (i, j, dij) = best;
        if i == usize::MAX {
            // only non-finite distances remain
            break;
        }
        let (ni, nj) = (size[i] as f64, size[j] as f64);
        for k in 0..n {
            if active[k] && k != i && k != j {
                let v = (ni * dist[[i, k]] + nj * dist[[j, k]]) / (ni + nj);
                dist[[i, k]] = v;
                dist[[k, i]] = v;
            }
        }
        active[j] = false;
        size[i] += size[j];
        merges.push(Merge {
            kept: i,
            absorbed: j,
            distance: dij,
            size: size[i],
        });
    }
    Dendrogram {
        num_leaves: n,
        merges,
    }
}

pub fn ahc(d: &DistanceMatrix, stop: StoppingRule) -> Result<ClusterAssignment> {
    if d.is_empty() {
        return Err(Error::invalid("AHC needs at least one embedding"));
    }
    let dendrogram = average_linkage(d);
    let steps = dendrogram.steps_for(stop)?;
    Ok(ClusterAssignment::from_cluster_ids(&d.index_map, &dendrogram.cut(steps)))
}

/// AHC on the distance matrix with every same-block pair set to `kappa`.
pub fn constrained_ahc(
    set: &EmbeddingSet,
    stop: StoppingRule,
    kappa: f64,
) -> Result<ClusterAssignment> {
    constrained_ahc_with(set, stop, kappa, Metric::Euclidean)
}

pub fn constrained_ahc_with(
    set: &EmbeddingSet,
    stop: StoppingRule,
    kappa: f64,
    metric: Metric,
) -> Result<ClusterAssignment> {
    let d = build_distance_matrix_with(set, metric);
    ahc(&apply_cannot_link_distance(&d, kappa)?, stop)
}
