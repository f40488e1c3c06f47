//! k-means with k-means++ seeding, and COP-Kmeans (k-means under cannot-link
//! constraints).
//!
//! Both share one Lloyd loop. Seeding draws from a ChaCha8 stream seeded
//! with the caller's seed, so COP-Kmeans with no constraints reproduces plain
//! k-means exactly.

use ndarray::{Array2, ArrayView1, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{CannotLinks, EmbeddingSet};
use crate::error::{Error, Result};
use crate::recording::ClusterAssignment;

pub const DEFAULT_MAX_ITER: usize = 100;
pub const DEFAULT_RESTARTS: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub labels: Vec<usize>,
    pub centroids: Array2<f64>,
    /// Sum of squared distances to the assigned centroid, after each
    /// centroid update.
    pub objective_history: Vec<f64>,
    pub converged: bool,
}

impl KMeansFit {
    pub fn objective(&self) -> f64 {
        self.objective_history.last().copied().unwrap_or(0.0)
    }
}

fn sq_dist(a: ArrayView1<'_, f64>, b: ArrayView1<'_, f64>) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn check_k(n: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(Error::invalid("k must be at least 1"));
    }
    if k > n {
        return Err(Error::TooManyClusters {
            requested: k,
            available: n,
        });
    }
    Ok(())
}

/// k-means++ seeding: first center uniform, then proportional to squared
/// distance from the nearest chosen center.
fn plus_plus(points: ArrayView2<'_, f64>, k: usize, rng: &mut ChaCha8Rng) -> Array2<f64> {
    let n = points.nrows();
    let mut chosen = Vec::with_capacity(k);
    let mut taken = vec![false; n];
    let first = rng.random_range(0..n);
    chosen.push(first);
    taken[first] = true;
    let mut nearest: Vec<f64> = (0..n)
        .map(|i| sq_dist(points.row(i), points.row(first)))
        .collect();

    while chosen.len() < k {
        let total: f64 = nearest.iter().sum();
        let next = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in nearest.iter().enumerate() {
                if w <= 0.0 {
                    continue;
                }
                acc += w;
                pick = Some(i);
                if acc > target {
                    break;
                }
            }
            pick.expect("positive total weight")
        } else {
            // every remaining point coincides with a chosen center
            taken.iter().position(|t| !t).expect("k <= n")
        };
        chosen.push(next);
        taken[next] = true;
        for (i, w) in nearest.iter_mut().enumerate() {
            *w = w.min(sq_dist(points.row(i), points.row(next)));
        }
    }

    let mut centroids = Array2::zeros((k, points.ncols()));
    for (c, &i) in chosen.iter().enumerate() {
        centroids.row_mut(c).assign(&points.row(i));
    }
    centroids
}

// Centroids ordered by distance from `point`, ties by index.
fn ranked_centroids(point: ArrayView1<'_, f64>, centroids: &Array2<f64>) -> Vec<(f64, usize)> {
    let mut ranked: Vec<(f64, usize)> = centroids
        .rows()
        .into_iter()
        .enumerate()
        .map(|(c, row)| (sq_dist(point, row), c))
        .collect();
    ranked.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    ranked
}

fn assign_free(points: ArrayView2<'_, f64>, centroids: &Array2<f64>) -> Vec<usize> {
    points
        .rows()
        .into_iter()
        .map(|p| {
            let mut best = (f64::INFINITY, 0);
            for (c, row) in centroids.rows().into_iter().enumerate() {
                let d = sq_dist(p, row);
                if d < best.0 {
                    best = (d, c);
                }
            }
            best.1
        })
        .collect()
}

// One constrained pass; `None` when some point has no feasible centroid.
fn assign_constrained(
    points: ArrayView2<'_, f64>,
    centroids: &Array2<f64>,
    links: &CannotLinks,
) -> Option<Vec<usize>> {
    let n = points.nrows();
    let mut labels: Vec<Option<usize>> = vec![None; n];
    for i in 0..n {
        let feasible = ranked_centroids(points.row(i), centroids)
            .into_iter()
            .map(|(_, c)| c)
            .find(|&c| links.partners(i).iter().all(|&p| labels[p] != Some(c)))?;
        labels[i] = Some(feasible);
    }
    Some(labels.into_iter().map(|l| l.expect("assigned")).collect())
}

fn update_centroids(points: ArrayView2<'_, f64>, labels: &[usize], centroids: &mut Array2<f64>) {
    let k = centroids.nrows();
    let mut sums = Array2::<f64>::zeros(centroids.dim());
    let mut counts = vec![0usize; k];
    for (p, &l) in points.rows().into_iter().zip(labels) {
        let mut row = sums.row_mut(l);
        row += &p;
        counts[l] += 1;
    }
    for c in 0..k {
        // empty clusters keep their previous centroid
        if counts[c] > 0 {
            let mean = &sums.row(c) / counts[c] as f64;
            centroids.row_mut(c).assign(&mean);
        }
    }
}

fn objective(points: ArrayView2<'_, f64>, labels: &[usize], centroids: &Array2<f64>) -> f64 {
    points
        .rows()
        .into_iter()
        .zip(labels)
        .map(|(p, &l)| sq_dist(p, centroids.row(l)))
        .sum()
}

// Lloyd iterations from the given seeding. Err(()) signals an infeasible
// constrained pass.
fn lloyd(
    points: ArrayView2<'_, f64>,
    mut centroids: Array2<f64>,
    max_iter: usize,
    links: Option<&CannotLinks>,
) -> std::result::Result<KMeansFit, ()> {
    let mut labels: Vec<usize> = Vec::new();
    let mut history = Vec::new();
    let mut converged = false;
    for _ in 0..max_iter.max(1) {
        let next = match links {
            Some(links) => assign_constrained(points, &centroids, links).ok_or(())?,
            None => assign_free(points, &centroids),
        };
        let changed = next != labels;
        labels = next;
        update_centroids(points, &labels, &mut centroids);
        history.push(objective(points, &labels, &centroids));
        if !changed {
            converged = true;
            break;
        }
    }
    Ok(KMeansFit {
        labels,
        centroids,
        objective_history: history,
        converged,
    })
}

pub fn kmeans_fit(points: ArrayView2<'_, f64>, k: usize, seed: u64, max_iter: usize) -> Result<KMeansFit> {
    check_k(points.nrows(), k)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = plus_plus(points, k, &mut rng);
    Ok(lloyd(points, init, max_iter, None).expect("unconstrained pass never fails"))
}

/// COP-Kmeans. Each pass visits points in row order and gives each the nearest
/// centroid that no already-assigned cannot-link partner occupies. A pass
/// with a stuck point restarts from a fresh seeding drawn from the same
/// stream, up to `restarts` attempts in total.
pub fn cop_kmeans_fit(
    points: ArrayView2<'_, f64>,
    k: usize,
    links: &CannotLinks,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansFit> {
    check_k(points.nrows(), k)?;
    if links.len() != points.nrows() {
        return Err(Error::invalid(format!(
            "cannot-link set covers {} points, data has {}",
            links.len(),
            points.nrows()
        )));
    }
    let attempts = restarts.max(1);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for _ in 0..attempts {
        let init = plus_plus(points, k, &mut rng);
        if let Ok(fit) = lloyd(points, init, max_iter, Some(links)) {
            return Ok(fit);
        }
    }
    Err(Error::Infeasible { attempts })
}

pub fn kmeans(set: &EmbeddingSet, k: usize, seed: u64, max_iter: usize) -> Result<ClusterAssignment> {
    let fit = kmeans_fit(set.vectors().view(), k, seed, max_iter)?;
    Ok(ClusterAssignment::from_cluster_ids(set.index_map(), &fit.labels))
}

pub fn cop_kmeans(
    set: &EmbeddingSet,
    k: usize,
    links: &CannotLinks,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<ClusterAssignment> {
    let fit = cop_kmeans_fit(set.vectors().view(), k, links, seed, max_iter, restarts)?;
    Ok(ClusterAssignment::from_cluster_ids(set.index_map(), &fit.labels))
}

/// Best of `restarts` k-means runs with seeds `seed, seed + 1, ...`.
pub(crate) fn kmeans_best_of(
    points: ArrayView2<'_, f64>,
    k: usize,
    seed: u64,
    max_iter: usize,
    restarts: usize,
) -> Result<KMeansFit> {
    let mut best: Option<KMeansFit> = None;
    for r in 0..restarts.max(1) as u64 {
        let fit = kmeans_fit(points, k, seed.wrapping_add(r), max_iter)?;
        if best.as_ref().is_none_or(|b| fit.objective() < b.objective()) {
            best = Some(fit);
        }
    }
    Ok(best.expect("at least one run"))
}
