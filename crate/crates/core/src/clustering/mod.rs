//! Clustering of non-silent slot embeddings into global speakers.

pub mod affinity;
pub mod ahc;
pub mod distance;
pub mod eigen;
pub mod kmeans;
pub mod oracle;
pub mod spectral;

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::recording::{ClusterAssignment, EmbeddingIndex, Recording};
use crate::scoring::ReferenceAnnotation;
use crate::silence::SilenceMask;

pub use affinity::{
    apply_cannot_link_affinity, build_affinity_matrix, build_affinity_matrix_with, AffinityMatrix, Bandwidth,
    DEFAULT_SPECTRAL_BANDWIDTH,
};
pub use ahc::{ahc, average_linkage, constrained_ahc, Dendrogram, StoppingRule, DEFAULT_AHC_THRESHOLD};
pub use distance::{apply_cannot_link_distance, build_distance_matrix, DistanceMatrix, Metric, DEFAULT_KAPPA};
pub use eigen::{symmetric_eigendecomposition, EigenDecomposition};
pub use kmeans::{cop_kmeans, kmeans, DEFAULT_MAX_ITER, DEFAULT_RESTARTS};
pub use oracle::{oracle_clustering, OracleConfig};
pub use spectral::{eigengap_estimate, spectral_clustering, ClusterCount, SpectralResult, DEFAULT_MAX_K};

/// Non-silent embeddings in row order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingSet {
    index_map: Vec<EmbeddingIndex>,
    vectors: Array2<f64>,
}

impl EmbeddingSet {
    pub fn new(index_map: Vec<EmbeddingIndex>, vectors: Array2<f64>) -> Result<Self> {
        if index_map.len() != vectors.nrows() {
            return Err(Error::DimensionMismatch {
                expected: index_map.len(),
                found: vectors.nrows(),
                block: None,
            });
        }
        if vectors.iter().any(|v| !v.is_finite()) {
            return Err(Error::invalid("embeddings must be finite"));
        }
        Ok(Self { index_map, vectors })
    }

    pub fn from_rows(rows: Vec<(EmbeddingIndex, Vec<f64>)>) -> Result<Self> {
        let dim = rows.first().map_or(0, |(_, v)| v.len());
        if let Some((idx, v)) = rows.iter().find(|(_, v)| v.len() != dim) {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: v.len(),
                block: Some(idx.block),
            });
        }
        let vectors = Array2::from_shape_fn((rows.len(), dim), |(i, j)| rows[i].1[j]);
        Self::new(rows.into_iter().map(|(i, _)| i).collect(), vectors)
    }

    /// The embeddings of every slot the mask marks active.
    pub fn from_recording(rec: &Recording, mask: &SilenceMask) -> Self {
        let dim = rec.embedding_dim();
        let index_map: Vec<EmbeddingIndex> = rec.slots().filter(|&i| !mask.is_silent(i)).collect();
        let vectors = Array2::from_shape_fn((index_map.len(), dim), |(r, c)| {
            let idx = index_map[r];
            f64::from(rec.blocks[idx.block].embeddings[[idx.slot, c]])
        });
        Self { index_map, vectors }
    }

    pub fn len(&self) -> usize {
        self.index_map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index_map.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.vectors.ncols()
    }

    pub fn index_map(&self) -> &[EmbeddingIndex] {
        &self.index_map
    }

    pub fn vectors(&self) -> &Array2<f64> {
        &self.vectors
    }

    /// Every pair of rows from the same block.
    pub fn cannot_links(&self) -> CannotLinks {
        CannotLinks::within_blocks(&self.index_map)
    }
}

/// Symmetric cannot-link relation over rows `0..n`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CannotLinks {
    partners: Vec<Vec<usize>>,
}

impl CannotLinks {
    pub fn empty(n: usize) -> Self {
        Self {
            partners: vec![Vec::new(); n],
        }
    }

    pub fn within_blocks(index_map: &[EmbeddingIndex]) -> Self {
        let partners = index_map
            .iter()
            .enumerate()
            .map(|(i, a)| {
                (0..index_map.len())
                    .filter(|&j| j != i && index_map[j].block == a.block)
                    .collect()
            })
            .collect();
        Self { partners }
    }

    pub fn from_pairs(n: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut links = Self::empty(n);
        for &(a, b) in pairs {
            if a >= n || b >= n || a == b {
                return Err(Error::invalid(format!("bad cannot-link pair ({a}, {b}) for {n} points")));
            }
            if !links.partners[a].contains(&b) {
                links.partners[a].push(b);
                links.partners[b].push(a);
            }
        }
        for p in &mut links.partners {
            p.sort_unstable();
        }
        Ok(links)
    }

    pub fn partners(&self, i: usize) -> &[usize] {
        &self.partners[i]
    }

    /// Number of points covered.
    pub fn len(&self) -> usize {
        self.partners.len()
    }

    pub fn is_empty(&self) -> bool {
        self.partners.is_empty()
    }

    /// Each linked pair once, as `(smaller, larger)`.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for (a, ps) in self.partners.iter().enumerate() {
            out.extend(ps.iter().filter(|&&b| b > a).map(|&b| (a, b)));
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Algorithm {
    KMeans,
    CopKMeans,
    Ahc,
    ConstrainedAhc,
    Spectral,
    ConstrainedSpectral,
    Oracle,
}

impl Algorithm {
    pub const ALL: [Algorithm; 7] = [
        Algorithm::KMeans,
        Algorithm::CopKMeans,
        Algorithm::Ahc,
        Algorithm::ConstrainedAhc,
        Algorithm::Spectral,
        Algorithm::ConstrainedSpectral,
        Algorithm::Oracle,
    ];

    /// The six embedding-based algorithms, without the oracle.
    pub const BLIND: [Algorithm; 6] = [
        Algorithm::KMeans,
        Algorithm::CopKMeans,
        Algorithm::Ahc,
        Algorithm::ConstrainedAhc,
        Algorithm::Spectral,
        Algorithm::ConstrainedSpectral,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::KMeans => "kmeans",
            Algorithm::CopKMeans => "cop-kmeans",
            Algorithm::Ahc => "ahc",
            Algorithm::ConstrainedAhc => "cahc",
            Algorithm::Spectral => "sc",
            Algorithm::ConstrainedSpectral => "csc",
            Algorithm::Oracle => "oracle",
        }
    }

    pub fn supports_estimate(self) -> bool {
        !matches!(self, Algorithm::KMeans | Algorithm::CopKMeans)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown algorithm '{s}'")))
    }
}

/// How many global speakers to produce.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SpeakerCount {
    Oracle(usize),
    Estimate,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusteringParams {
    pub kappa: f64,
    pub ahc_threshold: f64,
    pub max_k: usize,
    pub seed: u64,
    pub max_iter: usize,
    pub restarts: usize,
    pub bandwidth: Bandwidth,
    pub metric: Metric,
    pub oracle: OracleConfig,
}

impl Default for ClusteringParams {
    fn default() -> Self {
        Self {
            kappa: DEFAULT_KAPPA,
            ahc_threshold: DEFAULT_AHC_THRESHOLD,
            max_k: DEFAULT_MAX_K,
            seed: 0,
            max_iter: DEFAULT_MAX_ITER,
            restarts: DEFAULT_RESTARTS,
            bandwidth: DEFAULT_SPECTRAL_BANDWIDTH,
            metric: Metric::Euclidean,
            oracle: OracleConfig::default(),
        }
    }
}

/// Runs `algorithm` on the active slots of `rec`. The result labels every
/// slot of the recording, silent ones as `Silent`. `reference` is required
/// by the oracle and ignored otherwise.
pub fn cluster(
    rec: &Recording,
    mask: &SilenceMask,
    algorithm: Algorithm,
    count: SpeakerCount,
    params: &ClusteringParams,
    reference: Option<&ReferenceAnnotation>,
) -> Result<ClusterAssignment> {
    if algorithm == Algorithm::Oracle {
        let reference = reference.ok_or_else(|| Error::invalid("oracle clustering needs a reference"))?;
        return oracle_clustering(rec, mask, reference, &params.oracle);
    }
    if count == SpeakerCount::Estimate && !algorithm.supports_estimate() {
        return Err(Error::invalid(format!("{algorithm} needs an explicit speaker count")));
    }
    let set = EmbeddingSet::from_recording(rec, mask);
    let silent = mask.silent_slots();
    if set.is_empty() {
        return Ok(ClusterAssignment::default().with_silent(silent));
    }
    let assignment = match (algorithm, count) {
        (Algorithm::KMeans, SpeakerCount::Oracle(k)) => kmeans(&set, k, params.seed, params.max_iter)?,
        (Algorithm::CopKMeans, SpeakerCount::Oracle(k)) => {
            cop_kmeans(&set, k, &set.cannot_links(), params.seed, params.max_iter, params.restarts)?
        }
        (Algorithm::Ahc | Algorithm::ConstrainedAhc, count) => {
            let stop = match count {
                SpeakerCount::Oracle(k) => StoppingRule::NumClusters(k),
                SpeakerCount::Estimate => StoppingRule::DistanceThreshold(params.ahc_threshold),
            };
            let d = distance::build_distance_matrix_with(&set, params.metric);
            if algorithm == Algorithm::ConstrainedAhc {
                ahc(&apply_cannot_link_distance(&d, params.kappa)?, stop)?
            } else {
                ahc(&d, stop)?
            }
        }
        (Algorithm::Spectral | Algorithm::ConstrainedSpectral, count) => {
            let d = distance::build_distance_matrix_with(&set, params.metric);
            let mut a = affinity::affinity_from_distances(&d, params.bandwidth)?;
            if algorithm == Algorithm::ConstrainedSpectral {
                a = apply_cannot_link_affinity(&a);
            }
            let count = match count {
                SpeakerCount::Oracle(k) => ClusterCount::Fixed(k),
                SpeakerCount::Estimate => ClusterCount::Eigengap { max_k: params.max_k },
            };
            spectral_clustering(&a, count, params.seed)?.assignment
        }
        (Algorithm::KMeans | Algorithm::CopKMeans, SpeakerCount::Estimate) | (Algorithm::Oracle, _) => {
            unreachable!("handled above")
        }
    };
    Ok(assignment.with_silent(silent))
}
