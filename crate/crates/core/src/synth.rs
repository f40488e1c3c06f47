//! Synthetic block-level front-end output with a known ground truth.
//!
//! All randomness comes from one `ChaCha8Rng::seed_from_u64(seed)` stream,
//! consumed in a fixed order: speaker centroids, then per block the present
//! speakers, turn layout, overlaps, slot order, embeddings and posterior
//! noise.

use std::collections::BTreeMap;

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::recording::{BlockRecord, ClusterAssignment, EmbeddingIndex, Label, Recording};
use crate::scoring::ReferenceAnnotation;
use crate::stitch::{Segment, SegmentList};

const CENTROID_ATTEMPTS: usize = 10_000;
const MAX_TRAILING_GAP: f64 = 0.3;
const OVERLAP_SHARE: f64 = 0.25;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub recording_id: String,
    pub num_speakers: usize,
    pub num_blocks: usize,
    pub frames_per_block: usize,
    pub s_local: usize,
    pub embedding_dim: usize,
    pub frame_duration: f64,
    pub inter_speaker_distance: f64,
    /// Expected norm of the embedding noise; each coordinate gets
    /// `intra_speaker_stddev / sqrt(embedding_dim)`.
    pub intra_speaker_stddev: f64,
    pub posterior_noise_stddev: f64,
    /// Chance that a speaker is present in a block.
    pub speaker_activity_prob: f64,
    pub overlap_prob: f64,
    /// Speaker `g` is present with probability
    /// `speaker_activity_prob * (g + 1)^-activity_skew`.
    pub activity_skew: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            recording_id: "rec0".into(),
            num_speakers: 3,
            num_blocks: 20,
            frames_per_block: 300,
            s_local: 3,
            embedding_dim: 16,
            frame_duration: 0.1,
            inter_speaker_distance: 2.0,
            intra_speaker_stddev: 0.2,
            posterior_noise_stddev: 0.05,
            speaker_activity_prob: 0.6,
            overlap_prob: 0.1,
            activity_skew: 0.0,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::invalid(m));
        if self.recording_id.is_empty() || self.recording_id.chars().any(char::is_whitespace) {
            return bad(format!("bad recording id {:?}", self.recording_id));
        }
        if self.num_speakers == 0 || self.num_blocks == 0 || self.s_local == 0 || self.embedding_dim == 0 {
            return bad("speakers, blocks, s_local and embedding_dim must be >= 1".into());
        }
        if self.frames_per_block < 2 * self.s_local {
            return bad(format!(
                "frames_per_block {} too short for {} slots",
                self.frames_per_block, self.s_local
            ));
        }
        if self.num_blocks * self.s_local < self.num_speakers {
            return bad(format!(
                "{} blocks of {} slots cannot hold {} speakers",
                self.num_blocks, self.s_local, self.num_speakers
            ));
        }
        if !(self.frame_duration > 0.0 && self.frame_duration.is_finite()) {
            return bad(format!("frame_duration must be > 0, got {}", self.frame_duration));
        }
        for (name, v) in [
            ("inter_speaker_distance", self.inter_speaker_distance),
            ("intra_speaker_stddev", self.intra_speaker_stddev),
            ("posterior_noise_stddev", self.posterior_noise_stddev),
            ("activity_skew", self.activity_skew),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be finite and >= 0, got {v}"));
            }
        }
        for (name, v) in [
            ("speaker_activity_prob", self.speaker_activity_prob),
            ("overlap_prob", self.overlap_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} must be in [0, 1], got {v}"));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthRecording {
    pub recording: Recording,
    pub reference: ReferenceAnnotation,
    /// Generating speaker of every slot; speakers absent from a block leave
    /// their slot `Silent`.
    pub truth: ClusterAssignment,
    pub centroids: Array2<f64>,
}

/// Reference label of generating speaker `g`.
pub fn reference_label(g: usize) -> String {
    format!("ref{g}")
}

fn unit_vector(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(rng)).collect();
        let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if norm > 1e-12 {
            return v.into_iter().map(|x| x / norm).collect();
        }
    }
}

/// Centroids on the sphere of radius `distance`, pairwise at least
/// `distance` apart.
fn place_centroids(rng: &mut ChaCha8Rng, cfg: &SynthConfig) -> Result<Array2<f64>> {
    let (k, dim, d) = (cfg.num_speakers, cfg.embedding_dim, cfg.inter_speaker_distance);
    let mut out: Vec<Vec<f64>> = Vec::with_capacity(k);
    for _ in 0..k {
        let mut placed = false;
        for _ in 0..CENTROID_ATTEMPTS {
            let c: Vec<f64> = unit_vector(rng, dim).into_iter().map(|x| x * d).collect();
            let ok = out.iter().all(|o| {
                o.iter().zip(&c).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt() >= d
            });
            if ok {
                out.push(c);
                placed = true;
                break;
            }
        }
        if !placed {
            return Err(Error::ImpossibleGeometry {
                speakers: k,
                distance: d,
                dim,
            });
        }
    }
    Ok(Array2::from_shape_fn((k, dim), |(i, j)| out[i][j]))
}

// Speakers present in block `b`: the round-robin mandatory ones, plus a
// random draw capped at `s_local`, never empty.
fn present_speakers(rng: &mut ChaCha8Rng, cfg: &SynthConfig, b: usize) -> Vec<usize> {
    let mut mandatory: Vec<usize> = (0..cfg.num_speakers).filter(|g| g % cfg.num_blocks == b).collect();
    let mut optional: Vec<usize> = (0..cfg.num_speakers)
        .filter(|g| g % cfg.num_blocks != b)
        .filter(|&g| {
            let p = cfg.speaker_activity_prob * ((g + 1) as f64).powf(-cfg.activity_skew);
            rng.random::<f64>() < p
        })
        .collect();
    optional.shuffle(rng);
    optional.truncate(cfg.s_local - mandatory.len());
    mandatory.extend(optional);
    if mandatory.is_empty() {
        mandatory.push(rng.random_range(0..cfg.num_speakers));
    }
    mandatory.sort_unstable();
    mandatory
}

// Frame activity of the present speakers, `frames x present.len()`.
fn block_activity(rng: &mut ChaCha8Rng, cfg: &SynthConfig, present: usize) -> Array2<f32> {
    let frames = cfg.frames_per_block;
    let per_speaker = if frames >= 4 * present { 2 } else { 1 };
    let turns = present * per_speaker;
    let mut order: Vec<usize> = (0..present).flat_map(|p| std::iter::repeat_n(p, per_speaker)).collect();
    order.shuffle(rng);
    let mut act = Array2::<f32>::zeros((frames, present));
    for (i, &who) in order.iter().enumerate() {
        let start = i * frames / turns;
        let end = (i + 1) * frames / turns;
        let len = end - start;
        let gap = (rng.random::<f64>() * MAX_TRAILING_GAP * len as f64).floor() as usize;
        let speech_end = end - gap.min(len - 1);
        for t in start..speech_end {
            act[[t, who]] = 1.0;
        }
        if present > 1 && rng.random::<f64>() < cfg.overlap_prob {
            let mut other = rng.random_range(0..present - 1);
            if other >= who {
                other += 1;
            }
            let span = ((speech_end - start) as f64 * OVERLAP_SHARE).ceil() as usize;
            for t in speech_end - span..speech_end {
                act[[t, other]] = 1.0;
            }
        }
    }
    act
}

fn runs_to_segments(truth: &Array2<f32>, frame_duration: f64) -> Result<SegmentList> {
    let mut segments = Vec::new();
    for (g, col) in truth.columns().into_iter().enumerate() {
        let mut start = None;
        for t in 0..=col.len() {
            let on = t < col.len() && col[t] > 0.5;
            match (on, start) {
                (true, None) => start = Some(t),
                (false, Some(s)) => {
                    segments.push(Segment::new(
                        reference_label(g),
                        s as f64 * frame_duration,
                        (t - s) as f64 * frame_duration,
                    ));
                    start = None;
                }
                _ => {}
            }
        }
    }
    SegmentList::new(segments)
}

pub fn generate_recording(cfg: &SynthConfig) -> Result<SynthRecording> {
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let centroids = place_centroids(&mut rng, cfg)?;
    let (frames, s_local, dim) = (cfg.frames_per_block, cfg.s_local, cfg.embedding_dim);
    let outlier_radius = 4.0 * cfg.inter_speaker_distance.max(1.0);
    let emb_noise = Normal::new(0.0, cfg.intra_speaker_stddev / (dim as f64).sqrt()).expect("stddev >= 0");
    let post_noise = Normal::new(0.0, cfg.posterior_noise_stddev).expect("stddev >= 0");

    let mut global = Array2::<f32>::zeros((frames * cfg.num_blocks, cfg.num_speakers));
    let mut blocks = Vec::with_capacity(cfg.num_blocks);
    let mut labels = BTreeMap::new();
    for b in 0..cfg.num_blocks {
        let present = present_speakers(&mut rng, cfg, b);
        let act = block_activity(&mut rng, cfg, present.len());
        let mut slots: Vec<Option<usize>> = (0..s_local).map(|i| present.get(i).copied()).collect();
        slots.shuffle(&mut rng);

        let mut embeddings = Array2::<f32>::zeros((s_local, dim));
        let mut posteriors = Array2::<f32>::zeros((frames, s_local));
        for (slot, who) in slots.iter().enumerate() {
            let idx = EmbeddingIndex::new(b, slot);
            match who {
                Some(g) => {
                    for j in 0..dim {
                        embeddings[[slot, j]] = (centroids[[*g, j]] + emb_noise.sample(&mut rng)) as f32;
                    }
                    labels.insert(idx, Label::Speaker(*g));
                }
                None => {
                    let dir = unit_vector(&mut rng, dim);
                    for j in 0..dim {
                        embeddings[[slot, j]] = (dir[j] * outlier_radius) as f32;
                    }
                    labels.insert(idx, Label::Silent);
                }
            }
        }
        for t in 0..frames {
            for (slot, who) in slots.iter().enumerate() {
                let clean = who.map_or(0.0, |g| {
                    let p = present.iter().position(|&x| x == g).expect("present");
                    f64::from(act[[t, p]])
                });
                if let Some(g) = who {
                    global[[b * frames + t, *g]] = clean as f32;
                }
                let noisy = if cfg.posterior_noise_stddev > 0.0 {
                    (clean + post_noise.sample(&mut rng)).clamp(0.0, 1.0)
                } else {
                    clean
                };
                posteriors[[t, slot]] = noisy as f32;
            }
        }
        blocks.push(BlockRecord {
            recording_id: cfg.recording_id.clone(),
            block_index: b,
            start_time: (b * frames) as f64 * cfg.frame_duration,
            posteriors,
            embeddings,
        });
    }
    let reference = ReferenceAnnotation {
        recording_id: cfg.recording_id.clone(),
        segments: runs_to_segments(&global, cfg.frame_duration)?,
        num_speakers: cfg.num_speakers,
    };
    Ok(SynthRecording {
        recording: Recording::new(cfg.recording_id.clone(), cfg.frame_duration, blocks),
        reference,
        truth: ClusterAssignment::new(labels, cfg.num_speakers)?,
        centroids,
    })
}
