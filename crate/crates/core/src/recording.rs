//! Recording and block bookkeeping shared by every other module.
//!
//! A recording is cut into fixed-length blocks. Each block carries the
//! front-end output for `s_local` speaker slots: a `frames x s_local`
//! posterior matrix and one embedding vector per slot.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};

/// Frame timing of a recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FrameGrid {
    pub frame_duration: f64,
    pub frames_per_block: usize,
}

impl FrameGrid {
    pub fn new(frame_duration: f64, frames_per_block: usize) -> Result<Self> {
        if !(frame_duration > 0.0 && frame_duration.is_finite()) {
            return Err(Error::invalid(format!(
                "frame_duration must be positive, got {frame_duration}"
            )));
        }
        if frames_per_block == 0 {
            return Err(Error::invalid("frames_per_block must be at least 1"));
        }
        Ok(Self {
            frame_duration,
            frames_per_block,
        })
    }

    pub fn block_duration(&self) -> f64 {
        self.frame_duration * self.frames_per_block as f64
    }
}

/// One block of front-end output.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockRecord {
    pub recording_id: String,
    pub block_index: usize,
    pub start_time: f64,
    /// `frames x s_local`, values in `[0, 1]`.
    pub posteriors: Array2<f32>,
    /// `s_local x embedding_dim`, one row per slot.
    pub embeddings: Array2<f32>,
}

impl BlockRecord {
    pub fn num_frames(&self) -> usize {
        self.posteriors.nrows()
    }

    pub fn s_local(&self) -> usize {
        self.posteriors.ncols()
    }

    pub fn embedding_dim(&self) -> usize {
        self.embeddings.ncols()
    }
}

/// A recording: an ordered list of blocks on a common frame grid.
#[derive(Debug, Clone, PartialEq)]
pub struct Recording {
    pub recording_id: String,
    pub frame_duration: f64,
    pub blocks: Vec<BlockRecord>,
}

impl Recording {
    pub fn new(
        recording_id: impl Into<String>,
        frame_duration: f64,
        blocks: Vec<BlockRecord>,
    ) -> Self {
        Self {
            recording_id: recording_id.into(),
            frame_duration,
            blocks,
        }
    }

    pub fn total_frames(&self) -> usize {
        self.blocks.iter().map(BlockRecord::num_frames).sum()
    }

    pub fn duration(&self) -> f64 {
        self.total_frames() as f64 * self.frame_duration
    }

    pub fn s_local(&self) -> usize {
        self.blocks.first().map_or(0, BlockRecord::s_local)
    }

    pub fn embedding_dim(&self) -> usize {
        self.blocks.first().map_or(0, BlockRecord::embedding_dim)
    }

    /// Every slot of every block, in (block, slot) order.
    pub fn slots(&self) -> impl Iterator<Item = EmbeddingIndex> + '_ {
        self.blocks.iter().flat_map(|b| {
            (0..b.s_local()).map(move |slot| EmbeddingIndex::new(b.block_index, slot))
        })
    }

    pub fn frame_grid(&self) -> Result<FrameGrid> {
        let frames = self.blocks.first().map_or(0, BlockRecord::num_frames);
        FrameGrid::new(self.frame_duration, frames)
    }
}

/// Identifies one embedding (one output slot of one block).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EmbeddingIndex {
    pub block: usize,
    pub slot: usize,
}

impl EmbeddingIndex {
    pub const fn new(block: usize, slot: usize) -> Self {
        Self { block, slot }
    }
}

impl fmt::Display for EmbeddingIndex {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.block, self.slot)
    }
}

/// Cluster label of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Label {
    Speaker(usize),
    Silent,
}

impl Label {
    pub fn speaker(self) -> Option<usize> {
        match self {
            Label::Speaker(g) => Some(g),
            Label::Silent => None,
        }
    }
}

impl fmt::Display for Label {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Label::Speaker(g) => write!(f, "{g}"),
            Label::Silent => f.write_str("SILENT"),
        }
    }
}

/// Map from slot to global speaker id (or silent).
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ClusterAssignment {
    labels: BTreeMap<EmbeddingIndex, Label>,
    num_speakers: usize,
}

impl ClusterAssignment {
    /// Builds an assignment from raw labels, keeping the ids as given.
    pub fn new(labels: BTreeMap<EmbeddingIndex, Label>, num_speakers: usize) -> Result<Self> {
        if let Some((idx, label)) = labels
            .iter()
            .find(|(_, l)| matches!(l, Label::Speaker(g) if *g >= num_speakers))
        {
            return Err(Error::invalid(format!(
                "slot {idx} has label {label} but num_speakers is {num_speakers}"
            )));
        }
        Ok(Self {
            labels,
            num_speakers,
        })
    }

    /// Builds an assignment from per-row cluster ids, renumbering clusters in
    /// order of first appearance so that equal partitions compare equal.
    pub fn from_cluster_ids(index_map: &[EmbeddingIndex], ids: &[usize]) -> Self {
        assert_eq!(index_map.len(), ids.len());
        let mut renumber = BTreeMap::new();
        let mut labels = BTreeMap::new();
        for (&idx, &id) in index_map.iter().zip(ids) {
            let next = renumber.len();
            let g = *renumber.entry(id).or_insert(next);
            labels.insert(idx, Label::Speaker(g));
        }
        Self {
            labels,
            num_speakers: renumber.len(),
        }
    }

    /// Adds `Silent` labels for the given slots.
    pub fn with_silent(mut self, silent: impl IntoIterator<Item = EmbeddingIndex>) -> Self {
        for idx in silent {
            self.labels.insert(idx, Label::Silent);
        }
        self
    }

    pub fn num_speakers(&self) -> usize {
        self.num_speakers
    }

    pub fn label(&self, idx: EmbeddingIndex) -> Option<Label> {
        self.labels.get(&idx).copied()
    }

    pub fn labels(&self) -> &BTreeMap<EmbeddingIndex, Label> {
        &self.labels
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    /// Non-silent slots grouped by speaker.
    pub fn clusters(&self) -> Vec<Vec<EmbeddingIndex>> {
        let mut out = vec![Vec::new(); self.num_speakers];
        for (&idx, label) in &self.labels {
            if let Label::Speaker(g) = label {
                out[*g].push(idx);
            }
        }
        out
    }

    /// True when both assignments induce the same partition of the same
    /// slots, regardless of speaker numbering.
    pub fn same_partition(&self, other: &ClusterAssignment) -> bool {
        if self.labels.len() != other.labels.len() {
            return false;
        }
        let mut forward = BTreeMap::new();
        let mut backward = BTreeMap::new();
        for ((ia, la), (ib, lb)) in self.labels.iter().zip(&other.labels) {
            if ia != ib {
                return false;
            }
            match (la, lb) {
                (Label::Silent, Label::Silent) => {}
                (Label::Speaker(a), Label::Speaker(b)) => {
                    if *forward.entry(*a).or_insert(*b) != *b
                        || *backward.entry(*b).or_insert(*a) != *a
                    {
                        return false;
                    }
                }
                _ => return false,
            }
        }
        true
    }

    /// Number of pairs of distinct non-silent slots in the same block that
    /// share a speaker.
    pub fn cannot_link_violations(&self) -> usize {
        let mut per_block: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for (idx, label) in &self.labels {
            if let Label::Speaker(g) = label {
                per_block.entry(idx.block).or_default().push(*g);
            }
        }
        per_block
            .values()
            .map(|gs| {
                let mut n = 0;
                for i in 0..gs.len() {
                    for j in i + 1..gs.len() {
                        n += usize::from(gs[i] == gs[j]);
                    }
                }
                n
            })
            .sum()
    }

    /// Checks that exactly the slots of `recording` are covered.
    pub fn check_covers(&self, recording: &Recording) -> Result<()> {
        let expected: BTreeSet<_> = recording.slots().collect();
        if let Some(missing) = expected.iter().find(|i| !self.labels.contains_key(i)) {
            return Err(Error::AssignmentMismatch(format!("slot {missing}")));
        }
        if let Some(extra) = self.labels.keys().find(|i| !expected.contains(i)) {
            return Err(Error::AssignmentMismatch(format!(
                "unknown slot {extra} of recording {}",
                recording.recording_id
            )));
        }
        Ok(())
    }
}

/// One entry of a block plan.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlannedBlock {
    pub block_index: usize,
    pub start_time: f64,
    pub num_frames: usize,
}

/// Tiles `[0, total_duration)` into consecutive non-overlapping blocks.
///
/// Every block holds `block_duration / frame_duration` frames except possibly
/// the last one, which is shorter. The total frame count is
/// `round(total_duration / frame_duration)`, at least one.
pub fn segment_plan(
    total_duration: f64,
    block_duration: f64,
    frame_duration: f64,
) -> Result<Vec<PlannedBlock>> {
    for (name, v) in [
        ("total_duration", total_duration),
        ("block_duration", block_duration),
        ("frame_duration", frame_duration),
    ] {
        if !(v > 0.0 && v.is_finite()) {
            return Err(Error::invalid(format!("{name} must be positive, got {v}")));
        }
    }
    let ratio = block_duration / frame_duration;
    let frames_per_block = ratio.round();
    if frames_per_block < 1.0 || (ratio - frames_per_block).abs() > 1e-6 * ratio.max(1.0) {
        return Err(Error::invalid(format!(
            "block_duration {block_duration} is not an integer multiple of frame_duration {frame_duration}"
        )));
    }
    let frames_per_block = frames_per_block as usize;
    let total_frames = ((total_duration / frame_duration).round() as usize).max(1);

    let plan = (0..total_frames.div_ceil(frames_per_block))
        .map(|i| PlannedBlock {
            block_index: i,
            start_time: i as f64 * block_duration,
            num_frames: frames_per_block.min(total_frames - i * frames_per_block),
        })
        .collect();
    Ok(plan)
}

/// Summary of a validated recording.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RecordingShape {
    pub num_blocks: usize,
    pub frames_per_block: usize,
    pub s_local: usize,
    pub embedding_dim: usize,
}

/// Checks the structural invariants of a recording, reporting the first
/// violation found.
pub fn validate_recording(recording: &Recording) -> Result<RecordingShape> {
    let grid = FrameGrid::new(recording.frame_duration, 1)?;
    let Some(first) = recording.blocks.first() else {
        return Err(Error::invalid(format!(
            "recording {} has no blocks",
            recording.recording_id
        )));
    };
    if recording.recording_id.is_empty()
        || recording.recording_id.chars().any(char::is_whitespace)
    {
        return Err(Error::invalid(format!(
            "recording id {:?} must be non-empty and contain no whitespace",
            recording.recording_id
        )));
    }
    let frames_per_block = first.num_frames();
    let s_local = first.s_local();
    let dim = first.embedding_dim();
    if s_local == 0 {
        return Err(Error::InvalidBlock {
            block: 0,
            message: "no speaker slots".into(),
        });
    }
    if dim == 0 {
        return Err(Error::InvalidBlock {
            block: 0,
            message: "embedding dimension is zero".into(),
        });
    }
    let block_duration = grid.frame_duration * frames_per_block as f64;
    let last = recording.blocks.len() - 1;

    for (pos, block) in recording.blocks.iter().enumerate() {
        let b = block.block_index;
        if block.recording_id != recording.recording_id {
            return Err(Error::InvalidBlock {
                block: b,
                message: format!(
                    "recording id {:?} differs from {:?}",
                    block.recording_id, recording.recording_id
                ),
            });
        }
        if b != pos {
            return Err(Error::InvalidBlock {
                block: b,
                message: format!("found at position {pos}; block indices must be 0..{last} in order"),
            });
        }
        let frames = block.num_frames();
        if frames == 0 {
            return Err(Error::InvalidBlock {
                block: b,
                message: "posterior matrix is empty".into(),
            });
        }
        if frames != frames_per_block && !(pos == last && frames < frames_per_block) {
            return Err(Error::InvalidBlock {
                block: b,
                message: format!("has {frames} frames, expected {frames_per_block}"),
            });
        }
        if block.s_local() != s_local {
            return Err(Error::InvalidBlock {
                block: b,
                message: format!("has {} posterior columns, expected {s_local}", block.s_local()),
            });
        }
        if block.embeddings.nrows() != s_local {
            return Err(Error::InvalidBlock {
                block: b,
                message: format!(
                    "has {} embeddings, expected {s_local}",
                    block.embeddings.nrows()
                ),
            });
        }
        if block.embedding_dim() != dim {
            return Err(Error::DimensionMismatch {
                expected: dim,
                found: block.embedding_dim(),
                block: Some(b),
            });
        }
        let expected_start = b as f64 * block_duration;
        if (block.start_time - expected_start).abs() > 1e-6 * expected_start.max(1.0) {
            return Err(Error::InvalidBlock {
                block: b,
                message: format!(
                    "start_time {} does not match block_index x block_duration = {expected_start}",
                    block.start_time
                ),
            });
        }
        for ((frame, slot), &value) in block.posteriors.indexed_iter() {
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::PosteriorRange {
                    block: b,
                    frame,
                    slot,
                    value,
                });
            }
        }
        if block.embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidBlock {
                block: b,
                message: "embedding contains a non-finite value".into(),
            });
        }
    }
    Ok(RecordingShape {
        num_blocks: recording.blocks.len(),
        frames_per_block,
        s_local,
        embedding_dim: dim,
    })
}
