//! Turning per-block posteriors plus a cluster assignment into one global
//! diarization.

use std::collections::BTreeSet;

use ndarray::{s, Array2};

use crate::error::{Error, Result};
use crate::recording::{BlockRecord, ClusterAssignment, EmbeddingIndex, FrameGrid, Label, Recording};

pub const DEFAULT_POSTERIOR_THRESHOLD: f64 = 0.5;
pub const DEFAULT_MIN_SEGMENT_DURATION: f64 = 0.0;

/// Hypothesis label used for global speaker `g`.
pub fn speaker_label(g: usize) -> String {
    format!("spk{g}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct Segment {
    pub speaker: String,
    pub onset: f64,
    pub duration: f64,
}

impl Segment {
    pub fn new(speaker: impl Into<String>, onset: f64, duration: f64) -> Self {
        Self {
            speaker: speaker.into(),
            onset,
            duration,
        }
    }

    pub fn end(&self) -> f64 {
        self.onset + self.duration
    }
}

/// Speaker segments sorted by `(onset, speaker)`; segments of one speaker
/// never overlap.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SegmentList {
    segments: Vec<Segment>,
}

impl SegmentList {
    pub fn new(mut segments: Vec<Segment>) -> Result<Self> {
        for seg in &segments {
            if seg.speaker.is_empty() || seg.speaker.chars().any(char::is_whitespace) {
                return Err(Error::invalid(format!("bad speaker label {:?}", seg.speaker)));
            }
            if !(seg.onset >= 0.0 && seg.onset.is_finite()) {
                return Err(Error::invalid(format!("segment onset {} must be >= 0", seg.onset)));
            }
            if !(seg.duration > 0.0 && seg.duration.is_finite()) {
                return Err(Error::invalid(format!(
                    "segment duration {} must be > 0",
                    seg.duration
                )));
            }
        }
        segments.sort_by(|a, b| {
            a.onset
                .total_cmp(&b.onset)
                .then_with(|| a.speaker.cmp(&b.speaker))
                .then(a.duration.total_cmp(&b.duration))
        });
        let mut last_end: std::collections::BTreeMap<&str, f64> = Default::default();
        for seg in &segments {
            if let Some(&end) = last_end.get(seg.speaker.as_str()) {
                if seg.onset < end - 1e-9 {
                    return Err(Error::invalid(format!(
                        "speaker {} has overlapping segments at {}",
                        seg.speaker, seg.onset
                    )));
                }
            }
            last_end.insert(&seg.speaker, seg.end());
        }
        Ok(Self { segments })
    }

    pub fn empty() -> Self {
        Self::default()
    }

    pub fn segments(&self) -> &[Segment] {
        &self.segments
    }

    pub fn len(&self) -> usize {
        self.segments.len()
    }

    pub fn is_empty(&self) -> bool {
        self.segments.is_empty()
    }

    pub fn speakers(&self) -> BTreeSet<&str> {
        self.segments.iter().map(|s| s.speaker.as_str()).collect()
    }

    pub fn end(&self) -> f64 {
        self.segments.iter().map(Segment::end).fold(0.0, f64::max)
    }

    pub fn total_duration(&self) -> f64 {
        self.segments.iter().map(|s| s.duration).sum()
    }
}

/// Global per-speaker activity, one row per frame.
#[derive(Debug, Clone, PartialEq)]
pub struct SpeakerActivity {
    pub recording_id: String,
    pub num_speakers: usize,
    pub activity: Array2<f64>,
    pub frame_grid: FrameGrid,
}

/// Column `g` is the framewise maximum over the non-silent slots of `block`
/// assigned to global speaker `g`.
pub fn merge_coassigned_slots(block: &BlockRecord, assignment: &ClusterAssignment) -> Result<Array2<f64>> {
    let mut out = Array2::<f64>::zeros((block.num_frames(), assignment.num_speakers()));
    for slot in 0..block.s_local() {
        let idx = EmbeddingIndex::new(block.block_index, slot);
        match assignment.label(idx) {
            None => return Err(Error::AssignmentMismatch(format!("slot {idx}"))),
            Some(Label::Silent) => {}
            Some(Label::Speaker(g)) => {
                let src = block.posteriors.column(slot);
                let mut dst = out.column_mut(g);
                for (d, &v) in dst.iter_mut().zip(src.iter()) {
                    *d = d.max(f64::from(v));
                }
            }
        }
    }
    Ok(out)
}

/// Concatenates the merged block matrices in block order.
pub fn stitch(recording: &Recording, assignment: &ClusterAssignment) -> Result<SpeakerActivity> {
    assignment.check_covers(recording)?;
    let total = recording.total_frames();
    let mut activity = Array2::<f64>::zeros((total, assignment.num_speakers()));
    let mut offset = 0;
    for block in &recording.blocks {
        let merged = merge_coassigned_slots(block, assignment)?;
        let frames = merged.nrows();
        activity.slice_mut(s![offset..offset + frames, ..]).assign(&merged);
        offset += frames;
    }
    Ok(SpeakerActivity {
        recording_id: recording.recording_id.clone(),
        num_speakers: assignment.num_speakers(),
        activity,
        frame_grid: recording.frame_grid()?,
    })
}

/// Frame runs where activity >= `threshold`, as segments on the frame grid.
///
/// Runs shorter than `min_duration` are dropped. Runs continue across block
/// boundaries.
pub fn binarize_to_segments(
    activity: &SpeakerActivity,
    threshold: f64,
    min_duration: f64,
) -> Result<SegmentList> {
    if !(threshold > 0.0 && threshold < 1.0) {
        return Err(Error::invalid(format!("posterior threshold must be in (0, 1), got {threshold}")));
    }
    if !(min_duration >= 0.0) {
        return Err(Error::invalid(format!("min duration must be >= 0, got {min_duration}")));
    }
    let fd = activity.frame_grid.frame_duration;
    let mut segments = Vec::new();
    for (g, column) in activity.activity.columns().into_iter().enumerate() {
        let mut run_start: Option<usize> = None;
        let frames = column.len();
        for t in 0..=frames {
            let on = t < frames && column[t] >= threshold;
            match (on, run_start) {
                (true, None) => run_start = Some(t),
                (false, Some(start)) => {
                    let duration = (t - start) as f64 * fd;
                    if duration + 1e-9 >= min_duration {
                        segments.push(Segment::new(speaker_label(g), start as f64 * fd, duration));
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    SegmentList::new(segments)
}
