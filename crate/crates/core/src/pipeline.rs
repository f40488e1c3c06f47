//! End-to-end processing of one recording: validate, drop silent slots,
//! cluster, stitch, binarize.

use std::fmt::Write as _;

use crate::clustering::{cluster, Algorithm, ClusteringParams, SpeakerCount};
use crate::error::{Error, Result};
use crate::recording::{validate_recording, ClusterAssignment, Label, Recording};
use crate::scoring::{DerConfig, ReferenceAnnotation};
use crate::silence::{detect_silent_speakers, SilenceMask, DEFAULT_TAU};
use crate::stitch::{
    binarize_to_segments, stitch, SegmentList, SpeakerActivity, DEFAULT_MIN_SEGMENT_DURATION,
    DEFAULT_POSTERIOR_THRESHOLD,
};

/// Source of the speaker count.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CountMode {
    /// Number of speakers in the reference.
    FromReference,
    Oracle(usize),
    Estimate,
}

impl std::str::FromStr for CountMode {
    type Err = Error;

    /// `oracle`, `oracle:<K>` or `estimate`.
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "oracle" => Ok(CountMode::FromReference),
            "estimate" => Ok(CountMode::Estimate),
            _ => match s.strip_prefix("oracle:").map(str::parse::<usize>) {
                Some(Ok(k)) if k >= 1 => Ok(CountMode::Oracle(k)),
                _ => Err(Error::invalid(format!(
                    "speaker count must be 'oracle', 'oracle:<K>' with K >= 1, or 'estimate', got '{s}'"
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineConfig {
    pub algorithm: Algorithm,
    pub count: CountMode,
    pub tau: f64,
    pub clustering: ClusteringParams,
    pub posterior_threshold: f64,
    pub min_segment_duration: f64,
    /// Scoring setup the oracle optimizes for.
    pub der: DerConfig,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::ConstrainedAhc,
            count: CountMode::FromReference,
            tau: DEFAULT_TAU,
            clustering: ClusteringParams::default(),
            posterior_threshold: DEFAULT_POSTERIOR_THRESHOLD,
            min_segment_duration: DEFAULT_MIN_SEGMENT_DURATION,
            der: DerConfig::default(),
        }
    }
}

impl PipelineConfig {
    pub fn needs_reference(&self) -> bool {
        self.algorithm == Algorithm::Oracle || self.count == CountMode::FromReference
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Diarization {
    pub mask: SilenceMask,
    pub assignment: ClusterAssignment,
    pub activity: SpeakerActivity,
    pub segments: SegmentList,
    /// Number of non-empty speaker clusters.
    pub num_speakers: usize,
}

pub fn diarize(
    rec: &Recording,
    cfg: &PipelineConfig,
    reference: Option<&ReferenceAnnotation>,
) -> Result<Diarization> {
    let id = &rec.recording_id;
    let shape = validate_recording(rec)?;
    log::info!(
        "{id}: validated {} blocks of {} frames, s_local {}",
        shape.num_blocks,
        shape.frames_per_block,
        shape.s_local
    );
    let mask = detect_silent_speakers(&rec.blocks, cfg.tau)?;
    let active = mask.num_active();
    log::info!("{id}: {active} active slots, {} silent", mask.entries().len() - active);

    if cfg.needs_reference() && reference.is_none() {
        return Err(Error::invalid(format!("{id}: no reference for oracle count or oracle clustering")));
    }
    let assignment = if active == 0 {
        log::warn!("{id}: every slot is silent; output is empty");
        ClusterAssignment::default().with_silent(mask.silent_slots())
    } else {
        let count = match cfg.count {
            CountMode::Estimate => SpeakerCount::Estimate,
            CountMode::Oracle(k) => SpeakerCount::Oracle(k),
            CountMode::FromReference => {
                SpeakerCount::Oracle(reference.expect("checked above").num_speakers.max(1))
            }
        };
        let count = match count {
            SpeakerCount::Oracle(k) if k > active => {
                log::warn!("{id}: speaker count {k} exceeds {active} active slots; using {active}");
                SpeakerCount::Oracle(active)
            }
            c => c,
        };
        let mut params = cfg.clustering;
        params.oracle.posterior_threshold = cfg.posterior_threshold;
        params.oracle.der = cfg.der;
        cluster(rec, &mask, cfg.algorithm, count, &params, reference)?
    };
    let num_speakers = assignment.clusters().iter().filter(|c| !c.is_empty()).count();
    log::info!("{id}: {} clustered into {num_speakers} speakers", cfg.algorithm);

    let activity = stitch(rec, &assignment)?;
    let segments = binarize_to_segments(&activity, cfg.posterior_threshold, cfg.min_segment_duration)?;
    log::info!("{id}: {} segments", segments.len());
    Ok(Diarization {
        mask,
        assignment,
        activity,
        segments,
        num_speakers,
    })
}

/// One line per slot: `<recording> <block> <slot> <speaker>|SILENT`.
pub fn assignment_report(recording_id: &str, assignment: &ClusterAssignment) -> String {
    let mut out = String::new();
    for (idx, label) in assignment.labels() {
        let label = match label {
            Label::Speaker(g) => crate::stitch::speaker_label(*g),
            Label::Silent => "SILENT".to_string(),
        };
        writeln!(out, "{recording_id} {} {} {label}", idx.block, idx.slot).expect("writing to a String");
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scoring::compute_der;
    use crate::synth::{generate_recording, SynthConfig};

    fn clean(seed: u64) -> crate::synth::SynthRecording {
        generate_recording(&SynthConfig {
            num_blocks: 6,
            frames_per_block: 60,
            intra_speaker_stddev: 0.0,
            posterior_noise_stddev: 0.0,
            seed,
            ..SynthConfig::default()
        })
        .unwrap()
    }

    #[test]
    fn count_mode_parsing() {
        assert_eq!("oracle".parse::<CountMode>().unwrap(), CountMode::FromReference);
        assert_eq!("oracle:4".parse::<CountMode>().unwrap(), CountMode::Oracle(4));
        assert_eq!("estimate".parse::<CountMode>().unwrap(), CountMode::Estimate);
        for bad in ["oracle:0", "oracle:x", "guess", ""] {
            assert!(bad.parse::<CountMode>().is_err(), "{bad}");
        }
    }

    #[test]
    fn clean_cahc_scores_zero() {
        let s = clean(3);
        let d = diarize(&s.recording, &PipelineConfig::default(), Some(&s.reference)).unwrap();
        assert!(d.assignment.same_partition(&s.truth));
        let der = compute_der(&d.segments, &s.reference, &DerConfig::default()).unwrap();
        assert_eq!(der.der, 0.0);
    }

    #[test]
    fn oracle_not_worse_than_cahc() {
        let s = generate_recording(&SynthConfig {
            num_blocks: 6,
            frames_per_block: 60,
            intra_speaker_stddev: 1.5,
            seed: 9,
            ..SynthConfig::default()
        })
        .unwrap();
        let score = |algorithm| {
            let cfg = PipelineConfig {
                algorithm,
                ..PipelineConfig::default()
            };
            let d = diarize(&s.recording, &cfg, Some(&s.reference)).unwrap();
            compute_der(&d.segments, &s.reference, &cfg.der).unwrap().der
        };
        assert!(score(Algorithm::Oracle) <= score(Algorithm::ConstrainedAhc));
    }

    #[test]
    fn count_clamped_to_active_slots() {
        let s = clean(4);
        let cfg = PipelineConfig {
            count: CountMode::Oracle(1000),
            ..PipelineConfig::default()
        };
        let d = diarize(&s.recording, &cfg, None).unwrap();
        assert_eq!(d.num_speakers, d.mask.num_active());
    }

    #[test]
    fn missing_reference_is_an_error() {
        let s = clean(5);
        assert!(diarize(&s.recording, &PipelineConfig::default(), None).is_err());
    }

    #[test]
    fn all_silent() {
        let s = clean(6);
        let cfg = PipelineConfig {
            tau: 1.5,
            ..PipelineConfig::default()
        };
        let d = diarize(&s.recording, &cfg, Some(&s.reference)).unwrap();
        assert!(d.segments.is_empty());
        assert_eq!(d.num_speakers, 0);
    }

    #[test]
    fn report_lines() {
        let s = clean(7);
        let d = diarize(&s.recording, &PipelineConfig::default(), Some(&s.reference)).unwrap();
        let report = assignment_report("rec0", &d.assignment);
        assert_eq!(report.lines().count(), 6 * 3);
        assert!(report.lines().all(|l| l.starts_with("rec0 ") && l.split(' ').count() == 4));
    }
}
