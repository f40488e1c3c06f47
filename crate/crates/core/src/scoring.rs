//! Diarization error rate.
//!
//! Scoring is time-quantized: the timeline is cut into steps of `step`
//! seconds and a step counts as active for a speaker when its center falls
//! inside one of the speaker's segments. Hypothesis speakers are mapped to
//! reference speakers once per recording by maximizing total overlap.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hungarian::max_weight_assignment;
use crate::stitch::SegmentList;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceAnnotation {
    pub recording_id: String,
    pub segments: SegmentList,
    pub num_speakers: usize,
}

impl ReferenceAnnotation {
    pub fn new(recording_id: impl Into<String>, segments: SegmentList) -> Self {
        let num_speakers = segments.speakers().len();
        Self {
            recording_id: recording_id.into(),
            segments,
            num_speakers,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerConfig {
    /// Half-width of the unscored window around each reference boundary.
    pub collar: f64,
    pub score_overlap: bool,
    pub step: f64,
}

impl Default for DerConfig {
    fn default() -> Self {
        Self {
            collar: 0.25,
            score_overlap: true,
            step: 0.01,
        }
    }
}

impl DerConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.collar >= 0.0 && self.collar.is_finite()) {
            return Err(Error::invalid(format!("collar must be >= 0, got {}", self.collar)));
        }
        if !(self.step > 0.0 && self.step.is_finite()) {
            return Err(Error::invalid(format!("step must be > 0, got {}", self.step)));
        }
        Ok(())
    }
}

/// Error totals in steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StepCounts {
    pub missed: u64,
    pub false_alarm: u64,
    pub confusion: u64,
    pub scored: u64,
}

impl StepCounts {
    pub fn errors(&self) -> u64 {
        self.missed + self.false_alarm + self.confusion
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DerBreakdown {
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub scored_speech: f64,
    pub der: f64,
    pub counts: StepCounts,
}

impl DerBreakdown {
    fn from_counts(counts: StepCounts, step: f64) -> Result<Self> {
        if counts.scored == 0 {
            return Err(Error::UndefinedDer);
        }
        Ok(Self {
            missed: counts.missed as f64 * step,
            false_alarm: counts.false_alarm as f64 * step,
            confusion: counts.confusion as f64 * step,
            scored_speech: counts.scored as f64 * step,
            der: counts.errors() as f64 / counts.scored as f64,
            counts,
        })
    }

    pub fn errors(&self) -> f64 {
        self.missed + self.false_alarm + self.confusion
    }
}

pub(crate) fn num_steps(end: f64, step: f64) -> usize {
    (end / step - 1e-9).ceil().max(0.0) as usize
}

/// First step whose center is >= `t`.
fn first_step_at_or_after(t: f64, step: f64) -> usize {
    (t / step - 0.5).ceil().max(0.0) as usize
}

/// Per-speaker step activity; speakers in sorted label order.
pub(crate) fn rasterize(segments: &SegmentList, step: f64, n: usize) -> (Vec<String>, Vec<Vec<bool>>) {
    let labels: Vec<String> = segments.speakers().into_iter().map(str::to_owned).collect();
    let index: BTreeMap<&str, usize> = labels.iter().enumerate().map(|(i, l)| (l.as_str(), i)).collect();
    let mut raster = vec![vec![false; n]; labels.len()];
    for seg in segments.segments() {
        let row = &mut raster[index[seg.speaker.as_str()]];
        let lo = first_step_at_or_after(seg.onset, step).min(n);
        let hi = first_step_at_or_after(seg.end(), step).min(n);
        row[lo..hi].iter_mut().for_each(|x| *x = true);
    }
    (labels, raster)
}

/// Steps that are scored: outside every collar and, unless overlap is
/// scored, with at most one reference speaker.
pub(crate) fn scored_mask(reference: &SegmentList, ref_raster: &[Vec<bool>], cfg: &DerConfig, n: usize) -> Vec<bool> {
    let mut mask = vec![true; n];
    if cfg.collar > 0.0 {
        for seg in reference.segments() {
            for boundary in [seg.onset, seg.end()] {
                // exclude steps with center strictly inside (b - collar, b + collar)
                let lo = ((boundary - cfg.collar) / cfg.step - 0.5).floor() + 1.0;
                let lo = lo.max(0.0) as usize;
                let hi = first_step_at_or_after(boundary + cfg.collar, cfg.step).min(n);
                for m in mask.iter_mut().take(hi).skip(lo) {
                    *m = false;
                }
            }
        }
    }
    if !cfg.score_overlap {
        for (k, m) in mask.iter_mut().enumerate() {
            if ref_raster.iter().filter(|r| r[k]).count() > 1 {
                *m = false;
            }
        }
    }
    mask
}

/// Per-step error given counts of reference, hypothesis and correctly
/// mapped speakers: `(missed, false_alarm, confusion)`.
pub(crate) fn step_errors(n_ref: u64, n_hyp: u64, n_correct: u64) -> (u64, u64, u64) {
    (
        n_ref.saturating_sub(n_hyp),
        n_hyp.saturating_sub(n_ref),
        n_ref.min(n_hyp) - n_correct,
    )
}

pub fn compute_der(hyp: &SegmentList, reference: &ReferenceAnnotation, cfg: &DerConfig) -> Result<DerBreakdown> {
    cfg.validate()?;
    let n = num_steps(hyp.end().max(reference.segments.end()), cfg.step);
    let (_, ref_raster) = rasterize(&reference.segments, cfg.step, n);
    let (_, hyp_raster) = rasterize(hyp, cfg.step, n);
    let mask = scored_mask(&reference.segments, &ref_raster, cfg, n);

    let mut overlap = Array2::<f64>::zeros((hyp_raster.len(), ref_raster.len()));
    for (h, hr) in hyp_raster.iter().enumerate() {
        for (r, rr) in ref_raster.iter().enumerate() {
            overlap[[h, r]] = (0..n).filter(|&k| mask[k] && hr[k] && rr[k]).count() as f64;
        }
    }
    let mapping = max_weight_assignment(overlap.view());

    let mut counts = StepCounts::default();
    for k in (0..n).filter(|&k| mask[k]) {
        let n_ref = ref_raster.iter().filter(|r| r[k]).count() as u64;
        let n_hyp = hyp_raster.iter().filter(|h| h[k]).count() as u64;
        let n_correct = mapping
            .iter()
            .enumerate()
            .filter(|(h, r)| r.is_some_and(|r| hyp_raster[*h][k] && ref_raster[r][k]))
            .count() as u64;
        let (m, f, c) = step_errors(n_ref, n_hyp, n_correct);
        counts.missed += m;
        counts.false_alarm += f;
        counts.confusion += c;
        counts.scored += n_ref;
    }
    DerBreakdown::from_counts(counts, cfg.step)
}

/// One scored recording, as input to [`report_by_speaker_count`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredRecording {
    pub recording_id: String,
    pub breakdown: DerBreakdown,
    pub ref_speakers: usize,
}

/// Pooled error and speech time for a group of recordings.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct PooledDer {
    pub recordings: usize,
    pub missed: f64,
    pub false_alarm: f64,
    pub confusion: f64,
    pub scored_speech: f64,
}

impl PooledDer {
    fn add(&mut self, b: &DerBreakdown) {
        self.recordings += 1;
        self.missed += b.missed;
        self.false_alarm += b.false_alarm;
        self.confusion += b.confusion;
        self.scored_speech += b.scored_speech;
    }

    pub fn der(&self) -> f64 {
        (self.missed + self.false_alarm + self.confusion) / self.scored_speech
    }
}

/// DER per reference speaker count plus the pooled "All" column.
#[derive(Debug, Clone, PartialEq)]
pub struct DerTable {
    pub by_count: BTreeMap<usize, PooledDer>,
    pub all: PooledDer,
}

pub fn report_by_speaker_count(results: &[ScoredRecording]) -> Result<DerTable> {
    if results.is_empty() {
        return Err(Error::invalid("no scored recordings"));
    }
    let mut by_count: BTreeMap<usize, PooledDer> = BTreeMap::new();
    let mut all = PooledDer::default();
    for r in results {
        by_count.entry(r.ref_speakers).or_default().add(&r.breakdown);
        all.add(&r.breakdown);
    }
    Ok(DerTable { by_count, all })
}

impl fmt::Display for DerTable {
    /// Aligned text: one column per speaker count plus "All", DER in percent.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut header = format!("{:<14}", "# speakers");
        let mut recs = format!("{:<14}", "recordings");
        let mut ders = format!("{:<14}", "DER (%)");
        let mut parts = [
            format!("{:<14}", "missed (%)"),
            format!("{:<14}", "false al. (%)"),
            format!("{:<14}", "confusion (%)"),
        ];
        let columns = self
            .by_count
            .iter()
            .map(|(k, p)| (k.to_string(), p))
            .chain(std::iter::once(("All".to_string(), &self.all)));
        for (name, p) in columns {
            header += &format!("{name:>9}");
            recs += &format!("{:>9}", p.recordings);
            ders += &format!("{:>9.2}", 100.0 * p.der());
            for (line, v) in parts.iter_mut().zip([p.missed, p.false_alarm, p.confusion]) {
                *line += &format!("{:>9.2}", 100.0 * v / p.scored_speech);
            }
        }
        writeln!(f, "{header}")?;
        writeln!(f, "{recs}")?;
        writeln!(f, "{ders}")?;
        for line in parts {
            writeln!(f, "{line}")?;
        }
        Ok(())
    }
}

/// Tab-separated per-recording rows with a header line.
pub fn format_rows(results: &[ScoredRecording]) -> String {
    let mut out = String::from("recording\tref_speakers\tmissed\tfalse_alarm\tconfusion\tscored_speech\tder\n");
    for r in results {
        let b = &r.breakdown;
        out += &format!(
            "{}\t{}\t{:.3}\t{:.3}\t{:.3}\t{:.3}\t{:.6}\n",
            r.recording_id, r.ref_speakers, b.missed, b.false_alarm, b.confusion, b.scored_speech, b.der
        );
    }
    out
}

/// Counts of `(reference K, estimated K)` pairs and the exact-match rate.
#[derive(Debug, Clone, PartialEq)]
pub struct CountingReport {
    pub confusion: BTreeMap<(usize, usize), usize>,
    pub total: usize,
    pub correct: usize,
}

impl CountingReport {
    pub fn accuracy(&self) -> f64 {
        self.correct as f64 / self.total as f64
    }
}

/// `results` holds `(estimated, reference)` pairs.
pub fn speaker_counting_accuracy(results: &[(usize, usize)]) -> Result<CountingReport> {
    if results.is_empty() {
        return Err(Error::invalid("no speaker-count results"));
    }
    let mut confusion = BTreeMap::new();
    for &(est, reference) in results {
        *confusion.entry((reference, est)).or_insert(0) += 1;
    }
    let correct = results.iter().filter(|(e, r)| e == r).count();
    Ok(CountingReport {
        confusion,
        total: results.len(),
        correct,
    })
}

impl fmt::Display for CountingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:>6} {:>6} {:>6}", "ref", "est", "count")?;
        for ((r, e), c) in &self.confusion {
            writeln!(f, "{r:>6} {e:>6} {c:>6}")?;
        }
        writeln!(f, "accuracy {:.4} ({}/{})", self.accuracy(), self.correct, self.total)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stitch::Segment;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn segs(v: &[(&str, f64, f64)]) -> SegmentList {
        SegmentList::new(v.iter().map(|&(s, o, d)| Segment::new(s, o, d)).collect()).unwrap()
    }

    fn exact() -> DerConfig {
        DerConfig {
            collar: 0.0,
            score_overlap: true,
            step: 0.01,
        }
    }

    #[test]
    fn identical_is_zero() {
        let r = segs(&[("a", 0.0, 3.0), ("b", 2.5, 2.0), ("a", 6.0, 1.0)]);
        let reference = ReferenceAnnotation::new("x", r.clone());
        for collar in [0.0, 0.1, 0.25, 0.5] {
            let cfg = DerConfig { collar, ..DerConfig::default() };
            let d = compute_der(&r, &reference, &cfg).unwrap();
            assert_eq!(d.der, 0.0);
        }
    }

    #[test]
    fn empty_hypothesis_is_all_missed() {
        let reference = ReferenceAnnotation::new("x", segs(&[("a", 0.0, 4.0), ("b", 5.0, 6.0)]));
        let d = compute_der(&SegmentList::empty(), &reference, &exact()).unwrap();
        assert!((d.missed - 10.0).abs() < 1e-9);
        assert_eq!(d.der, 1.0);
    }

    #[test]
    fn relabeled_hypothesis_scores_the_same() {
        let reference = ReferenceAnnotation::new("x", segs(&[("a", 0.0, 2.0), ("b", 2.0, 2.0)]));
        let d = compute_der(&segs(&[("q", 0.0, 2.0), ("p", 2.0, 1.5)]), &reference, &exact()).unwrap();
        assert!((d.missed - 0.5).abs() < 1e-9);
        assert_eq!(d.confusion, 0.0);
    }

    #[test]
    fn undefined_without_speech() {
        let reference = ReferenceAnnotation::new("x", SegmentList::empty());
        assert!(matches!(
            compute_der(&SegmentList::empty(), &reference, &exact()),
            Err(Error::UndefinedDer)
        ));
    }

    // Brute-force audit: enumerate every one-to-one partial mapping between
    // hypothesis and reference speakers, score each frame directly from
    // the frame labels, keep the minimum total.
    fn audit(hyp: &[Vec<bool>], reference: &[Vec<bool>], frames: usize) -> (u64, u64, u64, u64) {
        fn mappings(h: usize, r: usize) -> Vec<Vec<Option<usize>>> {
            if h == 0 {
                return vec![vec![]];
            }
            let mut out = Vec::new();
            for rest in mappings(h - 1, r) {
                for choice in std::iter::once(None).chain((0..r).map(Some)) {
                    if choice.is_some() && rest.contains(&choice) {
                        continue;
                    }
                    let mut m = rest.clone();
                    m.push(choice);
                    out.push(m);
                }
            }
            out
        }
        let mut best = (u64::MAX, 0, 0, 0, 0);
        for m in mappings(hyp.len(), reference.len()) {
            let (mut miss, mut fa, mut conf, mut scored) = (0u64, 0u64, 0u64, 0u64);
            for t in 0..frames {
                let nr = reference.iter().filter(|r| r[t]).count() as u64;
                let nh = hyp.iter().filter(|h| h[t]).count() as u64;
                let nc = (0..hyp.len()).filter(|&h| hyp[h][t] && m[h].is_some_and(|r| reference[r][t])).count() as u64;
                miss += nr.saturating_sub(nh);
                fa += nh.saturating_sub(nr);
                conf += nr.min(nh) - nc;
                scored += nr;
            }
            if miss + fa + conf < best.0 {
                best = (miss + fa + conf, miss, fa, conf, scored);
            }
        }
        (best.1, best.2, best.3, best.4)
    }

    fn frames_to_segments(rows: &[Vec<bool>], prefix: &str, frame: f64) -> SegmentList {
        let mut out = Vec::new();
        for (s, row) in rows.iter().enumerate() {
            let mut t = 0;
            while t < row.len() {
                if row[t] {
                    let start = t;
                    while t < row.len() && row[t] {
                        t += 1;
                    }
                    out.push(Segment::new(format!("{prefix}{s}"), start as f64 * frame, (t - start) as f64 * frame));
                } else {
                    t += 1;
                }
            }
        }
        SegmentList::new(out).unwrap()
    }

    #[test]
    fn swapped_frame_matches_audit() {
        // 4 frames, speakers a/b; the hypothesis swaps frame 2.
        let r = vec![vec![true, true, false, false], vec![false, false, true, true]];
        let h = vec![vec![true, true, true, false], vec![false, false, false, true]];
        let (m, f, c, s) = audit(&h, &r, 4);
        assert_eq!((m, f, c, s), (0, 0, 1, 4));
        let cfg = DerConfig { collar: 0.0, score_overlap: true, step: 1.0 };
        let d = compute_der(&frames_to_segments(&h, "h", 1.0), &ReferenceAnnotation::new("x", frames_to_segments(&r, "r", 1.0)), &cfg).unwrap();
        assert_eq!(d.counts, StepCounts { missed: 0, false_alarm: 0, confusion: 1, scored: 4 });
        assert_eq!(d.der, 0.25);
    }

    #[test]
    fn random_instances_match_audit() {
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        for _ in 0..30 {
            let frames = rng.random_range(5..60);
            let nr = rng.random_range(1..4);
            let nh = rng.random_range(0..4);
            let gen = |rng: &mut ChaCha8Rng, k: usize| -> Vec<Vec<bool>> {
                (0..k).map(|_| (0..frames).map(|_| rng.random::<f64>() < 0.4).collect()).collect()
            };
            let r = gen(&mut rng, nr);
            let h = gen(&mut rng, nh);
            let (m, f, c, s) = audit(&h, &r, frames);
            if s == 0 {
                continue;
            }
            let cfg = DerConfig { collar: 0.0, score_overlap: true, step: 0.1 };
            let d = compute_der(
                &frames_to_segments(&h, "h", 0.1),
                &ReferenceAnnotation::new("x", frames_to_segments(&r, "r", 0.1)),
                &cfg,
            )
            .unwrap();
            assert_eq!(d.counts, StepCounts { missed: m, false_alarm: f, confusion: c, scored: s });
        }
    }

    #[test]
    fn collar_excludes_boundaries() {
        let reference = ReferenceAnnotation::new("x", segs(&[("a", 1.0, 2.0)]));
        let hyp = segs(&[("h", 1.2, 1.6)]);
        let cfg = DerConfig { collar: 0.25, score_overlap: true, step: 0.01 };
        let d = compute_der(&hyp, &reference, &cfg).unwrap();
        assert_eq!(d.der, 0.0);
        assert!((d.scored_speech - 1.5).abs() < 1e-9);
        let d0 = compute_der(&hyp, &reference, &exact()).unwrap();
        assert!((d0.missed - 0.4).abs() < 1e-9);
    }

    #[test]
    fn overlap_can_be_skipped() {
        let reference = ReferenceAnnotation::new("x", segs(&[("a", 0.0, 2.0), ("b", 1.0, 2.0)]));
        let hyp = segs(&[("h", 0.0, 3.0)]);
        let all = compute_der(&hyp, &reference, &exact()).unwrap();
        assert!((all.missed - 1.0).abs() < 1e-9);
        let cfg = DerConfig { score_overlap: false, ..exact() };
        let no = compute_der(&hyp, &reference, &cfg).unwrap();
        assert!((no.scored_speech - 2.0).abs() < 1e-9);
        assert!((no.confusion - 1.0).abs() < 1e-9);
        assert_eq!(no.missed, 0.0);
    }

    fn scored(id: &str, k: usize, errors: f64, speech: f64) -> ScoredRecording {
        ScoredRecording {
            recording_id: id.into(),
            ref_speakers: k,
            breakdown: DerBreakdown {
                missed: errors,
                false_alarm: 0.0,
                confusion: 0.0,
                scored_speech: speech,
                der: errors / speech,
                counts: StepCounts::default(),
            },
        }
    }

    #[test]
    fn report_single_and_pooled() {
        let t = report_by_speaker_count(&[scored("a", 2, 1.0, 10.0)]).unwrap();
        assert_eq!(t.by_count[&2].der(), 0.1);
        assert_eq!(t.all.der(), 0.1);

        let t = report_by_speaker_count(&[scored("a", 2, 1.0, 10.0), scored("b", 3, 2.0, 10.0)]).unwrap();
        assert!((t.all.der() - 0.15).abs() < 1e-12);

        // mixed durations: pooled = sum errors / sum speech, not a mean of ratios
        let set = [scored("a", 2, 1.0, 10.0), scored("b", 2, 3.0, 30.0), scored("c", 4, 5.0, 20.0)];
        let t = report_by_speaker_count(&set).unwrap();
        assert!((t.by_count[&2].der() - 4.0 / 40.0).abs() < 1e-12);
        assert!((t.all.der() - 9.0 / 60.0).abs() < 1e-12);
        assert!(t.to_string().contains("All"));
        assert!(report_by_speaker_count(&[]).is_err());
    }

    #[test]
    fn counting_accuracy() {
        let r = speaker_counting_accuracy(&[(2, 2), (3, 3), (4, 4)]).unwrap();
        assert_eq!(r.accuracy(), 1.0);
        let r = speaker_counting_accuracy(&[(3, 2), (4, 3)]).unwrap();
        assert_eq!(r.accuracy(), 0.0);
        assert!(r.confusion.keys().all(|(reference, est)| est == &(reference + 1)));
        // tally by hand: correct are (2,2) and (5,5) -> 2 of 5
        let r = speaker_counting_accuracy(&[(2, 2), (3, 2), (5, 5), (4, 6), (2, 3)]).unwrap();
        assert_eq!(r.correct, 2);
        assert_eq!(r.accuracy(), 0.4);
        assert_eq!(r.confusion[&(2, 3)], 1);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;
        use rand::Rng;

        proptest! {
            #[test]
            fn scored_speech_shrinks_with_collar(c1 in 0.0f64..1.0, c2 in 0.0f64..1.0, seed in 0u64..200) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let mut v = Vec::new();
                for s in 0..3 {
                    let mut t = rng.random::<f64>();
                    for _ in 0..4 {
                        let d = 0.2 + rng.random::<f64>() * 2.0;
                        v.push(Segment::new(format!("r{s}"), t, d));
                        t += d + 0.1 + rng.random::<f64>();
                    }
                }
                let reference = ReferenceAnnotation::new("x", SegmentList::new(v).unwrap());
                let (lo, hi) = if c1 <= c2 { (c1, c2) } else { (c2, c1) };
                let hyp = SegmentList::new(vec![Segment::new("h", 0.0, 5.0)]).unwrap();
                let a = compute_der(&hyp, &reference, &DerConfig { collar: lo, ..DerConfig::default() });
                let b = compute_der(&hyp, &reference, &DerConfig { collar: hi, ..DerConfig::default() });
                if let (Ok(a), Ok(b)) = (a, b) {
                    prop_assert!(b.counts.scored <= a.counts.scored);
                }
            }
        }
    }
}
