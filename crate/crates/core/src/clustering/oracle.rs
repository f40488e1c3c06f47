//! Oracle clustering: per-block slot-to-speaker mapping chosen against the
//! reference.
//!
//! Each non-silent slot of a block is mapped either to a reference speaker or
//! to a single "unmatched" id. The search minimizes the block's scoring
//! error exactly, on the same step raster, collar and overlap rules the
//! scorer uses, with the slot posteriors binarized the way stitching does.
//! Since the blind algorithms induce some such mapping on every block, the
//! stitched oracle output never scores worse than theirs (for a zero minimum
//! segment duration). Blocks with too many mappings to enumerate fall back to
//! a Hungarian assignment on framewise Hamming cost.

use std::collections::HashMap;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::hungarian::min_cost_assignment;
use crate::recording::{ClusterAssignment, EmbeddingIndex, Recording};
use crate::scoring::{num_steps, rasterize, scored_mask, step_errors, DerConfig, ReferenceAnnotation};
use crate::silence::SilenceMask;
use crate::stitch::DEFAULT_POSTERIOR_THRESHOLD;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OracleConfig {
    pub posterior_threshold: f64,
    pub der: DerConfig,
    /// Largest number of candidate mappings searched exhaustively per block.
    pub max_exhaustive: usize,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            posterior_threshold: DEFAULT_POSTERIOR_THRESHOLD,
            der: DerConfig::default(),
            max_exhaustive: 200_000,
        }
    }
}

// Scored steps of one block, bucketed by (slot activity pattern, reference
// speaker mask).
struct BlockTable {
    slots: Vec<usize>,
    counts: Vec<(u64, u64, u64)>,
}

fn first_step(t: f64, step: f64) -> usize {
    (t / step - 0.5).ceil().max(0.0) as usize
}

pub fn oracle_clustering(
    rec: &Recording,
    mask: &SilenceMask,
    reference: &ReferenceAnnotation,
    cfg: &OracleConfig,
) -> Result<ClusterAssignment> {
    cfg.der.validate()?;
    if !(cfg.posterior_threshold > 0.0 && cfg.posterior_threshold < 1.0) {
        return Err(Error::invalid(format!(
            "posterior threshold must be in (0, 1), got {}",
            cfg.posterior_threshold
        )));
    }
    let step = cfg.der.step;
    let n = num_steps(rec.duration().max(reference.segments.end()), step);
    let (_, ref_raster) = rasterize(&reference.segments, step, n);
    let scored = scored_mask(&reference.segments, &ref_raster, &cfg.der, n);
    let num_ref = ref_raster.len();
    let exact_ok = num_ref < 63;
    let unmatched = num_ref;

    let mut index_map = Vec::new();
    let mut ids = Vec::new();
    let mut frame_offset = 0usize;
    for block in &rec.blocks {
        let slots: Vec<usize> = (0..block.s_local())
            .filter(|&s| !mask.is_silent(EmbeddingIndex::new(block.block_index, s)))
            .collect();
        let frames = block.num_frames();
        // scored steps of each frame, with the reference mask at each
        let mut per_frame: Vec<Vec<u64>> = Vec::with_capacity(frames);
        for t in 0..frames {
            let f = frame_offset + t;
            let lo = first_step(f as f64 * rec.frame_duration, step).min(n);
            let hi = first_step((f + 1) as f64 * rec.frame_duration, step).min(n);
            per_frame.push(
                (lo..hi)
                    .filter(|&k| scored[k])
                    .map(|k| {
                        ref_raster
                            .iter()
                            .enumerate()
                            .filter(|(_, r)| r[k])
                            .fold(0u64, |m, (r, _)| m | (1u64 << r.min(63)))
                    })
                    .collect(),
            );
        }
        let active = |s: usize, t: usize| f64::from(block.posteriors[[t, s]]) >= cfg.posterior_threshold;
        let candidates = (num_ref + 1).checked_pow(slots.len() as u32);
        let mapping = match candidates {
            Some(c) if exact_ok && slots.len() < 64 && c <= cfg.max_exhaustive => {
                let mut table: HashMap<(u64, u64), u64> = HashMap::new();
                for (t, masks) in per_frame.iter().enumerate() {
                    let pattern = slots
                        .iter()
                        .enumerate()
                        .filter(|(_, &s)| active(s, t))
                        .fold(0u64, |p, (i, _)| p | (1 << i));
                    for &m in masks {
                        *table.entry((pattern, m)).or_insert(0) += 1;
                    }
                }
                let table = BlockTable {
                    slots: slots.clone(),
                    counts: table.into_iter().map(|((p, m), c)| (p, m, c)).collect(),
                };
                exhaustive(&table, num_ref)
            }
            _ => {
                log::warn!(
                    "oracle: block {} has {} slots and {} reference speakers; using Hungarian fallback",
                    block.block_index,
                    slots.len(),
                    num_ref
                );
                hamming_fallback(&slots, frames, &per_frame, num_ref, active)
            }
        };
        for (&s, &g) in slots.iter().zip(&mapping) {
            index_map.push(EmbeddingIndex::new(block.block_index, s));
            ids.push(g.min(unmatched));
        }
        frame_offset += frames;
    }
    let assignment = ClusterAssignment::from_cluster_ids(&index_map, &ids);
    Ok(assignment.with_silent(mask.silent_slots()))
}

// Lexicographic enumeration of maps slot -> 0..=num_ref, where num_ref is
// the unmatched id. Ties prefer fewer unmatched slots, then fewer slots
// sharing an id, then the lexicographically first map.
fn exhaustive(table: &BlockTable, num_ref: usize) -> Vec<usize> {
    let n = table.slots.len();
    let choices = num_ref + 1;
    let mut map = vec![0usize; n];
    let mut best: Option<((u64, usize, usize), Vec<usize>)> = None;
    loop {
        let key = score(table, &map, num_ref);
        if best.as_ref().is_none_or(|(b, _)| key < *b) {
            best = Some((key, map.clone()));
        }
        // next map in lexicographic order
        let mut i = n;
        loop {
            if i == 0 {
                return best.map(|(_, m)| m).unwrap_or_default();
            }
            i -= 1;
            map[i] += 1;
            if map[i] < choices {
                break;
            }
            map[i] = 0;
        }
    }
}

fn score(table: &BlockTable, map: &[usize], num_ref: usize) -> (u64, usize, usize) {
    let mut err = 0u64;
    for &(pattern, refmask, count) in &table.counts {
        let mut hyp = 0u64;
        for (i, &g) in map.iter().enumerate() {
            if pattern & (1 << i) != 0 {
                hyp |= 1 << g;
            }
        }
        let (m, f, c) = step_errors(
            u64::from(refmask.count_ones()),
            u64::from(hyp.count_ones()),
            u64::from((hyp & refmask).count_ones()),
        );
        err += (m + f + c) * count;
    }
    let unmatched = map.iter().filter(|&&g| g == num_ref).count();
    let mut shared = 0;
    for i in 0..map.len() {
        for j in i + 1..map.len() {
            shared += usize::from(map[i] == map[j]);
        }
    }
    (err, unmatched, shared)
}

// Slots x (reference speakers + one private unmatched column per slot),
// cost = scored steps where slot and speaker disagree.
fn hamming_fallback(
    slots: &[usize],
    frames: usize,
    per_frame: &[Vec<u64>],
    num_ref: usize,
    active: impl Fn(usize, usize) -> bool,
) -> Vec<usize> {
    let cols = num_ref + slots.len();
    let mut cost = Array2::<f64>::zeros((slots.len(), cols));
    for (i, &s) in slots.iter().enumerate() {
        for (t, masks) in per_frame.iter().enumerate().take(frames) {
            let on = active(s, t);
            for &m in masks {
                for r in 0..num_ref {
                    let ref_on = r < 64 && m & (1 << r.min(63)) != 0;
                    if on != ref_on {
                        cost[[i, r]] += 1.0;
                    }
                }
                if on {
                    for d in 0..slots.len() {
                        cost[[i, num_ref + d]] += 1.0;
                    }
                }
            }
        }
    }
    min_cost_assignment(cost.view())
        .into_iter()
        .map(|c| c.map_or(num_ref, |c| c.min(num_ref)))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::recording::{BlockRecord, Label};
    use crate::scoring::compute_der;
    use crate::silence::detect_silent_speakers;
    use crate::stitch::{binarize_to_segments, stitch, Segment, SegmentList};
    use ndarray::Array2;

    fn block(b: usize, frames: usize, post: impl Fn(usize, usize) -> f32) -> BlockRecord {
        BlockRecord {
            recording_id: "r".into(),
            block_index: b,
            start_time: (b * frames) as f64 * 0.1,
            posteriors: Array2::from_shape_fn((frames, 2), |(t, s)| post(t, s)),
            embeddings: Array2::zeros((2, 2)),
        }
    }

    fn reference(v: &[(&str, f64, f64)]) -> ReferenceAnnotation {
        ReferenceAnnotation::new(
            "r",
            SegmentList::new(v.iter().map(|&(s, o, d)| Segment::new(s, o, d)).collect()).unwrap(),
        )
    }

    fn exact_cfg() -> OracleConfig {
        OracleConfig {
            der: DerConfig {
                collar: 0.0,
                ..DerConfig::default()
            },
            ..OracleConfig::default()
        }
    }

    fn der_of(rec: &Recording, a: &ClusterAssignment, r: &ReferenceAnnotation) -> f64 {
        let act = stitch(rec, a).unwrap();
        let hyp = binarize_to_segments(&act, 0.5, 0.0).unwrap();
        compute_der(&hyp, r, &exact_cfg().der).unwrap().der
    }

    #[test]
    fn exact_single_block() {
        // slot 0 speaks frames 0..5, slot 1 frames 5..10
        let rec = Recording::new("r", 0.1, vec![block(0, 10, |t, s| f32::from(u8::from((t < 5) == (s == 0))))]);
        let r = reference(&[("a", 0.0, 0.5), ("b", 0.5, 0.5)]);
        let mask = detect_silent_speakers(&rec.blocks, 0.05).unwrap();
        let a = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
        assert_eq!(a.label(EmbeddingIndex::new(0, 0)), Some(Label::Speaker(0)));
        assert_eq!(a.label(EmbeddingIndex::new(0, 1)), Some(Label::Speaker(1)));
        assert_eq!(der_of(&rec, &a, &r), 0.0);
    }

    #[test]
    fn swapped_second_block() {
        let first = |t: usize, s: usize| f32::from(u8::from((t < 5) == (s == 0)));
        let rec = Recording::new("r", 0.1, vec![block(0, 10, first), block(1, 10, move |t, s| first(t, 1 - s))]);
        let r = reference(&[("a", 0.0, 0.5), ("b", 0.5, 0.5), ("a", 1.0, 0.5), ("b", 1.5, 0.5)]);
        let mask = detect_silent_speakers(&rec.blocks, 0.05).unwrap();
        let a = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
        assert_eq!(a.label(EmbeddingIndex::new(1, 0)), a.label(EmbeddingIndex::new(0, 1)));
        assert_eq!(a.label(EmbeddingIndex::new(1, 1)), a.label(EmbeddingIndex::new(0, 0)));
        assert_eq!(der_of(&rec, &a, &r), 0.0);
    }

    #[test]
    fn extra_slot_shares_the_speaker() {
        // both slots active all the time, one reference speaker
        let rec = Recording::new("r", 0.1, vec![block(0, 10, |_, _| 1.0)]);
        let r = reference(&[("a", 0.0, 1.0)]);
        let mask = detect_silent_speakers(&rec.blocks, 0.05).unwrap();
        let a = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
        // sharing speaker "a" costs nothing and beats a false-alarming unmatched slot
        assert_eq!(a.num_speakers(), 1);
        assert_eq!(der_of(&rec, &a, &r), 0.0);
    }

    #[test]
    fn silent_slots_stay_silent() {
        let rec = Recording::new("r", 0.1, vec![block(0, 10, |_, s| if s == 0 { 1.0 } else { 0.0 })]);
        let r = reference(&[("a", 0.0, 1.0)]);
        let mask = detect_silent_speakers(&rec.blocks, 0.05).unwrap();
        let a = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
        assert_eq!(a.label(EmbeddingIndex::new(0, 1)), Some(Label::Silent));
    }

    #[test]
    fn empty_everything() {
        let rec = Recording::new("r", 0.1, vec![block(0, 10, |_, _| 0.0)]);
        let r = ReferenceAnnotation::new("r", SegmentList::empty());
        let mask = detect_silent_speakers(&rec.blocks, 0.05).unwrap();
        let a = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
        assert_eq!(a.num_speakers(), 0);
    }

    #[test]
    fn fallback_agrees_on_clean_blocks() {
        let first = |t: usize, s: usize| f32::from(u8::from((t < 5) == (s == 0)));
        let rec = Recording::new("r", 0.1, vec![block(0, 10, first), block(1, 10, move |t, s| first(t, 1 - s))]);
        let r = reference(&[("a", 0.0, 0.5), ("b", 0.5, 0.5), ("a", 1.0, 0.5), ("b", 1.5, 0.5)]);
        let mask = detect_silent_speakers(&rec.blocks, 0.05).unwrap();
        let cfg = OracleConfig {
            max_exhaustive: 0,
            ..exact_cfg()
        };
        let a = oracle_clustering(&rec, &mask, &r, &cfg).unwrap();
        let b = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
        assert!(a.same_partition(&b));
    }

    #[test]
    fn beats_every_relabeling_on_noisy_blocks() {
        use rand::{Rng, SeedableRng};
        use rand_chacha::ChaCha8Rng;
        for seed in 0..20u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let blocks: Vec<BlockRecord> = (0..2)
                .map(|b| {
                    let vals: Vec<f32> = (0..20).map(|_| rng.random::<f32>()).collect();
                    block(b, 10, move |t, s| vals[t * 2 + s])
                })
                .collect();
            let rec = Recording::new("r", 0.1, blocks);
            let mut segs = Vec::new();
            for (spk, on) in [("a", 0.0), ("b", 0.7), ("a", 1.3)] {
                segs.push((spk, on, 0.3 + rng.random::<f64>() * 0.3));
            }
            let r = reference(&segs);
            let mask = SilenceMask::all_active(rec.slots());
            let oracle = oracle_clustering(&rec, &mask, &r, &exact_cfg()).unwrap();
            let best = der_of(&rec, &oracle, &r);
            // every labeling of the 4 slots with ids 0..4
            for code in 0..256usize {
                let ids: Vec<usize> = (0..4).map(|i| (code >> (2 * i)) & 3).collect();
                let idx: Vec<EmbeddingIndex> = rec.slots().collect();
                let a = ClusterAssignment::from_cluster_ids(&idx, &ids);
                assert!(best <= der_of(&rec, &a, &r) + 1e-12, "seed {seed} labels {ids:?}");
            }
        }
    }
}
