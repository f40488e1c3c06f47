//! Silent-slot detection.
//!
//! A slot whose mean posterior over the block is strictly below `tau` is
//! treated as a silent speaker and kept out of clustering and stitching.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::recording::{BlockRecord, EmbeddingIndex};

/// Default silence threshold.
pub const DEFAULT_TAU: f64 = 0.05;

#[derive(Debug, Clone, PartialEq)]
pub struct SilenceMask {
    silent: BTreeMap<EmbeddingIndex, bool>,
    tau: f64,
}

impl SilenceMask {
    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn is_silent(&self, idx: EmbeddingIndex) -> bool {
        self.silent.get(&idx).copied().unwrap_or(false)
    }

    pub fn entries(&self) -> &BTreeMap<EmbeddingIndex, bool> {
        &self.silent
    }

    pub fn silent_slots(&self) -> impl Iterator<Item = EmbeddingIndex> + '_ {
        self.silent.iter().filter(|(_, s)| **s).map(|(i, _)| *i)
    }

    pub fn active_slots(&self) -> impl Iterator<Item = EmbeddingIndex> + '_ {
        self.silent.iter().filter(|(_, s)| !**s).map(|(i, _)| *i)
    }

    pub fn num_active(&self) -> usize {
        self.silent.values().filter(|s| !**s).count()
    }

    /// A mask marking every slot active.
    pub fn all_active(slots: impl IntoIterator<Item = EmbeddingIndex>) -> Self {
        Self {
            silent: slots.into_iter().map(|i| (i, false)).collect(),
            tau: 0.0,
        }
    }
}

/// Mean of each posterior column.
pub fn slot_means(block: &BlockRecord) -> Vec<f64> {
    let frames = block.num_frames() as f64;
    block
        .posteriors
        .columns()
        .into_iter()
        .map(|col| col.iter().map(|&v| f64::from(v)).sum::<f64>() / frames)
        .collect()
}

pub fn detect_silent_speakers(blocks: &[BlockRecord], tau: f64) -> Result<SilenceMask> {
    if !(tau >= 0.0 && tau.is_finite()) {
        return Err(Error::invalid(format!("tau must be finite and >= 0, got {tau}")));
    }
    let mut silent = BTreeMap::new();
    for block in blocks {
        if block.num_frames() == 0 || block.s_local() == 0 {
            return Err(Error::InvalidBlock {
                block: block.block_index,
                message: "posterior matrix is empty".into(),
            });
        }
        for (slot, mean) in slot_means(block).into_iter().enumerate() {
            silent.insert(EmbeddingIndex::new(block.block_index, slot), mean < tau);
        }
    }
    Ok(SilenceMask { silent, tau })
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::{Array2, array};
    use proptest::prelude::*;

    fn block_with(posteriors: Array2<f32>) -> BlockRecord {
        let s = posteriors.ncols();
        BlockRecord {
            recording_id: "r".into(),
            block_index: 0,
            start_time: 0.0,
            posteriors,
            embeddings: Array2::zeros((s, 2)),
        }
    }

    #[test]
    fn examples() {
        // means: 0.0, 0.04, 0.5
        let mut p = Array2::<f32>::zeros((100, 3));
        for t in 0..4 {
            p[[t, 1]] = 1.0;
        }
        for t in 0..50 {
            p[[t, 2]] = 1.0;
        }
        let mask = detect_silent_speakers(&[block_with(p)], 0.05).unwrap();
        assert!(mask.is_silent(EmbeddingIndex::new(0, 0)));
        assert!(mask.is_silent(EmbeddingIndex::new(0, 1)));
        assert!(!mask.is_silent(EmbeddingIndex::new(0, 2)));
        assert_eq!(mask.num_active(), 1);
    }

    #[test]
    fn threshold_is_strict() {
        let p = array![[0.05f32], [0.05]];
        let b = block_with(p);
        let mean = slot_means(&b)[0];
        assert!(!detect_silent_speakers(std::slice::from_ref(&b), mean).unwrap().is_silent(EmbeddingIndex::new(0, 0)));
        assert!(detect_silent_speakers(&[b], mean + 1e-9).unwrap().is_silent(EmbeddingIndex::new(0, 0)));
    }

    #[test]
    fn empty_posteriors_rejected() {
        let b = block_with(Array2::zeros((0, 3)));
        assert!(detect_silent_speakers(&[b], 0.05).is_err());
        assert!(detect_silent_speakers(&[], -0.1).is_err());
    }

    proptest! {
        #[test]
        fn monotone_in_tau(values in prop::collection::vec(0.0f32..=1.0, 30), lo in 0.0f64..1.0, hi in 0.0f64..1.0) {
            let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
            let p = Array2::from_shape_vec((10, 3), values).unwrap();
            let blocks = [block_with(p)];
            let a = detect_silent_speakers(&blocks, lo).unwrap();
            let b = detect_silent_speakers(&blocks, hi).unwrap();
            for idx in a.silent_slots() {
                prop_assert!(b.is_silent(idx));
            }
            let zero = detect_silent_speakers(&blocks, 0.0).unwrap();
            prop_assert_eq!(zero.num_active(), 3);
            let above = detect_silent_speakers(&blocks, 1.0 + 1e-6).unwrap();
            prop_assert_eq!(above.num_active(), 0);
        }
    }
}
