//! Clustering and stitching of block-wise end-to-end diarization outputs.
//!
//! A recording arrives as a sequence of blocks, each with framewise speaker
//! posteriors for a fixed number of local output slots and one embedding per
//! slot. Slots are matched across blocks by clustering their embeddings
//! (optionally with cannot-link constraints between slots of one block), then
//! stitched into a single diarization and scored against a reference.

pub mod clustering;
pub mod error;
pub mod hungarian;
pub mod io;
pub mod pipeline;
pub mod recording;
pub mod scoring;
pub mod silence;
pub mod stitch;
pub mod synth;

pub use error::{Error, Result};
pub use clustering::{Algorithm, ClusteringParams, SpeakerCount};
pub use pipeline::{diarize, CountMode, Diarization, PipelineConfig};
pub use recording::{BlockRecord, ClusterAssignment, EmbeddingIndex, FrameGrid, Label, Recording};
pub use scoring::{compute_der, DerBreakdown, DerConfig, ReferenceAnnotation};
pub use stitch::{Segment, SegmentList};
pub use synth::{generate_recording, SynthConfig, SynthRecording};
