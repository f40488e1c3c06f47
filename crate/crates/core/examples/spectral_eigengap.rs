//! Estimate the number of speakers from the Laplacian eigengap.

use diarstitch::clustering::{
    apply_cannot_link_affinity, build_affinity_matrix_with, spectral_clustering, ClusterCount, EmbeddingSet,
    DEFAULT_SPECTRAL_BANDWIDTH,
};
use diarstitch::silence::detect_silent_speakers;
use diarstitch::{generate_recording, SynthConfig};

fn main() -> diarstitch::Result<()> {
    for k in 2..=6 {
        let s = generate_recording(&SynthConfig {
            num_speakers: k,
            intra_speaker_stddev: 0.3,
            seed: k as u64,
            ..SynthConfig::default()
        })?;
        let mask = detect_silent_speakers(&s.recording.blocks, 0.05)?;
        let set = EmbeddingSet::from_recording(&s.recording, &mask);
        let affinity = apply_cannot_link_affinity(&build_affinity_matrix_with(&set, DEFAULT_SPECTRAL_BANDWIDTH)?);
        let r = spectral_clustering(&affinity, ClusterCount::Eigengap { max_k: 10 }, 0)?;
        let head: Vec<String> = r.eigenvalues.iter().take(8).map(|v| format!("{v:.2}")).collect();
        println!("true {k}, estimated {}  eigenvalues [{}]", r.k, head.join(" "));
    }
    Ok(())
}
