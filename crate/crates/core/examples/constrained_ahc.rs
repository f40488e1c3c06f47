//! Plain vs constrained AHC on the same embeddings.

use diarstitch::clustering::{ahc, build_distance_matrix, constrained_ahc, EmbeddingSet, StoppingRule, DEFAULT_KAPPA};
use diarstitch::silence::detect_silent_speakers;
use diarstitch::{generate_recording, SynthConfig};

fn main() -> diarstitch::Result<()> {
    let s = generate_recording(&SynthConfig {
        num_speakers: 4,
        intra_speaker_stddev: 1.5,
        seed: 2,
        ..SynthConfig::default()
    })?;
    let mask = detect_silent_speakers(&s.recording.blocks, 0.05)?;
    let set = EmbeddingSet::from_recording(&s.recording, &mask);
    let stop = StoppingRule::NumClusters(4);

    let plain = ahc(&build_distance_matrix(&set), stop)?;
    let constrained = constrained_ahc(&set, stop, DEFAULT_KAPPA)?;
    println!("{} active embeddings", set.len());
    println!("ahc:  {} same-block pairs merged", plain.cannot_link_violations());
    println!("cahc: {} same-block pairs merged", constrained.cannot_link_violations());
    // a fixed count can still force a merge across kappa; a threshold below kappa cannot
    let by_threshold = constrained_ahc(&set, StoppingRule::DistanceThreshold(3.0), DEFAULT_KAPPA)?;
    println!(
        "cahc, threshold 3.0: {} clusters, {} same-block pairs merged",
        by_threshold.num_speakers(),
        by_threshold.cannot_link_violations()
    );
    Ok(())
}
