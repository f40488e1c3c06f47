//! The oracle assignment against every blind algorithm on one noisy recording.

use diarstitch::{compute_der, diarize, generate_recording, Algorithm, PipelineConfig, SynthConfig};

fn main() -> diarstitch::Result<()> {
    let s = generate_recording(&SynthConfig {
        num_speakers: 4,
        intra_speaker_stddev: 2.0,
        posterior_noise_stddev: 0.1,
        overlap_prob: 0.3,
        seed: 11,
        ..SynthConfig::default()
    })?;
    for algorithm in Algorithm::ALL {
        let cfg = PipelineConfig {
            algorithm,
            ..PipelineConfig::default()
        };
        let d = diarize(&s.recording, &cfg, Some(&s.reference))?;
        let b = compute_der(&d.segments, &s.reference, &cfg.der)?;
        println!("{:<11} DER {:6.2}%", algorithm.to_string(), 100.0 * b.der);
    }
    Ok(())
}
