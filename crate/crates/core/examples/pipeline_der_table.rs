//! Run the pipeline over a small synthetic corpus and print DER by speaker count.

use diarstitch::scoring::{report_by_speaker_count, ScoredRecording};
use diarstitch::{compute_der, diarize, generate_recording, CountMode, PipelineConfig, SynthConfig};

fn main() -> diarstitch::Result<()> {
    let cfg = PipelineConfig {
        count: CountMode::Estimate,
        ..PipelineConfig::default()
    };
    let mut scored = Vec::new();
    for seed in 0..20 {
        let s = generate_recording(&SynthConfig {
            recording_id: format!("rec{seed:03}"),
            num_speakers: 2 + (seed as usize % 4),
            intra_speaker_stddev: 0.4,
            seed,
            ..SynthConfig::default()
        })?;
        let d = diarize(&s.recording, &cfg, None)?;
        scored.push(ScoredRecording {
            recording_id: s.recording.recording_id.clone(),
            breakdown: compute_der(&d.segments, &s.reference, &cfg.der)?,
            ref_speakers: s.reference.num_speakers,
        });
    }
    print!("{}", report_by_speaker_count(&scored)?);
    Ok(())
}
