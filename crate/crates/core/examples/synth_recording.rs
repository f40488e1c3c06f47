//! Generate one synthetic recording and print what is in it.

use diarstitch::{generate_recording, SynthConfig};

fn main() -> diarstitch::Result<()> {
    let s = generate_recording(&SynthConfig {
        num_speakers: 4,
        num_blocks: 10,
        seed: 1,
        ..SynthConfig::default()
    })?;
    let rec = &s.recording;
    println!(
        "{}: {} blocks, {} frames each, {:.1}s",
        rec.recording_id,
        rec.blocks.len(),
        rec.blocks[0].num_frames(),
        rec.duration()
    );
    for (idx, label) in s.truth.labels().iter().take(9) {
        println!("  block {} slot {} -> {:?}", idx.block, idx.slot, label);
    }
    println!("{} reference segments over {} speakers", s.reference.segments.len(), s.reference.num_speakers);
    Ok(())
}
