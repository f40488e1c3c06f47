//! Write a recording as a block archive plus RTTM, then read both back.

use diarstitch::io::{read_block_archive, read_rttm_file, write_block_archive, write_rttm_file, RttmMap};
use diarstitch::{generate_recording, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let s = generate_recording(&SynthConfig::default())?;
    let dir = std::env::temp_dir().join(format!("diarstitch-example-{}", std::process::id()));
    let archive = dir.join(&s.recording.recording_id);
    write_block_archive(&s.recording, &archive)?;

    let mut refs = RttmMap::new();
    refs.insert(s.recording.recording_id.clone(), s.reference.segments.clone());
    let rttm = dir.join("reference.rttm");
    write_rttm_file(&refs, &rttm)?;

    let back = read_block_archive(&archive)?;
    println!("archive round trip exact: {}", back == s.recording);
    let segs = read_rttm_file(&rttm)?;
    println!("{} segments read from {}", segs["rec0"].len(), rttm.display());
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
