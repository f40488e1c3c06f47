//! RTTM segment files and the block archive format.
//!
//! A block archive is a directory holding `header.txt` (UTF-8 `key: value`
//! lines) and one file `block_NNNNN.f32` per block: the posteriors
//! (`frames x s_local`, row-major) followed by the embeddings
//! (`s_local x embedding_dim`, row-major), all little-endian `f32`.
//!
//! ```text
//! format: blockarchive-v1
//! recording_id: rec0
//! frame_duration: 0.1
//! s_local: 3
//! embedding_dim: 16
//! num_blocks: 2
//! block.0.start_time: 0
//! block.0.frames: 300
//! block.1.start_time: 30
//! block.1.frames: 300
//! ```

use std::collections::BTreeMap;
use std::fs;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::recording::{validate_recording, BlockRecord, Recording};
use crate::stitch::{Segment, SegmentList};

pub const ARCHIVE_FORMAT: &str = "blockarchive-v1";
pub const HEADER_FILE: &str = "header.txt";

/// Segments grouped by recording id.
pub type RttmMap = BTreeMap<String, SegmentList>;

pub fn read_rttm(reader: impl BufRead) -> Result<RttmMap> {
    let mut grouped: BTreeMap<String, Vec<Segment>> = BTreeMap::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(|e| Error::io(format!("reading RTTM line {line_no}"), e))?;
        let trimmed = line.trim();
        if trimmed.is_empty() || trimmed.starts_with(";;") {
            continue;
        }
        let err = |message: String| Error::Rttm { line: line_no, message };
        let fields: Vec<&str> = trimmed.split_whitespace().collect();
        if fields.len() < 8 {
            return Err(err(format!("expected at least 8 fields, found {}", fields.len())));
        }
        if fields[0] != "SPEAKER" {
            return Err(err(format!("unsupported record type {:?}", fields[0])));
        }
        fields[2]
            .parse::<u32>()
            .map_err(|_| err(format!("bad channel {:?}", fields[2])))?;
        let onset: f64 = fields[3].parse().map_err(|_| err(format!("bad onset {:?}", fields[3])))?;
        let duration: f64 = fields[4].parse().map_err(|_| err(format!("bad duration {:?}", fields[4])))?;
        if !(onset >= 0.0 && onset.is_finite()) {
            return Err(err(format!("onset {onset} must be >= 0")));
        }
        if !(duration > 0.0 && duration.is_finite()) {
            return Err(err(format!("duration {duration} must be > 0")));
        }
        grouped
            .entry(fields[1].to_owned())
            .or_default()
            .push(Segment::new(fields[7], onset, duration));
    }
    grouped
        .into_iter()
        .map(|(id, segs)| {
            let list = SegmentList::new(segs).map_err(|e| Error::Rttm {
                line: 0,
                message: format!("recording {id}: {e}"),
            })?;
            Ok((id, list))
        })
        .collect()
}

pub fn read_rttm_file(path: &Path) -> Result<RttmMap> {
    let file = fs::File::open(path).map_err(|e| Error::io(format!("opening {}", path.display()), e))?;
    read_rttm(std::io::BufReader::new(file))
}

/// Writes records sorted by `(recording, onset, speaker)` with times at 1 ms
/// resolution.
pub fn write_rttm(segments: &RttmMap, mut out: impl Write) -> Result<()> {
    let mut text = String::new();
    for (id, list) in segments {
        for seg in list.segments() {
            let duration = format!("{:.3}", seg.duration);
            if duration.parse::<f64>().unwrap_or(0.0) <= 0.0 {
                return Err(Error::invalid(format!(
                    "segment of {} at {:.3} in {id} is shorter than 1 ms",
                    seg.speaker, seg.onset
                )));
            }
            text += &format!(
                "SPEAKER {id} 1 {:.3} {duration} <NA> <NA> {} <NA> <NA>\n",
                seg.onset, seg.speaker
            );
        }
    }
    out.write_all(text.as_bytes())
        .map_err(|e| Error::io("writing RTTM", e))
}

pub fn write_rttm_file(segments: &RttmMap, path: &Path) -> Result<()> {
    let mut buf = Vec::new();
    write_rttm(segments, &mut buf)?;
    fs::write(path, buf).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

pub fn block_file_name(index: usize) -> String {
    format!("block_{index:05}.f32")
}

pub fn write_block_archive(rec: &Recording, dir: &Path) -> Result<()> {
    validate_recording(rec)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(format!("creating {}", dir.display()), e))?;
    let mut header = format!(
        "format: {ARCHIVE_FORMAT}\nrecording_id: {}\nframe_duration: {}\ns_local: {}\nembedding_dim: {}\nnum_blocks: {}\n",
        rec.recording_id,
        rec.frame_duration,
        rec.s_local(),
        rec.embedding_dim(),
        rec.blocks.len()
    );
    for block in &rec.blocks {
        let i = block.block_index;
        header += &format!("block.{i}.start_time: {}\nblock.{i}.frames: {}\n", block.start_time, block.num_frames());
        let mut bytes = Vec::with_capacity(4 * (block.posteriors.len() + block.embeddings.len()));
        for v in block.posteriors.iter().chain(block.embeddings.iter()) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        let path = dir.join(block_file_name(i));
        fs::write(&path, bytes).map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
    }
    let path = dir.join(HEADER_FILE);
    fs::write(&path, header).map_err(|e| Error::io(format!("writing {}", path.display()), e))
}

struct Header {
    recording_id: String,
    frame_duration: f64,
    s_local: usize,
    embedding_dim: usize,
    blocks: Vec<(f64, usize)>,
}

fn parse_header(path: &Path, text: &str) -> Result<Header> {
    let bad = |message: String| Error::ArchiveHeader {
        path: path.to_path_buf(),
        message,
    };
    let mut kv: BTreeMap<&str, &str> = BTreeMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once(':')
            .ok_or_else(|| bad(format!("line {} is not 'key: value'", i + 1)))?;
        if kv.insert(k.trim(), v.trim()).is_some() {
            return Err(bad(format!("duplicate key {}", k.trim())));
        }
    }
    let get = |k: &str| kv.get(k).copied().ok_or_else(|| bad(format!("missing key {k}")));
    fn num<T: std::str::FromStr>(v: &str, k: &str, bad: &dyn Fn(String) -> Error) -> Result<T> {
        v.parse().map_err(|_| bad(format!("bad value {v:?} for {k}")))
    }
    if get("format")? != ARCHIVE_FORMAT {
        return Err(bad(format!("unsupported format {:?}", get("format")?)));
    }
    let num_blocks: usize = num(get("num_blocks")?, "num_blocks", &bad)?;
    let mut blocks = Vec::with_capacity(num_blocks);
    for i in 0..num_blocks {
        let sk = format!("block.{i}.start_time");
        let fk = format!("block.{i}.frames");
        blocks.push((num(get(&sk)?, &sk, &bad)?, num(get(&fk)?, &fk, &bad)?));
    }
    let known = 6 + 2 * num_blocks;
    if kv.len() != known {
        return Err(bad(format!("{} keys present, expected {known}", kv.len())));
    }
    Ok(Header {
        recording_id: get("recording_id")?.to_owned(),
        frame_duration: num(get("frame_duration")?, "frame_duration", &bad)?,
        s_local: num(get("s_local")?, "s_local", &bad)?,
        embedding_dim: num(get("embedding_dim")?, "embedding_dim", &bad)?,
        blocks,
    })
}

pub fn read_block_archive(dir: &Path) -> Result<Recording> {
    let header_path = dir.join(HEADER_FILE);
    let text = fs::read_to_string(&header_path)
        .map_err(|e| Error::io(format!("reading {}", header_path.display()), e))?;
    let header = parse_header(&header_path, &text)?;

    let listing = fs::read_dir(dir).map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
    let mut on_disk = 0;
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", dir.display()), e))?;
        let name = entry.file_name();
        let name = name.to_string_lossy();
        if name.starts_with("block_") && name.ends_with(".f32") {
            on_disk += 1;
        }
    }
    if on_disk != header.blocks.len() {
        return Err(Error::ArchiveMismatch(format!(
            "{}: header declares {} blocks, directory has {on_disk} block files",
            dir.display(),
            header.blocks.len()
        )));
    }

    let (s, c) = (header.s_local, header.embedding_dim);
    let mut blocks = Vec::with_capacity(header.blocks.len());
    for (i, &(start_time, frames)) in header.blocks.iter().enumerate() {
        let path = dir.join(block_file_name(i));
        let bytes = fs::read(&path).map_err(|e| match e.kind() {
            std::io::ErrorKind::NotFound => Error::ArchiveMismatch(format!("missing {}", path.display())),
            _ => Error::io(format!("reading {}", path.display()), e),
        })?;
        let expected = 4 * (frames * s + s * c);
        if bytes.len() < expected {
            return Err(Error::ArchiveTruncated {
                path,
                expected,
                found: bytes.len(),
            });
        }
        if bytes.len() > expected {
            return Err(Error::ArchiveMismatch(format!(
                "{}: {} bytes, header implies {expected}",
                path.display(),
                bytes.len()
            )));
        }
        let values: Vec<f32> = bytes
            .chunks_exact(4)
            .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
            .collect();
        if let Some(offset) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { path, offset });
        }
        let (post, emb) = values.split_at(frames * s);
        blocks.push(BlockRecord {
            recording_id: header.recording_id.clone(),
            block_index: i,
            start_time,
            posteriors: Array2::from_shape_vec((frames, s), post.to_vec()).expect("sized above"),
            embeddings: Array2::from_shape_vec((s, c), emb.to_vec()).expect("sized above"),
        });
    }
    let rec = Recording::new(header.recording_id, header.frame_duration, blocks);
    validate_recording(&rec)?;
    Ok(rec)
}

/// Archive directories under `path`: `path` itself when it holds a header,
/// otherwise its immediate subdirectories that do, sorted by name.
pub fn find_archives(path: &Path) -> Result<Vec<PathBuf>> {
    if path.join(HEADER_FILE).is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let listing = fs::read_dir(path).map_err(|e| Error::io(format!("listing {}", path.display()), e))?;
    let mut out = Vec::new();
    for entry in listing {
        let entry = entry.map_err(|e| Error::io(format!("listing {}", path.display()), e))?;
        if entry.path().join(HEADER_FILE).is_file() {
            out.push(entry.path());
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(Error::invalid(format!("no block archive found at {}", path.display())));
    }
    Ok(out)
}
