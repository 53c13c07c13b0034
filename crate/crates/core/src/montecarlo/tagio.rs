//! Binary tag format: little-endian records of 1-byte channel followed by
//! an 8-byte unsigned picosecond timestamp, plus a JSON text sidecar with
//! the run metadata. Fixed seeds reproduce files bit-exactly.

use std::io::{Read, Write};
use std::path::Path;

use super::{MonteCarloError, Result, Tag, TagStream};

const RECORD_LEN: usize = 9;

/// Metadata written next to the binary records (`<file>.meta.json`).
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TagSidecar {
    pub schema: String,
    pub duration_s: f64,
    pub n_tags: u64,
    pub seed: Option<u64>,
    pub scenario_sha256: Option<String>,
}

impl TagSidecar {
    pub fn new(stream: &TagStream, seed: Option<u64>, scenario_sha256: Option<String>) -> Self {
        TagSidecar {
            schema: "afcsim-tags/1".to_string(),
            duration_s: stream.duration,
            n_tags: stream.len() as u64,
            seed,
            scenario_sha256,
        }
    }
}

fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut os = path.as_os_str().to_owned();
    os.push(".meta.json");
    std::path::PathBuf::from(os)
}

/// Serializes a stream to `path` (records) and `path.meta.json` (sidecar).
pub fn write_tag_file(path: &Path, stream: &TagStream, sidecar: &TagSidecar) -> Result<()> {
    let mut buf = Vec::with_capacity(stream.len() * RECORD_LEN);
    for tag in &stream.tags {
        buf.push(tag.channel);
        buf.extend_from_slice(&tag.time_ps.to_le_bytes());
    }
    let mut f = std::fs::File::create(path).map_err(|e| MonteCarloError::Io(e.to_string()))?;
    f.write_all(&buf)
        .map_err(|e| MonteCarloError::Io(e.to_string()))?;
    let json = serde_json::to_string_pretty(sidecar)
        .map_err(|e| MonteCarloError::Io(e.to_string()))?;
    std::fs::write(sidecar_path(path), json).map_err(|e| MonteCarloError::Io(e.to_string()))?;
    Ok(())
}

/// Reads a stream and its sidecar back.
pub fn read_tag_file(path: &Path) -> Result<(TagStream, TagSidecar)> {
    let mut bytes = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| MonteCarloError::Io(e.to_string()))?
        .read_to_end(&mut bytes)
        .map_err(|e| MonteCarloError::Io(e.to_string()))?;
    if bytes.len() % RECORD_LEN != 0 {
        return Err(MonteCarloError::TagFormat(format!(
            "file size {} is not a multiple of the {}-byte record",
            bytes.len(),
            RECORD_LEN
        )));
    }
    let mut tags = Vec::with_capacity(bytes.len() / RECORD_LEN);
    for rec in bytes.chunks_exact(RECORD_LEN) {
        let mut ts = [0u8; 8];
        ts.copy_from_slice(&rec[1..9]);
        tags.push(Tag {
            channel: rec[0],
            time_ps: u64::from_le_bytes(ts),
        });
    }
    let sidecar_text = std::fs::read_to_string(sidecar_path(path))
        .map_err(|e| MonteCarloError::Io(e.to_string()))?;
    let sidecar: TagSidecar = serde_json::from_str(&sidecar_text)
        .map_err(|e| MonteCarloError::TagFormat(e.to_string()))?;
    if sidecar.n_tags != tags.len() as u64 {
        return Err(MonteCarloError::TagFormat(format!(
            "sidecar says {} tags, file holds {}",
            sidecar.n_tags,
            tags.len()
        )));
    }
    Ok((
        TagStream {
            tags,
            duration: sidecar.duration_s,
        },
        sidecar,
    ))
}
