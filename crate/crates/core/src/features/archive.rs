//! Binary feature storage ("SPFB"), little-endian throughout.
//!
//! Two layouts share the same header fields:
//! - a single-utterance file: magic, version, kind string, `T`, `D`,
//!   then `T*D` row-major f32 values;
//! - a concatenated archive: magic, version, kind string, utterance count,
//!   an index of `(utt_id, offset, T, D)` entries, then the raw f32 blocks
//!   at the recorded absolute offsets.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::Array2;

use crate::error::{Error, Result};
use crate::features::{FeatureKind, FeatureMatrix};

const MAGIC: &[u8; 4] = b"SPFB";
const VERSION: u16 = 1;

fn malformed(path: &Path, detail: impl Into<String>) -> Error {
    Error::MalformedHeader {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

fn write_str<W: Write>(w: &mut W, s: &str) -> Result<()> {
    let bytes = s.as_bytes();
    w.write_all(&(bytes.len() as u16).to_le_bytes())?;
    w.write_all(bytes)?;
    Ok(())
}

fn read_str<R: Read>(r: &mut R, path: &Path) -> Result<String> {
    let mut len = [0u8; 2];
    r.read_exact(&mut len).map_err(|_| malformed(path, "truncated string"))?;
    let mut buf = vec![0u8; u16::from_le_bytes(len) as usize];
    r.read_exact(&mut buf).map_err(|_| malformed(path, "truncated string"))?;
    String::from_utf8(buf).map_err(|_| malformed(path, "non-UTF8 string"))
}

fn read_u32<R: Read>(r: &mut R, path: &Path) -> Result<u32> {
    let mut b = [0u8; 4];
    r.read_exact(&mut b).map_err(|_| malformed(path, "truncated integer"))?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R, path: &Path) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b).map_err(|_| malformed(path, "truncated integer"))?;
    Ok(u64::from_le_bytes(b))
}

fn parse_kind(s: &str, path: &Path) -> Result<FeatureKind> {
    s.parse().map_err(|e: String| malformed(path, e))
}

fn write_values<W: Write>(w: &mut W, fm: &FeatureMatrix) -> Result<()> {
    let mut buf = Vec::with_capacity(fm.num_frames() * fm.dim() * 4);
    for v in fm.values().iter() {
        buf.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    w.write_all(&buf)?;
    Ok(())
}

fn read_values<R: Read>(r: &mut R, t: usize, d: usize, path: &Path) -> Result<Array2<f64>> {
    let mut buf = vec![0u8; t * d * 4];
    r.read_exact(&mut buf).map_err(|_| malformed(path, "truncated feature block"))?;
    let values: Vec<f64> = buf
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
        .collect();
    Array2::from_shape_vec((t, d), values).map_err(|e| malformed(path, e.to_string()))
}

/// Write a single utterance's features.
pub fn write_feature_file(path: impl AsRef<Path>, fm: &FeatureMatrix) -> Result<()> {
    let path = path.as_ref();
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_str(&mut w, fm.kind().as_str())?;
    w.write_all(&(fm.num_frames() as u32).to_le_bytes())?;
    w.write_all(&(fm.dim() as u32).to_le_bytes())?;
    write_values(&mut w, fm)?;
    w.flush()?;
    Ok(())
}

fn check_magic<R: Read>(r: &mut R, path: &Path) -> Result<()> {
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| malformed(path, "file too short"))?;
    if &magic != MAGIC {
        return Err(malformed(path, "bad magic, expected SPFB"));
    }
    let mut version = [0u8; 2];
    r.read_exact(&mut version).map_err(|_| malformed(path, "file too short"))?;
    if u16::from_le_bytes(version) != VERSION {
        return Err(malformed(path, format!("unsupported version {}", u16::from_le_bytes(version))));
    }
    Ok(())
}

/// Read a single utterance's features.
pub fn read_feature_file(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?);
    check_magic(&mut r, path)?;
    let kind = parse_kind(&read_str(&mut r, path)?, path)?;
    let t = read_u32(&mut r, path)? as usize;
    let d = read_u32(&mut r, path)? as usize;
    let values = read_values(&mut r, t, d, path)?;
    FeatureMatrix::new(values, kind, String::new())
}

/// Write a concatenated archive of utterances sharing one feature kind.
///
/// Entry order is preserved; every utterance id must be unique.
pub fn write_archive(path: impl AsRef<Path>, entries: &[(String, FeatureMatrix)]) -> Result<()> {
    let path = path.as_ref();
    if entries.is_empty() {
        return Err(Error::EmptyInput("cannot write an empty feature archive".into()));
    }
    let kind = entries[0].1.kind();
    for (id, fm) in entries {
        if fm.kind() != kind {
            return Err(Error::KindMismatch {
                model: kind.to_string(),
                features: format!("{} ({})", fm.kind(), id),
            });
        }
    }
    {
        let mut seen = std::collections::HashSet::new();
        for (id, _) in entries {
            if !seen.insert(id.as_str()) {
                return Err(Error::DuplicateUtteranceId(id.clone()));
            }
        }
    }

    // Fixed-size header + index so absolute offsets are known up front.
    let kind_str = kind.as_str();
    let header_len = 4 + 2 + 2 + kind_str.len() + 4;
    let index_len: usize = entries.iter().map(|(id, _)| 2 + id.len() + 8 + 4 + 4).sum();
    let mut offset = (header_len + index_len) as u64;

    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    write_str(&mut w, kind_str)?;
    w.write_all(&(entries.len() as u32).to_le_bytes())?;
    for (id, fm) in entries {
        write_str(&mut w, id)?;
        w.write_all(&offset.to_le_bytes())?;
        w.write_all(&(fm.num_frames() as u32).to_le_bytes())?;
        w.write_all(&(fm.dim() as u32).to_le_bytes())?;
        offset += (fm.num_frames() * fm.dim() * 4) as u64;
    }
    for (_, fm) in entries {
        write_values(&mut w, fm)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a concatenated archive back, in its stored order.
pub fn read_archive(path: impl AsRef<Path>) -> Result<Vec<(String, FeatureMatrix)>> {
    let path = path.as_ref();
    let mut r = BufReader::new(File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?);
    check_magic(&mut r, path)?;
    let kind = parse_kind(&read_str(&mut r, path)?, path)?;
    let count = read_u32(&mut r, path)? as usize;

    let mut index = Vec::with_capacity(count);
    let mut expected_offset: Option<u64> = None;
    for _ in 0..count {
        let id = read_str(&mut r, path)?;
        let offset = read_u64(&mut r, path)?;
        let t = read_u32(&mut r, path)? as usize;
        let d = read_u32(&mut r, path)? as usize;
        if let Some(e) = expected_offset {
            if offset != e {
                return Err(malformed(path, "non-contiguous archive offsets"));
            }
        }
        expected_offset = Some(offset + (t * d * 4) as u64);
        index.push((id, t, d));
    }

    let mut out = Vec::with_capacity(count);
    for (id, t, d) in index {
        let values = read_values(&mut r, t, d, path)?;
        out.push((id, FeatureMatrix::new(values, kind, String::new())?));
    }
    Ok(out)
}
