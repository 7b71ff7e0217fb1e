//! Model checkpoints ("SPXV"): magic, version, feature kind, architecture
//! dims, training-config digest, then all parameters as little-endian f32 in
//! fixed block order (w1, b1, w2, b2, w_emb, b_emb, w_out, b_out).

use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::features::FeatureKind;
use crate::xvector::{XVectorDims, XVectorModel, TDNN1_OFFSETS, TDNN2_OFFSETS};

const MAGIC: &[u8; 4] = b"SPXV";
const VERSION: u16 = 1;

pub fn write_xvector(path: impl AsRef<Path>, model: &XVectorModel) -> Result<()> {
    let mut w = BufWriter::new(std::fs::File::create(path.as_ref())?);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    let kind = model.kind().as_str().as_bytes();
    w.write_all(&(kind.len() as u16).to_le_bytes())?;
    w.write_all(kind)?;
    let dims = model.dims();
    for v in [dims.input_dim, dims.h1, dims.h2, dims.embed_dim] {
        w.write_all(&(v as u32).to_le_bytes())?;
    }
    let digest = model.config_digest().as_bytes();
    w.write_all(&(digest.len() as u16).to_le_bytes())?;
    w.write_all(digest)?;
    for block in model.param_blocks() {
        for &v in block {
            w.write_all(&(v as f32).to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_xvector(path: impl AsRef<Path>) -> Result<XVectorModel> {
    let path = path.as_ref();
    let malformed = |detail: &str| Error::MalformedHeader {
        path: path.to_path_buf(),
        detail: detail.into(),
    };
    let mut r = BufReader::new(std::fs::File::open(path).map_err(|e| {
        if e.kind() == std::io::ErrorKind::NotFound {
            Error::NotFound(path.to_path_buf())
        } else {
            Error::Io(e)
        }
    })?);

    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| malformed("file too short"))?;
    if &magic != MAGIC {
        return Err(malformed("bad magic, expected SPXV"));
    }
    let mut b2 = [0u8; 2];
    r.read_exact(&mut b2).map_err(|_| malformed("truncated version"))?;
    if u16::from_le_bytes(b2) != VERSION {
        return Err(malformed("unsupported version"));
    }
    let read_str = |r: &mut BufReader<std::fs::File>| -> Result<String> {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(|_| malformed("truncated string"))?;
        let mut buf = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut buf).map_err(|_| malformed("truncated string"))?;
        String::from_utf8(buf).map_err(|_| malformed("non-UTF8 string"))
    };
    let kind: FeatureKind = read_str(&mut r)?.parse().map_err(|e: String| malformed(&e))?;

    let mut b4 = [0u8; 4];
    let mut read_u32 = |r: &mut BufReader<std::fs::File>| -> Result<usize> {
        r.read_exact(&mut b4).map_err(|_| malformed("truncated dims"))?;
        Ok(u32::from_le_bytes(b4) as usize)
    };
    let input_dim = read_u32(&mut r)?;
    let h1 = read_u32(&mut r)?;
    let h2 = read_u32(&mut r)?;
    let embed_dim = read_u32(&mut r)?;
    let dims = XVectorDims::new(input_dim, h1, h2, embed_dim);
    let digest = {
        let mut b2 = [0u8; 2];
        r.read_exact(&mut b2).map_err(|_| malformed("truncated digest"))?;
        let mut buf = vec![0u8; u16::from_le_bytes(b2) as usize];
        r.read_exact(&mut buf).map_err(|_| malformed("truncated digest"))?;
        String::from_utf8(buf).map_err(|_| malformed("non-UTF8 digest"))?
    };

    let block_lens = [
        TDNN1_OFFSETS.len() * input_dim * h1,
        h1,
        TDNN2_OFFSETS.len() * h1 * h2,
        h2,
        2 * h2 * embed_dim,
        embed_dim,
        embed_dim * 2,
        2,
    ];
    let mut parts = Vec::with_capacity(block_lens.len());
    for len in block_lens {
        let mut buf = vec![0u8; len * 4];
        r.read_exact(&mut buf).map_err(|_| malformed("truncated parameters"))?;
        parts.push(
            buf.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect(),
        );
    }
    XVectorModel::from_parts(dims, kind, digest, parts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::xvector::XVectorModel;

    #[test]
    fn checkpoint_round_trip_preserves_f32_parameters() {
        let dims = XVectorDims::new(5, 7, 6, 4);
        let mut model = XVectorModel::new_random(dims, FeatureKind::Lfcc, 99);
        model.set_config_digest("abc123".into());

        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.spxv");
        write_xvector(&path, &model).unwrap();
        let back = read_xvector(&path).unwrap();

        assert_eq!(back.dims(), dims);
        assert_eq!(back.kind(), FeatureKind::Lfcc);
        assert_eq!(back.config_digest(), "abc123");
        for (a, b) in model.param_blocks().iter().zip(back.param_blocks().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(*x as f32, *y as f32);
                assert_eq!(*y, *y as f32 as f64, "stored values are exact f32");
            }
        }
    }

    #[test]
    fn garbage_checkpoint_is_malformed() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.spxv");
        std::fs::write(&path, b"???").unwrap();
        assert!(matches!(read_xvector(&path), Err(Error::MalformedHeader { .. })));
    }
}
