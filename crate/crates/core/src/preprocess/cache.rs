//! Patch cache container: rendered patches keyed by manifest record id.

use std::io::{BufWriter, Read, Write};
use std::path::Path;

use super::transform::RigidTransform;
use super::{NineChannelPatch, N_CHANNELS, PATCH_SIDE};
use crate::util::{read_f32, read_u32};

const MAGIC: &[u8; 4] = b"APCH";
const VERSION: u32 = 1;
const PATCH_LEN: usize = N_CHANNELS * PATCH_SIDE * PATCH_SIDE;

#[derive(Debug, Clone, PartialEq)]
pub struct PatchCacheError(pub String);

impl std::fmt::Display for PatchCacheError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "patch cache: {}", self.0)
    }
}

impl std::error::Error for PatchCacheError {}

impl From<std::io::Error> for PatchCacheError {
    fn from(e: std::io::Error) -> Self {
        Self(e.to_string())
    }
}

/// Writes `magic "APCH", u32 version, u32 count`, then per patch a u64
/// record id followed by the 9*48*48 f32 values, little-endian.
pub fn write_patch_cache(path: &Path, patches: &[(u64, NineChannelPatch)]) -> Result<(), PatchCacheError> {
    let f = std::fs::File::create(path)?;
    let mut w = BufWriter::new(f);
    w.write_all(MAGIC)?;
    w.write_all(&VERSION.to_le_bytes())?;
    w.write_all(&(patches.len() as u32).to_le_bytes())?;
    for (record_id, patch) in patches {
        assert_eq!(patch.data.len(), PATCH_LEN);
        w.write_all(&record_id.to_le_bytes())?;
        for v in &patch.data {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_patch_cache(path: &Path) -> Result<Vec<(u64, NineChannelPatch)>, PatchCacheError> {
    let mut buf = Vec::new();
    std::fs::File::open(path)?.read_to_end(&mut buf)?;
    if buf.len() < 4 || &buf[0..4] != MAGIC {
        return Err(PatchCacheError("missing APCH magic".into()));
    }
    let mut pos = 4usize;
    let bad = || PatchCacheError("truncated file".into());
    let version = read_u32(&buf, &mut pos).ok_or_else(bad)?;
    if version != VERSION {
        return Err(PatchCacheError(format!("unsupported version {version}")));
    }
    let count = read_u32(&buf, &mut pos).ok_or_else(bad)? as usize;
    if buf.len() != pos + count * (8 + 4 * PATCH_LEN) {
        return Err(PatchCacheError("size does not match record count".into()));
    }
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let id_bytes: [u8; 8] = buf[pos..pos + 8].try_into().unwrap();
        pos += 8;
        let record_id = u64::from_le_bytes(id_bytes);
        let mut data = Vec::with_capacity(PATCH_LEN);
        for _ in 0..PATCH_LEN {
            data.push(read_f32(&buf, &mut pos).unwrap());
        }
        out.push((
            record_id,
            NineChannelPatch { data, series_id: 0, target_idx: 0, transform: RigidTransform::identity() },
        ));
    }
    Ok(out)
}
