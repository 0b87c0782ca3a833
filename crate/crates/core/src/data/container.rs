//! `MCN1` tensor container: a fixed little-endian header followed by the raw
//! row-major payload.
//!
//! ```text
//! offset  size       field
//! 0       4          magic "MCN1"
//! 4       1          dtype (0 = f32)
//! 5       1          rank (>= 1)
//! 6       2          reserved, must be 0
//! 8       4 * rank   dims, u32 LE, each >= 1
//! ..      4 * prod   payload, f32 LE
//! ```

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"MCN1";
pub const DTYPE_F32: u8 = 0;
const FIXED_HEADER: usize = 8;

/// Serialises a tensor to container bytes.
pub fn encode(t: &Tensor<f32>) -> Result<Vec<u8>> {
    let rank = u8::try_from(t.rank())
        .map_err(|_| Error::InvalidArgument(format!("rank {} exceeds 255", t.rank())))?;
    let mut out = Vec::with_capacity(FIXED_HEADER + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(DTYPE_F32);
    out.push(rank);
    out.extend_from_slice(&0u16.to_le_bytes());
    for &d in t.shape() {
        let d = u32::try_from(d).map_err(|_| Error::InvalidArgument(format!("dim {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    Ok(out)
}

/// Parses container bytes. `name` labels errors.
pub fn decode(bytes: &[u8], name: &str) -> Result<Tensor<f32>> {
    let err = |offset: usize, msg: String| Error::Format { path: name.to_string(), offset, msg };
    if bytes.len() < FIXED_HEADER {
        return Err(err(bytes.len(), format!("truncated header: {} of {FIXED_HEADER} bytes", bytes.len())));
    }
    if &bytes[0..4] != MAGIC {
        return Err(err(0, format!("bad magic {:02X?}", &bytes[0..4])));
    }
    if bytes[4] != DTYPE_F32 {
        return Err(err(4, format!("unknown dtype code {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    if rank == 0 {
        return Err(err(5, "rank must be at least 1".into()));
    }
    let reserved = u16::from_le_bytes([bytes[6], bytes[7]]);
    if reserved != 0 {
        return Err(err(6, format!("reserved field is {reserved}, expected 0")));
    }
    let header = FIXED_HEADER + 4 * rank;
    if bytes.len() < header {
        return Err(err(bytes.len(), format!("truncated dims: rank {rank} needs {header} header bytes")));
    }
    let mut shape = Vec::with_capacity(rank);
    let mut count: usize = 1;
    for i in 0..rank {
        let off = FIXED_HEADER + 4 * i;
        let d = u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes")) as usize;
        if d == 0 {
            return Err(err(off, format!("dim {i} is zero")));
        }
        count = count
            .checked_mul(d)
            .ok_or_else(|| err(off, "element count overflows".into()))?;
        shape.push(d);
    }
    let want = count
        .checked_mul(4)
        .and_then(|p| p.checked_add(header))
        .ok_or_else(|| err(FIXED_HEADER, "payload size overflows".into()))?;
    if bytes.len() < want {
        return Err(err(bytes.len(), format!("truncated payload: expected {want} bytes, found {}", bytes.len())));
    }
    if bytes.len() > want {
        return Err(err(want, format!("{} trailing bytes after payload", bytes.len() - want)));
    }
    let data = bytes[header..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
        .collect();
    Tensor::from_vec(&shape, data)
}

pub fn write_tensor(path: &Path, t: &Tensor<f32>) -> Result<()> {
    fs::write(path, encode(t)?).map_err(|e| Error::io(path, e))
}

pub fn read_tensor(path: &Path) -> Result<Tensor<f32>> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode(&bytes, &path.display().to_string())
}
