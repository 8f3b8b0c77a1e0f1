//! The `.ten` binary container.
//!
//! Layout: `b"TENS"`, version byte `1`, rank byte (1..=4), two zero bytes,
//! `rank` little-endian `u32` extents, then the `f32` values little-endian,
//! row-major.

use std::fs;
use std::path::Path;

use super::{Tensor, MAX_RANK};
use crate::error::{Error, Result};

const MAGIC: &[u8; 4] = b"TENS";
const VERSION: u8 = 1;
const HEADER_LEN: usize = 8;

pub fn encode_ten(t: &Tensor<f32>) -> Vec<u8> {
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * t.rank() + 4 * t.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(t.rank() as u8);
    out.extend_from_slice(&[0, 0]);
    for &extent in t.shape() {
        out.extend_from_slice(&(extent as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

pub fn decode_ten(bytes: &[u8]) -> Result<Tensor<f32>> {
    let bad = |msg: String| Error::Container(msg);
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!(
            "{} bytes is shorter than the header",
            bytes.len()
        )));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad("missing TENS magic".into()));
    }
    if bytes[4] != VERSION {
        return Err(bad(format!("unsupported version {}", bytes[4])));
    }
    let rank = bytes[5] as usize;
    if !(1..=MAX_RANK).contains(&rank) {
        return Err(bad(format!("rank {rank} outside 1..={MAX_RANK}")));
    }
    if bytes[6..8] != [0, 0] {
        return Err(bad("reserved header bytes are not zero".into()));
    }

    let dims_end = HEADER_LEN + 4 * rank;
    if bytes.len() < dims_end {
        return Err(bad("truncated extents".into()));
    }
    let shape: Vec<usize> = bytes[HEADER_LEN..dims_end]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
        .collect();
    let count = shape
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| bad(format!("extents {shape:?} overflow")))?;
    let expected = count
        .checked_mul(4)
        .and_then(|n| n.checked_add(dims_end))
        .ok_or_else(|| bad(format!("extents {shape:?} overflow")))?;
    if bytes.len() != expected {
        return Err(bad(format!(
            "shape {shape:?} needs {expected} bytes, file has {}",
            bytes.len()
        )));
    }
    let data = bytes[dims_end..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
        .collect();
    Tensor::new(shape, data).map_err(|e| bad(e.to_string()))
}

pub fn read_ten(path: impl AsRef<Path>) -> Result<Tensor<f32>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::file(path, e))?;
    decode_ten(&bytes).map_err(|e| Error::Container(format!("{}: {e}", path.display())))
}

pub fn write_ten(path: impl AsRef<Path>, t: &Tensor<f32>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, encode_ten(t)).map_err(|e| Error::file(path, e))
}
