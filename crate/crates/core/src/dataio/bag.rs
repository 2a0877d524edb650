//! Binary bag files.
//!
//! Layout, little-endian throughout:
//!
//! | offset | size      | field                                   |
//! |--------|-----------|-----------------------------------------|
//! | 0      | 4         | magic `MGCB`                            |
//! | 4      | 4         | `u32` embedding width `d_in`            |
//! | 8      | 4         | `u32` patch count `N`                   |
//! | 12     | 4         | `u32` reserved, written as zero         |
//! | 16     | 4·d_in·N  | `f32` values, one patch after another   |
//!
//! In memory a bag is a `d_in × N` tensor (one column per patch).

use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::numkit::Tensor;

pub const BAG_MAGIC: &[u8; 4] = b"MGCB";
const HEADER_LEN: usize = 16;

pub fn encode_bag(bag: &Tensor) -> Result<Vec<u8>> {
    let (d_in, n) = bag.shape();
    if d_in == 0 || n == 0 {
        return Err(Error::Contract(format!("cannot encode an empty bag ({})", bag.shape_str())));
    }
    let mut out = Vec::with_capacity(HEADER_LEN + 4 * bag.len());
    out.extend_from_slice(BAG_MAGIC);
    out.extend_from_slice(&(d_in as u32).to_le_bytes());
    out.extend_from_slice(&(n as u32).to_le_bytes());
    out.extend_from_slice(&0u32.to_le_bytes());
    for j in 0..n {
        for i in 0..d_in {
            let v = bag.get(i, j) as f32;
            if !v.is_finite() {
                return Err(Error::Contract(format!(
                    "bag entry ({i}, {j}) is not representable as a finite f32"
                )));
            }
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

/// Decodes bag bytes; `origin` only labels errors.
pub fn decode_bag(bytes: &[u8], origin: &Path) -> Result<Tensor> {
    if bytes.len() < HEADER_LEN {
        return Err(Error::format(origin, format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[0..4] != BAG_MAGIC {
        return Err(Error::format(origin, format!("bad magic {:?}", &bytes[0..4])));
    }
    let word = |at: usize| u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap()) as usize;
    let (d_in, n) = (word(4), word(8));
    if d_in == 0 || n == 0 {
        return Err(Error::format(origin, format!("empty bag declared ({d_in}x{n})")));
    }
    let expected = d_in
        .checked_mul(n)
        .and_then(|v| v.checked_mul(4))
        .ok_or_else(|| Error::format(origin, "declared shape overflows"))?;
    let payload = &bytes[HEADER_LEN..];
    if payload.len() != expected {
        return Err(Error::format(
            origin,
            format!(
                "payload has {} bytes, header declares {d_in}x{n} ({expected} bytes)",
                payload.len()
            ),
        ));
    }
    let mut bag = Tensor::zeros(d_in, n);
    for (k, chunk) in payload.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if !v.is_finite() {
            return Err(Error::format(origin, format!("non-finite value at patch {}, dim {}", k / d_in, k % d_in)));
        }
        bag.set(k % d_in, k / d_in, v as f64);
    }
    Ok(bag)
}

pub fn write_bag(path: impl AsRef<Path>, bag: &Tensor) -> Result<()> {
    let path = path.as_ref();
    let bytes = encode_bag(bag)?;
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_bag(path: impl AsRef<Path>) -> Result<Tensor> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_bag(&bytes, path)
}
