//! Binary checkpoints.
//!
//! Layout (little endian):
//!
//! ```text
//! "MGCK" | u32 version | u32 meta_len | meta JSON | u32 blocks
//! per block: u32 name_len | name | u32 rows | u32 cols | rows*cols f64
//! ```
//!
//! Values are stored as raw `f64`, so a save/load round trip is bit exact.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Mgct, ModelConfig};
use crate::numkit::Tensor;
use crate::survival::TimeBins;

const MAGIC: &[u8; 4] = b"MGCK";
const VERSION: u32 = 1;

/// Everything besides weights that evaluation needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointMeta {
    pub model: ModelConfig,
    pub bins: TimeBins,
    /// AUC horizon in months, from the training fold.
    pub horizon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub model: Mgct,
}

fn put_u32(out: &mut Vec<u8>, v: usize, what: &str) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| Error::Contract(format!("{what} {v} does not fit in u32")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn encode_checkpoint(model: &Mgct, bins: &TimeBins, horizon: Option<f64>) -> Result<Vec<u8>> {
    let meta = CheckpointMeta { model: model.config.clone(), bins: bins.clone(), horizon };
    let json = serde_json::to_vec(&meta).map_err(|e| Error::Contract(format!("cannot serialise metadata: {e}")))?;
    let mut out = Vec::with_capacity(16 + json.len() + model.parameter_count() * 8);
    out.extend_from_slice(MAGIC);
    put_u32(&mut out, VERSION as usize, "version")?;
    put_u32(&mut out, json.len(), "metadata length")?;
    out.extend_from_slice(&json);
    put_u32(&mut out, model.store.len(), "block count")?;
    for (name, t) in model.store.names().iter().zip(model.store.values()) {
        put_u32(&mut out, name.len(), "name length")?;
        out.extend_from_slice(name.as_bytes());
        put_u32(&mut out, t.rows(), "rows")?;
        put_u32(&mut out, t.cols(), "cols")?;
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    Ok(out)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    origin: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| {
            Error::format(self.origin, format!("truncated while reading {what} at byte {}", self.pos))
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<usize> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes(b.try_into().unwrap()) as usize)
    }
}

pub fn decode_checkpoint(bytes: &[u8], origin: &Path) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0, origin };
    if r.take(4, "magic")? != MAGIC {
        return Err(Error::format(origin, "not an MGCT checkpoint (bad magic)"));
    }
    let version = r.u32("version")?;
    if version != VERSION as usize {
        return Err(Error::format(origin, format!("unsupported checkpoint version {version}")));
    }
    let meta_len = r.u32("metadata length")?;
    let meta: CheckpointMeta = serde_json::from_slice(r.take(meta_len, "metadata")?)
        .map_err(|e| Error::format(origin, format!("bad metadata: {e}")))?;
    let blocks = r.u32("block count")?;
    let mut names = Vec::with_capacity(blocks.min(1 << 16));
    let mut values = Vec::with_capacity(blocks.min(1 << 16));
    for _ in 0..blocks {
        let len = r.u32("name length")?;
        let name = std::str::from_utf8(r.take(len, "name")?)
            .map_err(|_| Error::format(origin, "parameter name is not UTF-8"))?
            .to_string();
        let rows = r.u32("rows")?;
        let cols = r.u32("cols")?;
        let count = rows
            .checked_mul(cols)
            .and_then(|n| n.checked_mul(8))
            .ok_or_else(|| Error::format(origin, format!("block {name} is too large")))?;
        let raw = r.take(count, &format!("values of {name}"))?;
        let data = raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        values.push(Tensor::new(rows, cols, data)?);
        names.push(name);
    }
    if r.pos != bytes.len() {
        return Err(Error::format(origin, format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    let model = Mgct::with_params(meta.model.clone(), &names, values)
        .map_err(|e| Error::format(origin, e.to_string()))?;
    Ok(Checkpoint { meta, model })
}

/// Writes to a sibling temporary file, then renames over `path`.
pub fn save_checkpoint(path: &Path, model: &Mgct, bins: &TimeBins, horizon: Option<f64>) -> Result<()> {
    let bytes = encode_checkpoint(model, bins, horizon)?;
    let mut tmp = path.as_os_str().to_owned();
    tmp.push(".tmp");
    let tmp = std::path::PathBuf::from(tmp);
    let mut f = fs::File::create(&tmp).map_err(|e| Error::io(&tmp, e))?;
    f.write_all(&bytes).and_then(|_| f.sync_all()).map_err(|e| Error::io(&tmp, e))?;
    drop(f);
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_checkpoint(&bytes, path)
}
