//! Parameter checkpoint format, version 1.
//!
//! ```text
//! bytes 0..8    magic "SASANET\0"
//! bytes 8..12   format version, u32 little-endian
//! bytes 12..20  header length H, u64 little-endian
//! next H bytes  UTF-8 JSON header
//! rest          parameter data, f64 little-endian, in header order
//! ```
//!
//! The header is `{"format_version", "dtype": "f64", "params": [{"name",
//! "shape", "offset", "len"}], "meta": {...}}`, where `offset`/`len` count
//! elements from the start of the data section and `meta` is caller-defined.

use super::{ParamStore, Tensor};
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;
const MAGIC: &[u8; 8] = b"SASANET\0";

#[derive(Serialize, Deserialize)]
struct ParamEntry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
    len: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    format_version: u32,
    dtype: String,
    params: Vec<ParamEntry>,
    meta: serde_json::Value,
}

pub fn write_checkpoint<W: Write>(
    mut w: W,
    store: &ParamStore,
    meta: &serde_json::Value,
) -> Result<()> {
    let mut offset = 0;
    let params = store
        .iter()
        .map(|(_, name, t)| {
            let e = ParamEntry {
                name: name.to_string(),
                shape: t.shape().to_vec(),
                offset,
                len: t.numel(),
            };
            offset += t.numel();
            e
        })
        .collect();
    let header = serde_json::to_vec(&Header {
        format_version: CHECKPOINT_VERSION,
        dtype: "f64".into(),
        params,
        meta: meta.clone(),
    })?;
    w.write_all(MAGIC)?;
    w.write_all(&CHECKPOINT_VERSION.to_le_bytes())?;
    w.write_all(&(header.len() as u64).to_le_bytes())?;
    w.write_all(&header)?;
    let mut buf = Vec::with_capacity(offset * 8);
    for (_, _, t) in store.iter() {
        for v in t.data() {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    w.write_all(&buf)?;
    w.flush()?;
    Ok(())
}

pub fn read_checkpoint<R: Read>(mut r: R) -> Result<(ParamStore, serde_json::Value)> {
    let mut magic = [0u8; 8];
    r.read_exact(&mut magic)
        .map_err(|_| Error::Checkpoint("file too short".into()))?;
    if &magic != MAGIC {
        return Err(Error::Checkpoint("bad magic; not a checkpoint file".into()));
    }
    let mut u32buf = [0u8; 4];
    r.read_exact(&mut u32buf)?;
    let version = u32::from_le_bytes(u32buf);
    if version != CHECKPOINT_VERSION {
        return Err(Error::Checkpoint(format!(
            "unsupported format version {version} (expected {CHECKPOINT_VERSION})"
        )));
    }
    let mut u64buf = [0u8; 8];
    r.read_exact(&mut u64buf)?;
    let hlen = usize::try_from(u64::from_le_bytes(u64buf))
        .map_err(|_| Error::Checkpoint("header length overflow".into()))?;
    let mut hbytes = vec![0u8; hlen];
    r.read_exact(&mut hbytes)
        .map_err(|_| Error::Checkpoint("truncated header".into()))?;
    let header: Header = serde_json::from_slice(&hbytes)?;
    if header.dtype != "f64" {
        return Err(Error::Checkpoint(format!(
            "unsupported dtype `{}`",
            header.dtype
        )));
    }
    let mut data = Vec::new();
    r.read_to_end(&mut data)?;
    if data.len() % 8 != 0 {
        return Err(Error::Checkpoint(
            "data section is not a whole number of f64 values".into(),
        ));
    }
    let values: Vec<f64> = data
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let mut store = ParamStore::new();
    for p in header.params {
        let end = p
            .offset
            .checked_add(p.len)
            .filter(|&e| e <= values.len())
            .ok_or_else(|| {
                Error::Checkpoint(format!("parameter `{}` extends past end of data", p.name))
            })?;
        let t = Tensor::new(p.shape, values[p.offset..end].to_vec())
            .map_err(|e| Error::Checkpoint(format!("parameter `{}`: {e}", p.name)))?;
        store.add(p.name, t);
    }
    Ok((store, header.meta))
}

pub fn save_checkpoint(path: &Path, store: &ParamStore, meta: &serde_json::Value) -> Result<()> {
    let f = std::fs::File::create(path).map_err(|e| Error::path(path, e))?;
    write_checkpoint(std::io::BufWriter::new(f), store, meta)
}

pub fn load_checkpoint(path: &Path) -> Result<(ParamStore, serde_json::Value)> {
    let f = std::fs::File::open(path).map_err(|e| Error::path(path, e))?;
    read_checkpoint(std::io::BufReader::new(f))
}
