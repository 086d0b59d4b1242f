//! Versioned binary checkpoint: config manifest plus named little-endian tensors.
//!
//! ```text
//! "AIRC" | u32 version | u64 len | config JSON | u32 count
//!   count × ( u32 len | name | u64 rows | u64 cols | rows·cols × f64 )
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use super::{EncoderConfig, EncoderParams, ValueTable};
use crate::error::{Error, Result};
use crate::tensor::Matrix;
use crate::vocab::Granularity;

const MAGIC: &[u8; 4] = b"AIRC";
const VERSION: u32 = 1;

pub fn checkpoint_bytes(cfg: &EncoderConfig, params: &EncoderParams) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    let manifest = serde_json::to_vec(cfg).expect("config serializes");
    out.extend_from_slice(&(manifest.len() as u64).to_le_bytes());
    out.extend_from_slice(&manifest);
    let tensors = params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, t) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
        out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
        for v in t.as_slice() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.buf.len() < n {
            return Err(Error::Checkpoint("truncated".into()));
        }
        let (head, rest) = self.buf.split_at(n);
        self.buf = rest;
        Ok(head)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<(EncoderConfig, EncoderParams)> {
    let mut r = Reader { buf: bytes };
    if r.take(4)? != MAGIC {
        return Err(Error::Checkpoint("bad magic".into()));
    }
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::Checkpoint(format!("unsupported version {version}")));
    }
    let len = r.u64()? as usize;
    let cfg: EncoderConfig = serde_json::from_slice(r.take(len)?)?;
    let count = r.u32()?;
    let mut named = BTreeMap::new();
    for _ in 0..count {
        let n = r.u32()? as usize;
        let name = String::from_utf8(r.take(n)?.to_vec())
            .map_err(|_| Error::Checkpoint("tensor name is not UTF-8".into()))?;
        let rows = r.u64()? as usize;
        let cols = r.u64()? as usize;
        let raw = r.take(rows * cols * 8)?;
        let data = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect();
        named.insert(name, Matrix::from_vec(rows, cols, data));
    }
    if !r.buf.is_empty() {
        return Err(Error::Checkpoint("trailing bytes".into()));
    }

    let mut params = EncoderParams::init(&cfg, 0)?;
    for (name, t) in params.tensors_mut() {
        let loaded = named
            .remove(&name)
            .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
        if loaded.shape() != t.shape() {
            return Err(Error::Checkpoint(format!("tensor {name} has shape {:?}", loaded.shape())));
        }
        *t = loaded;
    }
    for (name, table) in named {
        let parsed = name
            .strip_prefix("values.")
            .and_then(|rest| rest.split_once('.'))
            .and_then(|(a, g)| Some((a.parse::<usize>().ok()?, g.parse::<Granularity>().ok()?)));
        let Some((aspect, granularity)) = parsed else {
            return Err(Error::Checkpoint(format!("unexpected tensor {name}")));
        };
        params.value_tables.push(ValueTable {
            aspect,
            granularity,
            table,
        });
    }
    params.check_shapes(&cfg)?;
    Ok((cfg, params))
}

pub fn save_checkpoint(path: &Path, cfg: &EncoderConfig, params: &EncoderParams) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(cfg, params))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<(EncoderConfig, EncoderParams)> {
    parse_checkpoint(&std::fs::read(path)?)
}
