//! Versioned binary adapter checkpoints.
//!
//! Layout, little endian: magic `RKADAPT1`, format version u32, step u64,
//! seed u64, then length-prefixed fingerprint and adapter version strings,
//! d_in u64, d_out u64, weights and bias as f64.

use std::path::Path;

use crate::context::Adapter;
use crate::error::{Error, Result};
use crate::util;

pub const MAGIC: &[u8; 8] = b"RKADAPT1";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub adapter: Adapter,
    pub step: u64,
    pub seed: u64,
    pub config_fingerprint: String,
}

fn put_str(out: &mut Vec<u8>, s: &str) {
    out.extend_from_slice(&(s.len() as u64).to_le_bytes());
    out.extend_from_slice(s.as_bytes());
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let a = &self.adapter;
        let mut out = Vec::with_capacity(64 + 8 * a.num_params());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&self.step.to_le_bytes());
        out.extend_from_slice(&self.seed.to_le_bytes());
        put_str(&mut out, &self.config_fingerprint);
        put_str(&mut out, &a.version);
        out.extend_from_slice(&(a.d_in as u64).to_le_bytes());
        out.extend_from_slice(&(a.d_out as u64).to_le_bytes());
        for v in a.weights.iter().chain(&a.bias) {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8], source: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::MalformedRecord {
            path: source.to_path_buf(),
            line: 0,
            reason: reason.to_string(),
        };
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8).ok_or_else(|| bad("truncated header"))? != MAGIC {
            return Err(bad("not an adapter checkpoint"));
        }
        let version = u32::from_le_bytes(r.array().ok_or_else(|| bad("truncated header"))?);
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported checkpoint version {version}")));
        }
        let step = r.u64().ok_or_else(|| bad("truncated header"))?;
        let seed = r.u64().ok_or_else(|| bad("truncated header"))?;
        let config_fingerprint = r.string().ok_or_else(|| bad("bad fingerprint"))?;
        let adapter_version = r.string().ok_or_else(|| bad("bad adapter version"))?;
        let d_in = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let d_out = r.u64().ok_or_else(|| bad("truncated header"))? as usize;
        let n = d_in.checked_mul(d_out).ok_or_else(|| bad("dimension overflow"))?;
        let mut values = Vec::with_capacity(n + d_out);
        for _ in 0..n + d_out {
            values.push(f64::from_le_bytes(r.array().ok_or_else(|| bad("truncated parameters"))?));
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        let bias = values.split_off(n);
        let adapter = Adapter {
            d_in,
            d_out,
            weights: values,
            bias,
            version: adapter_version,
        };
        adapter.validate()?;
        Ok(Self {
            adapter,
            step,
            seed,
            config_fingerprint,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        util::write_bytes(path, &self.to_bytes())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Option<&'a [u8]> {
        let end = self.pos.checked_add(n)?;
        let out = self.bytes.get(self.pos..end)?;
        self.pos = end;
        Some(out)
    }

    fn array<const N: usize>(&mut self) -> Option<[u8; N]> {
        self.take(N)?.try_into().ok()
    }

    fn u64(&mut self) -> Option<u64> {
        self.array().map(u64::from_le_bytes)
    }

    fn string(&mut self) -> Option<String> {
        let n = self.u64()? as usize;
        String::from_utf8(self.take(n)?.to_vec()).ok()
    }
}
