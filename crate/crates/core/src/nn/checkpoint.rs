//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//! `MAGIC`, `u32` version, `u64` header length, JSON header (network spec
//! and string metadata), `u64` tensor count, then per tensor a `u32` rank,
//! `u64` dims and `f64` values, and finally a CRC-32 of everything before it.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{Network, NetworkSpec, NnError, Params, Tensor};

pub const MAGIC: &[u8; 8] = b"LBNNCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub network: Network,
    pub meta: BTreeMap<String, String>,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    meta: BTreeMap<String, String>,
}

impl Checkpoint {
    pub fn new(network: Network) -> Self {
        Self {
            network,
            meta: BTreeMap::new(),
        }
    }

    /// The stored network, if its spec equals `spec`.
    pub fn network_matching(&self, spec: &NetworkSpec) -> Result<&Network, NnError> {
        if &self.network.spec != spec {
            return Err(NnError::SpecMismatch);
        }
        Ok(&self.network)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let header = serde_json::to_vec(&Header {
        spec: ckpt.network.spec.clone(),
        meta: ckpt.meta.clone(),
    })
    .expect("spec serializes");
    let mut out = Vec::with_capacity(64 + header.len() + 8 * ckpt.network.params.count());
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&(header.len() as u64).to_le_bytes());
    out.extend_from_slice(&header);
    let tensors = &ckpt.network.params.tensors;
    out.extend_from_slice(&(tensors.len() as u64).to_le_bytes());
    for t in tensors {
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &d in t.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    let crc = crc32fast::hash(&out);
    out.extend_from_slice(&crc.to_le_bytes());
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], NnError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| NnError::Corrupt("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, NnError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, NnError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn len(&mut self) -> Result<usize, NnError> {
        let v = self.u64()?;
        usize::try_from(v)
            .ok()
            .filter(|&n| n <= self.buf.len())
            .ok_or_else(|| NnError::Corrupt("length field out of range".into()))
    }
}

pub fn read_checkpoint(bytes: &[u8]) -> Result<Checkpoint, NnError> {
    if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
        return Err(NnError::Corrupt("bad magic bytes".into()));
    }
    let mut r = Reader { buf: bytes, pos: MAGIC.len() };
    let version = r.u32()?;
    if version != VERSION {
        return Err(NnError::Corrupt(format!("unsupported format version {version}")));
    }
    if bytes.len() < r.pos + 4 {
        return Err(NnError::Corrupt("truncated".into()));
    }
    let (body, crc) = bytes.split_at(bytes.len() - 4);
    let header_len = r.len()?;
    let header: Header = serde_json::from_slice(r.take(header_len)?)
        .map_err(|e| NnError::Corrupt(format!("header: {e}")))?;
    let count = r.len()?;
    let mut tensors = Vec::with_capacity(count.min(1024));
    for _ in 0..count {
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.len()).collect::<Result<Vec<_>, _>>()?;
        let n = shape
            .iter()
            .try_fold(1usize, |a, &d| a.checked_mul(d))
            .filter(|&n| n <= bytes.len() / 8)
            .ok_or_else(|| NnError::Corrupt("tensor too large".into()))?;
        let data = r.take(8 * n)?.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect();
        tensors.push(Tensor::new(shape, data).map_err(|e| NnError::Corrupt(e.to_string()))?);
    }
    if r.pos != body.len() {
        return Err(NnError::Corrupt(if r.pos > body.len() { "truncated" } else { "trailing bytes" }.into()));
    }
    if crc32fast::hash(body).to_le_bytes() != crc {
        return Err(NnError::Corrupt("checksum mismatch".into()));
    }
    let network =
        Network::from_parts(header.spec, Params { tensors }).map_err(|e| NnError::Corrupt(e.to_string()))?;
    if !network.params.is_finite() {
        return Err(NnError::Corrupt("non-finite parameters".into()));
    }
    Ok(Checkpoint {
        network,
        meta: header.meta,
    })
}

pub fn save_checkpoint(path: &Path, ckpt: &Checkpoint) -> Result<(), NnError> {
    std::fs::write(path, write_checkpoint(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, NnError> {
    read_checkpoint(&std::fs::read(path)?)
}
