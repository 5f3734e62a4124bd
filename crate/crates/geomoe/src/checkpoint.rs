//! Model checkpoints.
//!
//! ```text
//! "GMOE" | version u32
//! config: layers, channels, sub_fields, experts, top_k, loc_k, attention_heads (u32 each)
//! iteration u64 | seed u64 | adam step u64 | flags u32 (bit 0: optimiser moments present)
//! block count u32, then per block: name length u32, name, rank u32, dims u32…, offset u64
//! parameter count u64 | parameters f64…
//! first moments f64… | second moments f64…     (if flags bit 0)
//! metadata length u32 | metadata (UTF-8 effective configuration)
//! ```
//!
//! Everything is little-endian; floats are stored bit-exactly.

use std::path::Path;

use geomoe_core::model::{GeoMoE, GeoMoEConfig};
use geomoe_core::train::{Adam, TrainState};

use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"GMOE";
pub const CHECKPOINT_VERSION: u32 = 1;
const FLAG_MOMENTS: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: GeoMoEConfig,
    pub state: TrainState,
    /// Training seed the parameters descend from.
    pub seed: u64,
    pub metadata: String,
}

impl Checkpoint {
    pub fn new(config: GeoMoEConfig, state: TrainState, seed: u64, metadata: String) -> Self {
        Self { config, state, seed, metadata }
    }

    pub fn params(&self) -> &[f64] {
        &self.state.params
    }

    pub fn model(&self) -> Result<GeoMoE> {
        GeoMoE::new(self.config).map_err(|e| Error::Data(format!("checkpoint config: {e}")))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let model = self.model()?;
        let p = self.state.params.len();
        if p != model.layout().len() || self.state.adam.m.len() != p || self.state.adam.v.len() != p {
            return Err(Error::Data("checkpoint state does not match its configuration".into()));
        }
        let mut b = Vec::with_capacity(64 + 24 * p + self.metadata.len());
        let u32le = |b: &mut Vec<u8>, v: usize| b.extend_from_slice(&(v as u32).to_le_bytes());
        b.extend_from_slice(CHECKPOINT_MAGIC);
        b.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let c = &self.config;
        for v in [c.layers, c.channels, c.sub_fields, c.experts, c.top_k, c.loc_k, c.attention_heads] {
            u32le(&mut b, v);
        }
        b.extend_from_slice(&(self.state.iteration as u64).to_le_bytes());
        b.extend_from_slice(&self.seed.to_le_bytes());
        b.extend_from_slice(&self.state.adam.step.to_le_bytes());
        b.extend_from_slice(&FLAG_MOMENTS.to_le_bytes());
        let blocks = model.layout().blocks();
        u32le(&mut b, blocks.len());
        for blk in blocks {
            u32le(&mut b, blk.name.len());
            b.extend_from_slice(blk.name.as_bytes());
            u32le(&mut b, blk.shape.len());
            for &d in &blk.shape {
                u32le(&mut b, d);
            }
            b.extend_from_slice(&(blk.offset as u64).to_le_bytes());
        }
        b.extend_from_slice(&(p as u64).to_le_bytes());
        for v in self.state.params.iter().chain(&self.state.adam.m).chain(&self.state.adam.v) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        u32le(&mut b, self.metadata.len());
        b.extend_from_slice(self.metadata.as_bytes());
        Ok(b)
    }

    pub fn from_bytes(bytes: &[u8], path: &Path) -> Result<Self> {
        let mut r = Cursor { bytes, pos: 0, path };
        if r.take(4)? != CHECKPOINT_MAGIC {
            return Err(Error::format(path, "not a checkpoint (missing GMOE header)"));
        }
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::format(
                path,
                format!("unsupported checkpoint version {version} (this build reads version {CHECKPOINT_VERSION})"),
            ));
        }
        let mut dims = [0usize; 7];
        for d in &mut dims {
            *d = r.u32()? as usize;
        }
        let [layers, channels, sub_fields, experts, top_k, loc_k, attention_heads] = dims;
        let config = GeoMoEConfig { layers, channels, sub_fields, experts, top_k, loc_k, attention_heads };
        let iteration = r.u64()? as usize;
        let seed = r.u64()?;
        let step = r.u64()?;
        let flags = r.u32()?;
        let model = GeoMoE::new(config).map_err(|e| Error::format(path, format!("invalid stored config: {e}")))?;
        let blocks = model.layout().blocks();
        let count = r.u32()? as usize;
        if count != blocks.len() {
            return Err(Error::format(path, format!("manifest lists {count} blocks, configuration declares {}", blocks.len())));
        }
        for blk in blocks {
            let len = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(len)?).map_err(|_| Error::format(path, "block name is not UTF-8"))?;
            let rank = r.u32()? as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32()? as usize);
            }
            let offset = r.u64()? as usize;
            if name != blk.name || shape != blk.shape || offset != blk.offset {
                return Err(Error::format(
                    path,
                    format!("block `{name}` {shape:?}@{offset} does not match expected `{}` {:?}@{}", blk.name, blk.shape, blk.offset),
                ));
            }
        }
        let p = r.u64()? as usize;
        if p != model.layout().len() {
            return Err(Error::format(path, format!("{p} parameters stored, configuration needs {}", model.layout().len())));
        }
        let params = r.f64s(p)?;
        let (m, v) = if flags & FLAG_MOMENTS != 0 { (r.f64s(p)?, r.f64s(p)?) } else { (vec![0.0; p], vec![0.0; p]) };
        let len = r.u32()? as usize;
        let metadata =
            String::from_utf8(r.take(len)?.to_vec()).map_err(|_| Error::format(path, "metadata is not UTF-8"))?;
        if r.pos != bytes.len() {
            return Err(Error::format(path, "trailing bytes after checkpoint"));
        }
        let state = TrainState { params, adam: Adam { m, v, step }, iteration };
        Ok(Self { config, state, seed, metadata })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes, path)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::format(self.path, format!("truncated checkpoint at byte {}", self.pos)));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| Error::format(self.path, "parameter count overflows"))?)?;
        Ok(raw.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
    }
}
