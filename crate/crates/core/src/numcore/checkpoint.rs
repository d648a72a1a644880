//! Flat binary container of named tensors.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! magic   "TFBMCKP1"
//! count   u32
//! entry*  name_len u32 | name utf-8 | rank u32 | extents u64 * rank | f64 * numel
//! ```
//!
//! Model parameters use their plain names. Optimizer and training state live
//! under the reserved prefixes [`OPTIM_M`], [`OPTIM_V`] and [`META`].

use std::collections::BTreeMap;

use super::optim::{OptimConfig, OptimState, ParamStore};
use super::Tensor;

pub const MAGIC: &[u8; 8] = b"TFBMCKP1";
pub const OPTIM_M: &str = "optim.m/";
pub const OPTIM_V: &str = "optim.v/";
pub const META: &str = "meta/";

const MAX_RANK: usize = 8;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum CheckpointError {
    #[error("bad magic header")]
    BadMagic,
    #[error("truncated input at byte {0}")]
    Truncated(usize),
    #[error("entry name is not valid utf-8")]
    BadName,
    #[error("duplicate entry {0}")]
    Duplicate(String),
    #[error("rank {0} exceeds limit")]
    RankTooLarge(usize),
    #[error("tensor {0} is too large for the remaining input")]
    TooLarge(String),
    #[error("trailing bytes after last entry")]
    Trailing,
    #[error("missing entry {0}")]
    Missing(String),
    #[error("invalid optimizer state: {0}")]
    BadState(String),
}

pub fn encode(entries: &BTreeMap<String, Tensor>) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(entries.len() as u32).to_le_bytes());
    for (name, t) in entries {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
        for &e in t.shape() {
            out.extend_from_slice(&(e as u64).to_le_bytes());
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
    out
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or(CheckpointError::Truncated(self.pos))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn remaining(&self) -> usize {
        self.buf.len() - self.pos
    }
}

/// Parses a container produced by [`encode`]. Never panics on malformed input.
pub fn decode(bytes: &[u8]) -> Result<BTreeMap<String, Tensor>, CheckpointError> {
    let mut r = Reader { buf: bytes, pos: 0 };
    if r.take(MAGIC.len()).map_err(|_| CheckpointError::BadMagic)? != MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    let count = r.u32()? as usize;
    let mut out = BTreeMap::new();
    for _ in 0..count {
        let name_len = r.u32()? as usize;
        let name = std::str::from_utf8(r.take(name_len)?)
            .map_err(|_| CheckpointError::BadName)?
            .to_string();
        let rank = r.u32()? as usize;
        if rank > MAX_RANK {
            return Err(CheckpointError::RankTooLarge(rank));
        }
        let mut shape = Vec::with_capacity(rank);
        let mut numel: usize = 1;
        for _ in 0..rank {
            let e = usize::try_from(r.u64()?).map_err(|_| CheckpointError::TooLarge(name.clone()))?;
            numel = numel
                .checked_mul(e)
                .ok_or_else(|| CheckpointError::TooLarge(name.clone()))?;
            shape.push(e);
        }
        let bytes_needed = numel
            .checked_mul(8)
            .filter(|&b| b <= r.remaining())
            .ok_or_else(|| CheckpointError::TooLarge(name.clone()))?;
        let payload = r.take(bytes_needed)?;
        let data: Vec<f64> = payload
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
            .collect();
        let t = Tensor::new(shape, data).map_err(|_| CheckpointError::TooLarge(name.clone()))?;
        if out.insert(name.clone(), t).is_some() {
            return Err(CheckpointError::Duplicate(name));
        }
    }
    if r.remaining() != 0 {
        return Err(CheckpointError::Trailing);
    }
    Ok(out)
}

/// Everything needed to resume training.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub params: ParamStore,
    pub optim: Option<OptimState>,
    /// Scalar training metadata (epoch, best validation loss, ...).
    pub meta: BTreeMap<String, f64>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut entries: BTreeMap<String, Tensor> = self.params.clone();
        if let Some(opt) = &self.optim {
            for (k, t) in &opt.first_moment {
                entries.insert(format!("{OPTIM_M}{k}"), t.clone());
            }
            for (k, t) in &opt.second_moment {
                entries.insert(format!("{OPTIM_V}{k}"), t.clone());
            }
            let c = &opt.config;
            let scalars = [
                ("optim.step", opt.step as f64),
                ("optim.lr", opt.lr),
                ("optim.base_lr", c.lr),
                ("optim.weight_decay", c.weight_decay),
                ("optim.beta1", c.beta1),
                ("optim.beta2", c.beta2),
                ("optim.eps", c.eps),
                ("optim.step_size", c.step_size as f64),
                ("optim.gamma", c.gamma),
            ];
            for (k, v) in scalars {
                entries.insert(k.to_string(), Tensor::scalar(v));
            }
        }
        for (k, v) in &self.meta {
            entries.insert(format!("{META}{k}"), Tensor::scalar(*v));
        }
        encode(&entries)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let entries = decode(bytes)?;
        let mut params = ParamStore::new();
        let mut first = ParamStore::new();
        let mut second = ParamStore::new();
        let mut scalars = BTreeMap::new();
        let mut meta = BTreeMap::new();
        for (k, t) in entries {
            if let Some(rest) = k.strip_prefix(OPTIM_M) {
                first.insert(rest.to_string(), t);
            } else if let Some(rest) = k.strip_prefix(OPTIM_V) {
                second.insert(rest.to_string(), t);
            } else if let Some(rest) = k.strip_prefix(META) {
                meta.insert(rest.to_string(), scalar_of(&k, &t)?);
            } else if k.starts_with("optim.") {
                scalars.insert(k.clone(), scalar_of(&k, &t)?);
            } else {
                params.insert(k, t);
            }
        }
        let optim = if scalars.is_empty() {
            if !first.is_empty() || !second.is_empty() {
                return Err(CheckpointError::Missing("optim.step".into()));
            }
            None
        } else {
            let get = |k: &str| {
                scalars
                    .get(k)
                    .copied()
                    .ok_or_else(|| CheckpointError::Missing(k.to_string()))
            };
            let step_size = get("optim.step_size")?;
            let step = get("optim.step")?;
            if !(step >= 0.0 && step.fract() == 0.0 && step_size >= 1.0 && step_size.fract() == 0.0) {
                return Err(CheckpointError::BadState("non-integer step counters".into()));
            }
            let config = OptimConfig {
                lr: get("optim.base_lr")?,
                weight_decay: get("optim.weight_decay")?,
                beta1: get("optim.beta1")?,
                beta2: get("optim.beta2")?,
                eps: get("optim.eps")?,
                step_size: step_size as usize,
                gamma: get("optim.gamma")?,
            };
            let mut st = OptimState::new(config).map_err(|e| CheckpointError::BadState(e.to_string()))?;
            st.lr = get("optim.lr")?;
            st.step = step as u64;
            for (k, m) in &first {
                let shape_ok = params.get(k).is_some_and(|p| p.shape() == m.shape())
                    && second.get(k).is_some_and(|v| v.shape() == m.shape());
                if !shape_ok {
                    return Err(CheckpointError::BadState(format!("moments for {k} do not match")));
                }
            }
            if first.len() != second.len() {
                return Err(CheckpointError::BadState("moment sets differ".into()));
            }
            st.first_moment = first;
            st.second_moment = second;
            Some(st)
        };
        Ok(Self { params, optim, meta })
    }
}

fn scalar_of(name: &str, t: &Tensor) -> Result<f64, CheckpointError> {
    if t.numel() == 1 {
        Ok(t.item())
    } else {
        Err(CheckpointError::BadState(format!("{name} is not a scalar")))
    }
}
