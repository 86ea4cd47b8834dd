//! Checkpoint file: `"MVCK"`, `u16` version, `u32` length + JSON header
//! (training config and epoch), `u32` parameter count, then a name table of
//! `(u16 length, UTF-8 name, u8 rank, u32 extents…)` entries, then every
//! parameter's `f32` values in table order. Little-endian throughout.

use std::path::Path;

use mivit_autodiff::Tensor;
use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use crate::error::{Error, Result};
use crate::io;
use crate::model::Mivit;
use crate::params::{group_of, ParamStore};

const MAGIC: &[u8; 4] = b"MVCK";
const VERSION: u16 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct Header {
    config: TrainConfig,
    epoch: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    /// Number of completed epochs.
    pub epoch: usize,
    pub params: ParamStore<f32>,
}

fn fmt_err(offset: usize, detail: impl Into<String>) -> Error {
    Error::Format { offset: offset as u64, detail: detail.into() }
}

struct Cursor<'a> {
    b: &'a [u8],
    pos: usize,
}

impl Cursor<'_> {
    fn take(&mut self, n: usize) -> Result<&[u8]> {
        if self.b.len() - self.pos < n {
            return Err(fmt_err(self.b.len(), format!("checkpoint truncated: {n} bytes needed at {}", self.pos)));
        }
        let s = &self.b[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }
    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }
    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn encode(&self) -> Vec<u8> {
        let header = serde_json::to_vec(&Header { config: self.config.clone(), epoch: self.epoch })
            .expect("config serialises");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(header.len() as u32).to_le_bytes());
        out.extend_from_slice(&header);
        out.extend_from_slice(&(self.params.len() as u32).to_le_bytes());
        for (name, t) in self.params.names().iter().zip(self.params.tensors()) {
            out.extend_from_slice(&(name.len() as u16).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(t.shape().len() as u8);
            for &d in t.shape() {
                out.extend_from_slice(&(d as u32).to_le_bytes());
            }
        }
        for t in self.params.tensors() {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut c = Cursor { b: bytes, pos: 0 };
        if c.take(4)? != MAGIC {
            return Err(fmt_err(0, "not a checkpoint (bad magic)"));
        }
        let v = c.u16()?;
        if v != VERSION {
            return Err(fmt_err(4, format!("checkpoint version {v} is not supported")));
        }
        let hl = c.u32()? as usize;
        let at = c.pos;
        let header: Header =
            serde_json::from_slice(c.take(hl)?).map_err(|e| fmt_err(at, format!("checkpoint header: {e}")))?;
        let n = c.u32()? as usize;
        let mut table = Vec::with_capacity(n);
        for _ in 0..n {
            let at = c.pos;
            let len = c.u16()? as usize;
            let name = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| fmt_err(at, "parameter name is not UTF-8"))?;
            let rank = c.u8()? as usize;
            let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
            table.push((name, shape));
        }
        let mut params = ParamStore::default();
        for (name, shape) in table {
            let numel: usize = shape.iter().product();
            let raw = c.take(numel * 4)?;
            let data = raw.chunks_exact(4).map(|b| f32::from_le_bytes(b.try_into().unwrap())).collect();
            params.push(name, Tensor::new(&shape, data)?);
        }
        if c.pos != bytes.len() {
            return Err(fmt_err(c.pos, "trailing bytes after parameter data"));
        }
        Ok(Checkpoint { config: header.config, epoch: header.epoch, params })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        io::write_atomic(path, &self.encode())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::decode(&io::read(path)?)
    }

    /// Rebuilds the model layout and checks that every parameter matches it
    /// by name and shape.
    pub fn model(&self) -> Result<Mivit> {
        let (model, fresh) = Mivit::new(&self.config.model, self.config.seed)?;
        if fresh.names() != self.params.names() {
            return Err(Error::Data("checkpoint parameter names do not match the configured model".into()));
        }
        for ((name, a), b) in fresh.names().iter().zip(fresh.tensors()).zip(self.params.tensors()) {
            if a.shape() != b.shape() {
                return Err(Error::Data(format!(
                    "checkpoint parameter {name} has shape {:?}, model expects {:?}",
                    b.shape(),
                    a.shape()
                )));
            }
        }
        Ok(model)
    }

    /// The `(name, tensor)` pairs of one parameter group.
    pub fn group(&self, group: &str) -> Vec<(&str, &Tensor<f32>)> {
        self.params
            .names()
            .iter()
            .zip(self.params.tensors())
            .filter(|(n, _)| group_of(n) == group)
            .map(|(n, t)| (n.as_str(), t))
            .collect()
    }
}
