//! Binary checkpoint container.
//!
//! Layout: the magic bytes `GRQN`, a little-endian `u32` format version, a
//! little-endian `u64` header length, the JSON header, then every array in
//! header order as raw little-endian `f64` values.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{AdamConfig, NetworkSpec, OptimizerState, QNetwork};

const MAGIC: &[u8; 4] = b"GRQN";
const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {message}")]
    Io { path: String, message: String },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("unsupported checkpoint version {0}")]
    Version(u32),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    spec: NetworkSpec,
    optimizer: AdamConfig,
    optimizer_step: u64,
    has_target: bool,
    n_params: usize,
    meta: serde_json::Value,
}

/// Online and target networks, optimizer state and free-form metadata
/// (training step, RNG state, configuration).
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub online: QNetwork,
    pub target: Option<QNetwork>,
    pub optimizer: OptimizerState,
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Vec<u8> {
        let header = Header {
            spec: self.online.spec().clone(),
            optimizer: self.optimizer.config,
            optimizer_step: self.optimizer.step,
            has_target: self.target.is_some(),
            n_params: self.online.n_params(),
            meta: self.meta.clone(),
        };
        let json = serde_json::to_vec(&header).expect("header serializes");
        let n_arrays = 3 + usize::from(self.target.is_some());
        let mut out = Vec::with_capacity(16 + json.len() + n_arrays * 8 * header.n_params);
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        let mut arrays = vec![self.online.params()];
        if let Some(t) = &self.target {
            arrays.push(t.params());
        }
        arrays.push(&self.optimizer.m);
        arrays.push(&self.optimizer.v);
        for a in arrays {
            for x in a {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
        let mut r = bytes;
        let mut magic = [0u8; 4];
        read_exact(&mut r, &mut magic)?;
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic);
        }
        let mut word = [0u8; 4];
        read_exact(&mut r, &mut word)?;
        let version = u32::from_le_bytes(word);
        if version != VERSION {
            return Err(CheckpointError::Version(version));
        }
        let mut len = [0u8; 8];
        read_exact(&mut r, &mut len)?;
        let len = usize::try_from(u64::from_le_bytes(len))
            .map_err(|_| CheckpointError::Malformed("header length".into()))?;
        if len > r.len() {
            return Err(CheckpointError::Malformed("truncated header".into()));
        }
        let header: Header =
            serde_json::from_slice(&r[..len]).map_err(|e| CheckpointError::Malformed(e.to_string()))?;
        r = &r[len..];

        let n = header.n_params;
        let n_arrays = 3 + usize::from(header.has_target);
        if r.len() != n_arrays * n * 8 {
            return Err(CheckpointError::Malformed(format!(
                "expected {} payload bytes, found {}",
                n_arrays * n * 8,
                r.len()
            )));
        }
        let mut arrays = r.chunks_exact(n * 8).map(|chunk| {
            chunk
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8-byte chunk")))
                .collect::<Vec<f64>>()
        });
        let mut next = || arrays.next().unwrap_or_default();
        let wrap = |spec: &NetworkSpec, p: Vec<f64>| {
            QNetwork::from_params(spec.clone(), p).map_err(|e| CheckpointError::Malformed(e.to_string()))
        };
        let online = wrap(&header.spec, next())?;
        let target = if header.has_target {
            Some(wrap(&header.spec, next())?)
        } else {
            None
        };
        let optimizer = OptimizerState {
            config: header.optimizer,
            m: next(),
            v: next(),
            step: header.optimizer_step,
        };
        Ok(Checkpoint {
            online,
            target,
            optimizer,
            meta: header.meta,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
        let path = path.as_ref();
        let io = |e: std::io::Error| CheckpointError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        };
        let mut f = std::fs::File::create(path).map_err(io)?;
        f.write_all(&self.to_bytes()).map_err(io)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| CheckpointError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Checkpoint::from_bytes(&bytes)
    }
}

fn read_exact(r: &mut &[u8], buf: &mut [u8]) -> Result<(), CheckpointError> {
    r.read_exact(buf)
        .map_err(|_| CheckpointError::Malformed("truncated file".into()))
}
