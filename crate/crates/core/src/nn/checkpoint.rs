//! Binary checkpoint format.
//!
//! ```text
//! "FSEG"            magic, 4 bytes
//! u32 LE            version (= 1)
//! u64 LE            optimizer iteration
//! u32 LE            entry count
//! per entry:
//!   u16 LE          name length in bytes
//!   [u8]            UTF-8 name
//!   u8              ndim
//!   ndim × u32 LE   extents
//!   numel × f32 LE  values
//! ```
//!
//! No padding and no alignment. Entries appear in registry order.

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::error::Result;
use crate::nn::registry::ParamRegistry;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

pub const MAGIC: &[u8; 4] = b"FSEG";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint: bad magic bytes {0:02x?}")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(String),
    #[error("{0} trailing bytes after the last entry")]
    TrailingBytes(usize),
    #[error("entry {index}: name is not valid UTF-8")]
    BadName { index: usize },
    #[error("shape mismatch for `{name}`: checkpoint has {found:?}, model expects {expected:?}")]
    ShapeMismatch { name: String, expected: Vec<usize>, found: Vec<usize> },
    #[error("entry {index}: checkpoint has `{found}`, model expects `{expected}`")]
    NameMismatch { index: usize, expected: String, found: String },
    #[error("checkpoint has {found} entries, model expects {expected}")]
    CountMismatch { expected: usize, found: usize },
    #[error("cannot encode `{0}`: field exceeds the format's limits")]
    TooLarge(String),
}

impl CheckpointError {
    pub fn kind(&self) -> &'static str {
        match self {
            CheckpointError::BadMagic(_) => "checkpoint-magic",
            CheckpointError::UnsupportedVersion(_) => "checkpoint-version",
            CheckpointError::Truncated(_) | CheckpointError::TrailingBytes(_) => "checkpoint-truncated",
            CheckpointError::BadName { .. } => "checkpoint-format",
            CheckpointError::ShapeMismatch { .. }
            | CheckpointError::NameMismatch { .. }
            | CheckpointError::CountMismatch { .. } => "checkpoint-shape",
            CheckpointError::TooLarge(_) => "checkpoint-format",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckpointEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f32>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub iteration: u64,
    pub entries: Vec<CheckpointEntry>,
}

impl Checkpoint {
    pub fn from_registry<T: Scalar>(registry: &ParamRegistry<T>, iteration: u64) -> Self {
        let entries = registry
            .iter()
            .map(|(name, p)| CheckpointEntry {
                name: name.to_string(),
                shape: p.value.shape().to_vec(),
                values: p.value.data().iter().map(|v| v.as_f32()).collect(),
            })
            .collect();
        Self { iteration, entries }
    }

    pub fn encode(&self) -> Result<Vec<u8>, CheckpointError> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&self.iteration.to_le_bytes());
        let count = u32::try_from(self.entries.len()).map_err(|_| CheckpointError::TooLarge("entry count".into()))?;
        out.extend_from_slice(&count.to_le_bytes());
        for e in &self.entries {
            let too_large = || CheckpointError::TooLarge(e.name.clone());
            let len = u16::try_from(e.name.len()).map_err(|_| too_large())?;
            out.extend_from_slice(&len.to_le_bytes());
            out.extend_from_slice(e.name.as_bytes());
            out.push(u8::try_from(e.shape.len()).map_err(|_| too_large())?);
            for &d in &e.shape {
                out.extend_from_slice(&u32::try_from(d).map_err(|_| too_large())?.to_le_bytes());
            }
            for v in &e.values {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, CheckpointError> {
        let mut r = Reader { bytes, pos: 0 };
        let magic: [u8; 4] = r.take(4, "magic")?.try_into().expect("4 bytes");
        if &magic != MAGIC {
            return Err(CheckpointError::BadMagic(magic));
        }
        let version = r.u32("version")?;
        if version != VERSION {
            return Err(CheckpointError::UnsupportedVersion(version));
        }
        let iteration = u64::from_le_bytes(r.take(8, "iteration")?.try_into().expect("8 bytes"));
        let count = r.u32("entry count")? as usize;
        let mut entries = Vec::with_capacity(count.min(4096));
        for index in 0..count {
            let ctx = |what: &str| format!("entry {index} {what}");
            let len = u16::from_le_bytes(r.take(2, &ctx("name length"))?.try_into().expect("2 bytes")) as usize;
            let name = std::str::from_utf8(r.take(len, &ctx("name"))?)
                .map_err(|_| CheckpointError::BadName { index })?
                .to_string();
            let ndim = r.take(1, &ctx("rank"))?[0] as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32(&ctx("extent"))? as usize);
            }
            let numel = shape
                .iter()
                .try_fold(1usize, |a, &d| a.checked_mul(d))
                .and_then(|n| n.checked_mul(4))
                .ok_or_else(|| CheckpointError::Truncated(ctx("values")))?;
            let raw = r.take(numel, &ctx("values"))?;
            let values = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
            entries.push(CheckpointEntry { name, shape, values });
        }
        if r.pos != bytes.len() {
            return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
        }
        Ok(Self { iteration, entries })
    }

    /// Verifies that entries match `registry` one-to-one, in order and shape.
    pub fn validate_against<T: Scalar>(&self, registry: &ParamRegistry<T>) -> Result<(), CheckpointError> {
        for (index, ((name, p), e)) in registry.iter().zip(&self.entries).enumerate() {
            if name != e.name {
                return Err(CheckpointError::NameMismatch { index, expected: name.to_string(), found: e.name.clone() });
            }
            if p.value.shape() != e.shape.as_slice() {
                return Err(CheckpointError::ShapeMismatch {
                    name: e.name.clone(),
                    expected: p.value.shape().to_vec(),
                    found: e.shape.clone(),
                });
            }
        }
        if registry.len() != self.entries.len() {
            return Err(CheckpointError::CountMismatch { expected: registry.len(), found: self.entries.len() });
        }
        Ok(())
    }

    /// Copies checkpoint values into `registry` after validating the layout.
    pub fn restore_into<T: Scalar>(&self, registry: &mut ParamRegistry<T>) -> Result<()> {
        self.validate_against(registry)?;
        for ((_, p), e) in registry.iter_mut().zip(&self.entries) {
            p.value = Tensor::from_vec(&e.shape, e.values.iter().map(|&v| T::lit(v as f64)).collect())?;
        }
        Ok(())
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        let end = end.ok_or_else(|| CheckpointError::Truncated(what.to_string()))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self, what: &str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
}

pub fn save_checkpoint<T: Scalar>(registry: &ParamRegistry<T>, iteration: u64, path: &Path) -> Result<()> {
    let bytes = Checkpoint::from_registry(registry, iteration).encode()?;
    fs::write(path, bytes)?;
    Ok(())
}

/// Reads a checkpoint, validating it against `expected` when given.
pub fn load_checkpoint<T: Scalar>(path: &Path, expected: Option<&ParamRegistry<T>>) -> Result<Checkpoint> {
    let ckpt = Checkpoint::decode(&fs::read(path)?)?;
    if let Some(reg) = expected {
        ckpt.validate_against(reg)?;
    }
    Ok(ckpt)
}
