//! Binary checkpoint container.
//!
//! ```text
//! "G2PM" | u32 version | u8 dtype | u32 n | n bytes JSON {config, meta}
//! u32 tensor count | per tensor: u16 name length, name, u8 rank, u32 dims
//! tensor data in manifest order, little-endian
//! ```
//! All integers are little-endian. The dtype byte is 0 for 32-bit and 1 for
//! 64-bit floats.

use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{ModelConfig, ModelError, TransducerModel};
use crate::provenance::ArtifactMeta;
use crate::{DType, Scalar};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"G2PM";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    meta: Option<ArtifactMeta>,
}

pub fn write_checkpoint<T: Scalar>(
    model: &TransducerModel<T>,
    meta: Option<&ArtifactMeta>,
    mut out: impl Write,
) -> Result<(), ModelError> {
    let mut buf = Vec::with_capacity(64 + model.parameter_count() * T::DTYPE.width());
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    buf.push(T::DTYPE.tag());
    let header =
        serde_json::to_vec(&Header { config: model.config().clone(), meta: meta.cloned() }).expect("header serializes");
    buf.extend_from_slice(&(header.len() as u32).to_le_bytes());
    buf.extend_from_slice(&header);
    let specs = model.layout().specs();
    buf.extend_from_slice(&(specs.len() as u32).to_le_bytes());
    for s in specs {
        buf.extend_from_slice(&(s.name.len() as u16).to_le_bytes());
        buf.extend_from_slice(s.name.as_bytes());
        buf.push(s.shape.len() as u8);
        for &d in &s.shape {
            buf.extend_from_slice(&(d as u32).to_le_bytes());
        }
    }
    for &p in model.params() {
        p.write_le(&mut buf);
    }
    out.write_all(&buf)?;
    Ok(())
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ModelError> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| ModelError::CorruptCheckpoint(format!("truncated at byte {}", self.pos)))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8, ModelError> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16, ModelError> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("2 bytes")))
    }

    fn u32(&mut self) -> Result<u32, ModelError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

fn read_values<T: Scalar, S: Scalar>(bytes: &[u8]) -> Vec<T> {
    bytes.chunks_exact(S::DTYPE.width()).map(|c| T::lit(S::read_le(c).as_f64())).collect()
}

/// Reads a checkpoint, converting to `T` if it was stored at the other width.
pub fn read_checkpoint<T: Scalar>(
    mut input: impl Read,
) -> Result<(TransducerModel<T>, Option<ArtifactMeta>), ModelError> {
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    let mut c = Cursor { bytes: &bytes, pos: 0 };
    if c.take(4).ok() != Some(&CHECKPOINT_MAGIC[..]) {
        return Err(ModelError::CorruptCheckpoint("missing G2PM magic".into()));
    }
    let version = c.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(ModelError::FormatVersionMismatch { found: version, expected: CHECKPOINT_VERSION });
    }
    let tag = c.u8()?;
    let dtype = DType::from_tag(tag).ok_or_else(|| ModelError::CorruptCheckpoint(format!("unknown dtype {tag}")))?;
    let header_len = c.u32()? as usize;
    let header: Header = serde_json::from_slice(c.take(header_len)?)
        .map_err(|e| ModelError::CorruptCheckpoint(format!("header: {e}")))?;
    header.config.validate()?;
    let expected = super::Layout::new(&header.config);

    let count = c.u32()? as usize;
    if count != expected.specs().len() {
        return Err(ModelError::ShapeMismatch {
            what: "tensor count".into(),
            expected: expected.specs().len().to_string(),
            found: count.to_string(),
        });
    }
    for spec in expected.specs() {
        let len = c.u16()? as usize;
        let name = String::from_utf8(c.take(len)?.to_vec())
            .map_err(|_| ModelError::CorruptCheckpoint("tensor name is not UTF-8".into()))?;
        let rank = c.u8()? as usize;
        let shape = (0..rank).map(|_| c.u32().map(|d| d as usize)).collect::<Result<Vec<_>, _>>()?;
        if name != spec.name || shape != spec.shape {
            return Err(ModelError::ShapeMismatch {
                what: format!("tensor {}", spec.name),
                expected: format!("{} {:?}", spec.name, spec.shape),
                found: format!("{name} {shape:?}"),
            });
        }
    }
    let data = c.take(expected.total() * dtype.width())?;
    if c.pos != bytes.len() {
        return Err(ModelError::CorruptCheckpoint(format!("{} trailing bytes", bytes.len() - c.pos)));
    }
    let params = match dtype {
        DType::F32 => read_values::<T, f32>(data),
        DType::F64 => read_values::<T, f64>(data),
    };
    Ok((TransducerModel::from_params(header.config, params)?, header.meta))
}

pub fn save_checkpoint<T: Scalar>(
    model: &TransducerModel<T>,
    meta: Option<&ArtifactMeta>,
    path: impl AsRef<Path>,
) -> Result<(), ModelError> {
    let file = std::fs::File::create(path)?;
    write_checkpoint(model, meta, std::io::BufWriter::new(file))
}

pub fn load_checkpoint<T: Scalar>(
    path: impl AsRef<Path>,
) -> Result<(TransducerModel<T>, Option<ArtifactMeta>), ModelError> {
    read_checkpoint(std::fs::File::open(path)?)
}
