//! WVCK model checkpoints.
//!
//! Layout (little-endian): magic `WVCK`, u32 version (1), u8 arch
//! (1 = dgcnn, 2 = pointnet), u16 k, u16 n_classes, u32 n_tensors, then per
//! tensor a u16 name length, the ASCII name, u8 ndim, u32 dims[ndim] and
//! row-major f32 data.

use std::collections::HashSet;
use std::path::Path;

use super::bytes::{put_f32s, put_u16, put_u32, ByteReader};
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"WVCK";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Arch {
    Dgcnn,
    PointNet,
}

impl Arch {
    pub fn id(self) -> u8 {
        match self {
            Arch::Dgcnn => 1,
            Arch::PointNet => 2,
        }
    }

    pub fn from_id(id: u8) -> Result<Self> {
        match id {
            1 => Ok(Arch::Dgcnn),
            2 => Ok(Arch::PointNet),
            other => Err(Error::UnknownArch(other)),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Arch::Dgcnn => "dgcnn",
            Arch::PointNet => "pointnet",
        }
    }
}

impl std::str::FromStr for Arch {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dgcnn" => Ok(Arch::Dgcnn),
            "pointnet" => Ok(Arch::PointNet),
            other => Err(Error::invalid(format!("unknown model {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NamedTensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f32>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub arch: Arch,
    pub k: u16,
    pub n_classes: u16,
    pub tensors: Vec<NamedTensor>,
}

impl Checkpoint {
    pub fn tensor(&self, name: &str) -> Option<&NamedTensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    /// Checks names and per-tensor sizes; architecture-level shape checks
    /// happen when a model is built from the checkpoint.
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for t in &self.tensors {
            if t.name.is_empty() || !t.name.is_ascii() || t.name.len() > u16::MAX as usize {
                return Err(Error::Malformed(format!("invalid tensor name {:?}", t.name)));
            }
            if !seen.insert(t.name.as_str()) {
                return Err(Error::DuplicateTensor(t.name.clone()));
            }
            if t.shape.len() > u8::MAX as usize || t.shape.iter().any(|&d| d > u32::MAX as usize) {
                return Err(Error::Malformed(format!("tensor {} has an unencodable shape", t.name)));
            }
            let expected: usize = t.shape.iter().product();
            if expected != t.data.len() {
                return Err(Error::shape(format!(
                    "tensor {} has shape {:?} but {} values",
                    t.name,
                    t.shape,
                    t.data.len()
                )));
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.validate()?;
        let mut out = Vec::new();
        out.extend_from_slice(CHECKPOINT_MAGIC);
        put_u32(&mut out, CHECKPOINT_VERSION);
        out.push(self.arch.id());
        put_u16(&mut out, self.k);
        put_u16(&mut out, self.n_classes);
        put_u32(&mut out, self.tensors.len() as u32);
        for t in &self.tensors {
            put_u16(&mut out, t.name.len() as u16);
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                put_u32(&mut out, d as u32);
            }
            put_f32s(&mut out, &t.data);
        }
        Ok(out)
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(buf);
        r.magic(CHECKPOINT_MAGIC)?;
        let version = r.u32()?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::UnsupportedVersion {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let arch = Arch::from_id(r.u8()?)?;
        let k = r.u16()?;
        let n_classes = r.u16()?;
        let n_tensors = r.u32()?;
        let mut tensors = Vec::new();
        let mut seen = HashSet::new();
        for _ in 0..n_tensors {
            let len = r.u16()? as usize;
            let raw = r.take(len)?;
            if !raw.is_ascii() {
                return Err(Error::Malformed("non-ASCII tensor name".into()));
            }
            let name = String::from_utf8(raw.to_vec())
                .map_err(|_| Error::Malformed("non-ASCII tensor name".into()))?;
            if !seen.insert(name.clone()) {
                return Err(Error::DuplicateTensor(name));
            }
            let ndim = r.u8()? as usize;
            let mut shape = Vec::with_capacity(ndim);
            for _ in 0..ndim {
                shape.push(r.u32()? as usize);
            }
            let count = shape
                .iter()
                .try_fold(1usize, |acc, &d| acc.checked_mul(d))
                .ok_or_else(|| Error::Malformed(format!("tensor {name} is too large")))?;
            let data = r.f32_vec(count)?;
            tensors.push(NamedTensor { name, shape, data });
        }
        r.finish()?;
        let ckpt = Checkpoint {
            arch,
            k,
            n_classes,
            tensors,
        };
        ckpt.validate()?;
        Ok(ckpt)
    }
}

pub fn write_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = ckpt.to_bytes()?;
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let buf = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&buf)
}
