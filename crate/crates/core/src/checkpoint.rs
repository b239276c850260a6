//! The LCAD binary file format for trained models and activation tensors.
//!
//! Layout, all integers and floats little-endian:
//!
//! ```text
//! magic   4 bytes  "LCAD"
//! version u32      currently 1
//! kind    u8       0 sparse-coding model, 1 autoencoder model, 2 activations
//! k       u32      number of elements / filters
//! patch   u32
//! channels u32
//! stride  u32
//! [kind 2 only] map_height u32, map_width u32
//! payload f64...
//! ```
//!
//! Payloads: kind 0 stores the `k * patch * patch * channels` dictionary
//! values element-major; kind 1 stores encoder values, then decoder values,
//! then `k` biases; kind 2 stores `map_height * map_width * k` coefficients
//! site-major. Writes go to a temp file in the same directory followed by a
//! rename.

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::ae::AutoencoderModel;
use crate::tensor::{ActivationTensor, Dictionary, TensorError};
use crate::train::DictShape;
use crate::ModelKind;

pub const MAGIC: [u8; 4] = *b"LCAD";
pub const FORMAT_VERSION: u32 = 1;

const KIND_SPARSE_CODING: u8 = 0;
const KIND_AUTOENCODER: u8 = 1;
const KIND_ACTIVATIONS: u8 = 2;

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path} is not an LCAD file (bad magic)")]
    BadMagic { path: PathBuf },
    #[error("{path} uses unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },
    #[error("{path} holds kind {kind}, expected {expected}")]
    WrongKind { path: PathBuf, kind: u8, expected: String },
    #[error("{path} is truncated or inconsistent")]
    Truncated { path: PathBuf },
    #[error("{path} holds invalid values: {source}")]
    Invalid {
        path: PathBuf,
        #[source]
        source: TensorError,
    },
}

/// A loadable/saveable model: either family, at the f64 precision the format
/// stores.
#[derive(Debug, Clone)]
pub enum Model {
    SparseCoding(Dictionary<f64>),
    Autoencoder(AutoencoderModel<f64>),
}

impl Model {
    pub fn kind(&self) -> ModelKind {
        match self {
            Model::SparseCoding(_) => ModelKind::SparseCoding,
            Model::Autoencoder(_) => ModelKind::Autoencoder,
        }
    }

    pub fn dict_shape(&self) -> DictShape {
        match self {
            Model::SparseCoding(d) => d.shape(),
            Model::Autoencoder(m) => m.encoder.shape(),
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), CheckpointError> {
        let (kind, shape) = (self.kind(), self.dict_shape());
        let mut buf = header(kind_byte(kind), &shape);
        match self {
            Model::SparseCoding(dict) => push_f64s(&mut buf, dict.elements_flat()),
            Model::Autoencoder(m) => {
                push_f64s(&mut buf, m.encoder.elements_flat());
                push_f64s(&mut buf, m.decoder.elements_flat());
                push_f64s(&mut buf, &m.encoder_bias);
            }
        }
        write_atomic(path, &buf)
    }

    pub fn load(path: &Path) -> Result<Self, CheckpointError> {
        let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut r = Reader { bytes: &bytes, pos: 0, path };
        let (kind, shape) = r.header()?;
        let elem_count = shape.num_elements * shape.patch * shape.patch * shape.channels;
        let invalid = |source| CheckpointError::Invalid { path: path.to_path_buf(), source };
        match kind {
            KIND_SPARSE_CODING => {
                let values = r.f64s(elem_count)?;
                r.finish()?;
                let dict = Dictionary::new(shape.num_elements, shape.patch, shape.channels, shape.stride, values)
                    .map_err(invalid)?;
                Ok(Model::SparseCoding(dict))
            }
            KIND_AUTOENCODER => {
                let enc = r.f64s(elem_count)?;
                let dec = r.f64s(elem_count)?;
                let bias = r.f64s(shape.num_elements)?;
                r.finish()?;
                let encoder = Dictionary::new(shape.num_elements, shape.patch, shape.channels, shape.stride, enc)
                    .map_err(invalid)?;
                let decoder = Dictionary::new(shape.num_elements, shape.patch, shape.channels, shape.stride, dec)
                    .map_err(invalid)?;
                let model = AutoencoderModel::new(encoder, bias, decoder).map_err(invalid)?;
                Ok(Model::Autoencoder(model))
            }
            other => Err(CheckpointError::WrongKind {
                path: path.to_path_buf(),
                kind: other,
                expected: "a model (kind 0 or 1)".into(),
            }),
        }
    }
}

/// Patch geometry that an activation file carries so downstream rendering
/// can recover receptive-field footprints.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ActGeometry {
    pub patch: usize,
    pub channels: usize,
    pub stride: usize,
}

pub fn save_activations(
    acts: &ActivationTensor<f64>,
    geometry: &ActGeometry,
    path: &Path,
) -> Result<(), CheckpointError> {
    let shape = DictShape {
        num_elements: acts.num_elements(),
        patch: geometry.patch,
        channels: geometry.channels,
        stride: geometry.stride,
    };
    let mut buf = header(KIND_ACTIVATIONS, &shape);
    buf.extend_from_slice(&(acts.map_height() as u32).to_le_bytes());
    buf.extend_from_slice(&(acts.map_width() as u32).to_le_bytes());
    push_f64s(&mut buf, acts.as_slice());
    write_atomic(path, &buf)
}

pub fn load_activations(path: &Path) -> Result<(ActivationTensor<f64>, ActGeometry), CheckpointError> {
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let mut r = Reader { bytes: &bytes, pos: 0, path };
    let (kind, shape) = r.header()?;
    if kind != KIND_ACTIVATIONS {
        return Err(CheckpointError::WrongKind {
            path: path.to_path_buf(),
            kind,
            expected: "activations (kind 2)".into(),
        });
    }
    let map_h = r.u32()? as usize;
    let map_w = r.u32()? as usize;
    let values = r.f64s(map_h * map_w * shape.num_elements)?;
    r.finish()?;
    let acts = ActivationTensor::new(map_h, map_w, shape.num_elements, values).map_err(|source| {
        CheckpointError::Invalid { path: path.to_path_buf(), source }
    })?;
    Ok((acts, ActGeometry { patch: shape.patch, channels: shape.channels, stride: shape.stride }))
}

fn kind_byte(kind: ModelKind) -> u8 {
    match kind {
        ModelKind::SparseCoding => KIND_SPARSE_CODING,
        ModelKind::Autoencoder => KIND_AUTOENCODER,
    }
}

fn header(kind: u8, shape: &DictShape) -> Vec<u8> {
    let mut buf = Vec::new();
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    buf.push(kind);
    for dim in [shape.num_elements, shape.patch, shape.channels, shape.stride] {
        buf.extend_from_slice(&(dim as u32).to_le_bytes());
    }
    buf
}

fn push_f64s(buf: &mut Vec<u8>, values: &[f64]) {
    buf.reserve(values.len() * 8);
    for v in values {
        buf.extend_from_slice(&v.to_le_bytes());
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CheckpointError> {
    let io_err = |source| CheckpointError::Io { path: path.to_path_buf(), source };
    let file_name = path
        .file_name()
        .ok_or_else(|| io_err(std::io::Error::new(std::io::ErrorKind::InvalidInput, "path has no file name")))?;
    let tmp = path.with_file_name(format!(".{}.tmp", file_name.to_string_lossy()));
    {
        let mut f = std::fs::File::create(&tmp).map_err(io_err)?;
        f.write_all(bytes).map_err(io_err)?;
        f.sync_all().map_err(io_err)?;
    }
    std::fs::rename(&tmp, path).map_err(io_err)
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], CheckpointError> {
        if self.pos + n > self.bytes.len() {
            return Err(CheckpointError::Truncated { path: self.path.to_path_buf() });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32, CheckpointError> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn u8(&mut self) -> Result<u8, CheckpointError> {
        Ok(self.take(1)?[0])
    }

    fn f64s(&mut self, count: usize) -> Result<Vec<f64>, CheckpointError> {
        let raw = self.take(count * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes([c[0], c[1], c[2], c[3], c[4], c[5], c[6], c[7]]))
            .collect())
    }

    fn header(&mut self) -> Result<(u8, DictShape), CheckpointError> {
        let magic = self.take(4)?;
        if magic != MAGIC {
            return Err(CheckpointError::BadMagic { path: self.path.to_path_buf() });
        }
        let version = self.u32()?;
        if version != FORMAT_VERSION {
            return Err(CheckpointError::UnsupportedVersion { path: self.path.to_path_buf(), version });
        }
        let kind = self.u8()?;
        let num_elements = self.u32()? as usize;
        let patch = self.u32()? as usize;
        let channels = self.u32()? as usize;
        let stride = self.u32()? as usize;
        Ok((kind, DictShape { num_elements, patch, channels, stride }))
    }

    fn finish(&self) -> Result<(), CheckpointError> {
        if self.pos != self.bytes.len() {
            return Err(CheckpointError::Truncated { path: self.path.to_path_buf() });
        }
        Ok(())
    }
}
