//! Portable on-disk representation for tensors, dataset manifests, and
//! checkpoints shared by all other modules.
//!
//! The tensor container is a fixed little-endian binary layout (`.sgt`):
//!
//! ```text
//! magic      4 bytes   b"SGT1"
//! dtype      1 byte    0 = u8, 1 = u16, 2 = f32
//! ndim       1 byte
//! shape      ndim x u64 (LE)
//! payload    row-major elements (LE)
//! ```
//!
//! A `.sgt` file may hold several records back to back; each record is the
//! exact layout above. Readers either take the first record or iterate.

mod checkpoint;
mod manifest;

pub use checkpoint::{
    checkpoint_dir, load_checkpoint, save_checkpoint, CheckpointRecord, NamedTensors,
};
pub use manifest::{
    load_manifest, parse_manifest, save_manifest, DatasetManifest, Domain, DomainSection,
    DomainStats, EntryKind, ManifestEntry, Split,
};

use ndarray::{ArrayD, IxDyn};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

pub const MAGIC: [u8; 4] = *b"SGT1";

/// Element type of a stored tensor.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Dtype {
    U8,
    U16,
    F32,
}

impl Dtype {
    pub fn code(self) -> u8 {
        match self {
            Dtype::U8 => 0,
            Dtype::U16 => 1,
            Dtype::F32 => 2,
        }
    }

    pub fn from_code(code: u8) -> Result<Self, TensorIoError> {
        match code {
            0 => Ok(Dtype::U8),
            1 => Ok(Dtype::U16),
            2 => Ok(Dtype::F32),
            other => Err(TensorIoError::UnsupportedDtype(other)),
        }
    }

    pub fn size_bytes(self) -> usize {
        match self {
            Dtype::U8 => 1,
            Dtype::U16 => 2,
            Dtype::F32 => 4,
        }
    }
}

/// A dynamically shaped tensor in one of the supported element types.
///
/// u16 carries RAW sensor mosaics, f32 everything post-normalization.
#[derive(Debug, Clone, PartialEq)]
pub enum Tensor {
    U8(ArrayD<u8>),
    U16(ArrayD<u16>),
    F32(ArrayD<f32>),
}

impl Tensor {
    pub fn dtype(&self) -> Dtype {
        match self {
            Tensor::U8(_) => Dtype::U8,
            Tensor::U16(_) => Dtype::U16,
            Tensor::F32(_) => Dtype::F32,
        }
    }

    pub fn shape(&self) -> &[usize] {
        match self {
            Tensor::U8(a) => a.shape(),
            Tensor::U16(a) => a.shape(),
            Tensor::F32(a) => a.shape(),
        }
    }

    pub fn len(&self) -> usize {
        self.shape().iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn as_f32(&self) -> Option<&ArrayD<f32>> {
        match self {
            Tensor::F32(a) => Some(a),
            _ => None,
        }
    }

    pub fn as_u16(&self) -> Option<&ArrayD<u16>> {
        match self {
            Tensor::U16(a) => Some(a),
            _ => None,
        }
    }
}

impl From<ArrayD<f32>> for Tensor {
    fn from(a: ArrayD<f32>) -> Self {
        Tensor::F32(a)
    }
}

impl From<ArrayD<u16>> for Tensor {
    fn from(a: ArrayD<u16>) -> Self {
        Tensor::U16(a)
    }
}

impl From<ArrayD<u8>> for Tensor {
    fn from(a: ArrayD<u8>) -> Self {
        Tensor::U8(a)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum TensorIoError {
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic: expected \"SGT1\", got {0:?}")]
    BadMagic([u8; 4]),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u8),
    #[error("truncated file: expected {expected} bytes, got {got}")]
    Truncated { expected: usize, got: usize },
    #[error("shape/payload mismatch: shape {shape:?} implies {expected} bytes, file declares {got}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        got: usize,
    },
    #[error("tensor too large: {0} elements")]
    TooLarge(u64),
    #[error("manifest error: {0}")]
    Manifest(String),
    #[error("manifest parse error: {0}")]
    ManifestSyntax(#[from] toml::de::Error),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
}

// Shapes above this are rejected outright so corrupt headers cannot drive
// multi-gigabyte allocations.
const MAX_ELEMENTS: u64 = 1 << 33;
const MAX_NDIM: u8 = 8;

/// Serializes one tensor record into `w`.
pub fn write_tensor_to(w: &mut impl Write, tensor: &Tensor) -> Result<(), TensorIoError> {
    w.write_all(&MAGIC)?;
    w.write_all(&[tensor.dtype().code()])?;
    let shape = tensor.shape();
    w.write_all(&[shape.len() as u8])?;
    for &dim in shape {
        w.write_all(&(dim as u64).to_le_bytes())?;
    }
    match tensor {
        Tensor::U8(a) => {
            for &v in a.iter() {
                w.write_all(&[v])?;
            }
        }
        Tensor::U16(a) => {
            for &v in a.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
        Tensor::F32(a) => {
            for &v in a.iter() {
                w.write_all(&v.to_le_bytes())?;
            }
        }
    }
    Ok(())
}

/// Writes a single-record tensor file at `path`, creating parent directories.
pub fn write_tensor(path: impl AsRef<Path>, tensor: &Tensor) -> Result<(), TensorIoError> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    write_tensor_to(&mut w, tensor)?;
    w.flush()?;
    Ok(())
}

/// Parses one tensor record from a byte slice, returning the tensor and the
/// number of bytes consumed.
pub fn parse_tensor(bytes: &[u8]) -> Result<(Tensor, usize), TensorIoError> {
    if bytes.len() < 6 {
        return Err(TensorIoError::Truncated {
            expected: 6,
            got: bytes.len(),
        });
    }
    let mut magic = [0u8; 4];
    magic.copy_from_slice(&bytes[..4]);
    if magic != MAGIC {
        return Err(TensorIoError::BadMagic(magic));
    }
    let dtype = Dtype::from_code(bytes[4])?;
    let ndim = bytes[5];
    if ndim > MAX_NDIM {
        return Err(TensorIoError::TooLarge(ndim as u64));
    }
    let header_len = 6 + ndim as usize * 8;
    if bytes.len() < header_len {
        return Err(TensorIoError::Truncated {
            expected: header_len,
            got: bytes.len(),
        });
    }
    let mut shape = Vec::with_capacity(ndim as usize);
    let mut elements: u64 = 1;
    for d in 0..ndim as usize {
        let mut buf = [0u8; 8];
        buf.copy_from_slice(&bytes[6 + d * 8..6 + d * 8 + 8]);
        let dim = u64::from_le_bytes(buf);
        elements = elements.saturating_mul(dim.max(1));
        if elements > MAX_ELEMENTS || dim > MAX_ELEMENTS {
            return Err(TensorIoError::TooLarge(elements));
        }
        shape.push(dim as usize);
    }
    let count: usize = shape.iter().product();
    let payload_len = count * dtype.size_bytes();
    let total = header_len + payload_len;
    if bytes.len() < total {
        return Err(TensorIoError::Truncated {
            expected: total,
            got: bytes.len(),
        });
    }
    let payload = &bytes[header_len..total];
    let tensor = match dtype {
        Dtype::U8 => {
            let data = payload.to_vec();
            Tensor::U8(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape checked"))
        }
        Dtype::U16 => {
            let data: Vec<u16> = payload
                .chunks_exact(2)
                .map(|c| u16::from_le_bytes([c[0], c[1]]))
                .collect();
            Tensor::U16(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape checked"))
        }
        Dtype::F32 => {
            let data: Vec<f32> = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect();
            Tensor::F32(ArrayD::from_shape_vec(IxDyn(&shape), data).expect("shape checked"))
        }
    };
    Ok((tensor, total))
}

/// Reads the first tensor record of the file at `path`.
pub fn read_tensor(path: impl AsRef<Path>) -> Result<Tensor, TensorIoError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    let (tensor, _) = parse_tensor(&bytes)?;
    Ok(tensor)
}

/// Reads every record of a multi-record tensor file.
pub fn read_tensor_records(path: impl AsRef<Path>) -> Result<Vec<Tensor>, TensorIoError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    parse_tensor_records(&bytes)
}

/// Parses back-to-back tensor records until the buffer is exhausted.
pub fn parse_tensor_records(bytes: &[u8]) -> Result<Vec<Tensor>, TensorIoError> {
    let mut tensors = Vec::new();
    let mut offset = 0;
    while offset < bytes.len() {
        let (t, consumed) = parse_tensor(&bytes[offset..])?;
        tensors.push(t);
        offset += consumed;
    }
    Ok(tensors)
}

/// Writes several records into one file, in order.
pub fn write_tensor_records(
    path: impl AsRef<Path>,
    tensors: &[Tensor],
) -> Result<(), TensorIoError> {
    if let Some(parent) = path.as_ref().parent() {
        if !parent.as_os_str().is_empty() {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut w = BufWriter::new(File::create(path)?);
    for t in tensors {
        write_tensor_to(&mut w, t)?;
    }
    w.flush()?;
    Ok(())
}
