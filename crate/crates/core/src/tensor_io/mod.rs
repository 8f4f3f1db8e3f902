//! BSBT tensor containers and the typed views built on top of them.
//!
//! A BSBT file is a fixed little-endian header followed by a row-major
//! payload:
//!
//! | offset | size      | field                         |
//! |--------|-----------|-------------------------------|
//! | 0      | 4         | magic `b"BSBT"`               |
//! | 4      | 4         | version (`u32`, always 1)     |
//! | 8      | 4         | dtype (`u32`, 1 = f32, 2 = u8)|
//! | 12     | 4         | ndim (`u32`)                  |
//! | 16     | 8 × ndim  | extents (`u64`, outermost first) |
//! | …      | …         | payload, no padding           |

mod manifest;
mod types;

pub use manifest::{load_manifest, resolve_path, CaseEntry, DatasetManifest, ManifestError, ManifestFile, RegionEntry};
pub use types::{FeatureImage, Mask2D, Mask3D, Pixel, VertexFeatureField};

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

pub const MAGIC: [u8; 4] = *b"BSBT";
pub const VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum TensorError {
    #[error("i/o error: {0}")]
    Io(#[from] io::Error),
    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<TensorError>,
    },
    #[error("bad magic {0:?}, expected \"BSBT\"")]
    BadMagic([u8; 4]),
    #[error("unsupported version {0}")]
    UnsupportedVersion(u32),
    #[error("unsupported dtype code {0}")]
    UnsupportedDtype(u32),
    #[error("tensor has no dimensions")]
    NoDims,
    #[error("extent {axis} is zero")]
    ZeroExtent { axis: usize },
    #[error("element count overflows")]
    Overflow,
    #[error("truncated {what}: expected {expected} bytes, got {got}")]
    Truncated {
        what: &'static str,
        expected: usize,
        got: usize,
    },
    #[error("payload has {payload} elements but dims {dims:?} require {expected}")]
    ShapeMismatch {
        dims: Vec<usize>,
        expected: usize,
        payload: usize,
    },
    #[error("expected {expected} tensor, found {found}")]
    WrongDtype {
        expected: DType,
        found: DType,
    },
    #[error("expected {expected}, found dims {dims:?}")]
    WrongRank { expected: &'static str, dims: Vec<usize> },
    #[error("non-finite value at element {0}")]
    NonFinite(usize),
    #[error("mask value {value} at element {index} is not 0 or 1")]
    MaskValue { index: usize, value: u8 },
    #[error("invalid vertex {0} carries a non-zero feature row")]
    InvalidRowNotZero(usize),
    #[error("dimension mismatch: {0}")]
    DimMismatch(String),
}

impl TensorError {
    fn at(self, path: &Path) -> Self {
        TensorError::File {
            path: path.to_path_buf(),
            source: Box::new(self),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum DType {
    F32,
    U8,
}

impl DType {
    pub fn code(self) -> u32 {
        match self {
            DType::F32 => 1,
            DType::U8 => 2,
        }
    }

    pub fn from_code(code: u32) -> Result<Self, TensorError> {
        match code {
            1 => Ok(DType::F32),
            2 => Ok(DType::U8),
            other => Err(TensorError::UnsupportedDtype(other)),
        }
    }

    pub fn size(self) -> usize {
        match self {
            DType::F32 => 4,
            DType::U8 => 1,
        }
    }
}

impl std::fmt::Display for DType {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            DType::F32 => "f32",
            DType::U8 => "u8",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F32(Vec<f32>),
    U8(Vec<u8>),
}

impl TensorData {
    pub fn dtype(&self) -> DType {
        match self {
            TensorData::F32(_) => DType::F32,
            TensorData::U8(_) => DType::U8,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            TensorData::F32(v) => v.len(),
            TensorData::U8(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A dense row-major tensor of f32 or u8 elements.
///
/// Equality is bitwise on the payload, so `NaN` payloads compare equal to
/// themselves after a round trip.
#[derive(Debug, Clone)]
pub struct TensorContainer {
    dims: Vec<usize>,
    data: TensorData,
}

impl PartialEq for TensorContainer {
    fn eq(&self, other: &Self) -> bool {
        if self.dims != other.dims {
            return false;
        }
        match (&self.data, &other.data) {
            (TensorData::F32(a), TensorData::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            (TensorData::U8(a), TensorData::U8(b)) => a == b,
            _ => false,
        }
    }
}

/// Header fields of a BSBT stream, readable without touching the payload.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TensorHeader {
    pub dtype: DType,
    pub dims: Vec<usize>,
}

impl TensorHeader {
    pub fn element_count(&self) -> usize {
        self.dims.iter().product()
    }
}

fn checked_count(dims: &[usize]) -> Result<usize, TensorError> {
    if dims.is_empty() {
        return Err(TensorError::NoDims);
    }
    let mut count: usize = 1;
    for (axis, &extent) in dims.iter().enumerate() {
        if extent == 0 {
            return Err(TensorError::ZeroExtent { axis });
        }
        count = count.checked_mul(extent).ok_or(TensorError::Overflow)?;
    }
    Ok(count)
}

impl TensorContainer {
    pub fn new(dims: Vec<usize>, data: TensorData) -> Result<Self, TensorError> {
        let expected = checked_count(&dims)?;
        if expected != data.len() {
            return Err(TensorError::ShapeMismatch {
                dims,
                expected,
                payload: data.len(),
            });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f32(dims: Vec<usize>, values: Vec<f32>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::F32(values))
    }

    pub fn from_u8(dims: Vec<usize>, values: Vec<u8>) -> Result<Self, TensorError> {
        Self::new(dims, TensorData::U8(values))
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn dtype(&self) -> DType {
        self.data.dtype()
    }

    pub fn data(&self) -> &TensorData {
        &self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn header(&self) -> TensorHeader {
        TensorHeader {
            dtype: self.dtype(),
            dims: self.dims.clone(),
        }
    }

    pub fn into_f32(self) -> Result<(Vec<usize>, Vec<f32>), TensorError> {
        match self.data {
            TensorData::F32(v) => Ok((self.dims, v)),
            other => Err(TensorError::WrongDtype {
                expected: DType::F32,
                found: other.dtype(),
            }),
        }
    }

    pub fn into_u8(self) -> Result<(Vec<usize>, Vec<u8>), TensorError> {
        match self.data {
            TensorData::U8(v) => Ok((self.dims, v)),
            other => Err(TensorError::WrongDtype {
                expected: DType::U8,
                found: other.dtype(),
            }),
        }
    }

    /// Size of the encoded stream in bytes.
    pub fn encoded_len(&self) -> usize {
        16 + 8 * self.dims.len() + self.len() * self.dtype().size()
    }
}

pub fn write_tensor<W: Write>(t: &TensorContainer, mut sink: W) -> Result<(), TensorError> {
    let mut buf = Vec::with_capacity(t.encoded_len());
    buf.extend_from_slice(&MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&t.dtype().code().to_le_bytes());
    buf.extend_from_slice(&(t.dims.len() as u32).to_le_bytes());
    for &d in &t.dims {
        buf.extend_from_slice(&(d as u64).to_le_bytes());
    }
    match &t.data {
        TensorData::F32(values) => {
            for v in values {
                buf.extend_from_slice(&v.to_le_bytes());
            }
        }
        TensorData::U8(values) => buf.extend_from_slice(values),
    }
    sink.write_all(&buf)?;
    sink.flush()?;
    Ok(())
}

fn read_exact_or_truncated<R: Read>(
    source: &mut R,
    buf: &mut [u8],
    what: &'static str,
) -> Result<(), TensorError> {
    let mut filled = 0;
    while filled < buf.len() {
        match source.read(&mut buf[filled..]) {
            Ok(0) => {
                return Err(TensorError::Truncated {
                    what,
                    expected: buf.len(),
                    got: filled,
                })
            }
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => {}
            Err(e) => return Err(e.into()),
        }
    }
    Ok(())
}

fn read_u32<R: Read>(source: &mut R, what: &'static str) -> Result<u32, TensorError> {
    let mut b = [0u8; 4];
    read_exact_or_truncated(source, &mut b, what)?;
    Ok(u32::from_le_bytes(b))
}

pub fn read_header<R: Read>(source: &mut R) -> Result<TensorHeader, TensorError> {
    let mut magic = [0u8; 4];
    read_exact_or_truncated(source, &mut magic, "magic")?;
    if magic != MAGIC {
        return Err(TensorError::BadMagic(magic));
    }
    let version = read_u32(source, "version")?;
    if version != VERSION {
        return Err(TensorError::UnsupportedVersion(version));
    }
    let dtype = DType::from_code(read_u32(source, "dtype")?)?;
    let ndim = read_u32(source, "ndim")? as usize;
    if ndim == 0 {
        return Err(TensorError::NoDims);
    }
    let mut dims = Vec::with_capacity(ndim.min(64));
    for _ in 0..ndim {
        let mut b = [0u8; 8];
        read_exact_or_truncated(source, &mut b, "dims")?;
        let extent = usize::try_from(u64::from_le_bytes(b)).map_err(|_| TensorError::Overflow)?;
        dims.push(extent);
    }
    let count = checked_count(&dims)?;
    count
        .checked_mul(dtype.size())
        .ok_or(TensorError::Overflow)?;
    Ok(TensorHeader { dtype, dims })
}

pub fn read_tensor<R: Read>(mut source: R) -> Result<TensorContainer, TensorError> {
    let header = read_header(&mut source)?;
    let count = header.element_count();
    let nbytes = count * header.dtype.size();
    // Grow as bytes arrive so a lying header cannot force a huge allocation.
    let mut raw = Vec::new();
    let got = source.by_ref().take(nbytes as u64).read_to_end(&mut raw)?;
    if got != nbytes {
        return Err(TensorError::Truncated {
            what: "payload",
            expected: nbytes,
            got,
        });
    }
    let data = match header.dtype {
        DType::F32 => TensorData::F32(
            raw.chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]))
                .collect(),
        ),
        DType::U8 => TensorData::U8(raw),
    };
    TensorContainer::new(header.dims, data)
}

pub fn write_tensor_file(t: &TensorContainer, path: impl AsRef<Path>) -> Result<(), TensorError> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| TensorError::from(e).at(path))?;
    write_tensor(t, BufWriter::new(file)).map_err(|e| e.at(path))
}

pub fn read_tensor_file(path: impl AsRef<Path>) -> Result<TensorContainer, TensorError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| TensorError::from(e).at(path))?;
    read_tensor(BufReader::new(file)).map_err(|e| e.at(path))
}

pub fn read_header_file(path: impl AsRef<Path>) -> Result<TensorHeader, TensorError> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| TensorError::from(e).at(path))?;
    read_header(&mut BufReader::new(file)).map_err(|e| e.at(path))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn encode(t: &TensorContainer) -> Vec<u8> {
        let mut out = Vec::new();
        write_tensor(t, &mut out).unwrap();
        out
    }

    #[test]
    fn scalar_f32_is_36_bytes() {
        let t = TensorContainer::from_f32(vec![1, 1], vec![0.0]).unwrap();
        let bytes = encode(&t);
        assert_eq!(bytes.len(), 36);
        assert_eq!(&bytes[..4], b"BSBT");
        assert_eq!(&bytes[4..8], &1u32.to_le_bytes());
        assert_eq!(&bytes[8..12], &1u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &2u32.to_le_bytes());
        assert_eq!(&bytes[16..24], &1u64.to_le_bytes());
        assert_eq!(&bytes[24..32], &1u64.to_le_bytes());
        assert_eq!(&bytes[32..], &[0, 0, 0, 0]);
    }

    #[test]
    fn u8_mask_payload_is_identity() {
        let t = TensorContainer::from_u8(vec![2, 2], vec![1, 1, 1, 1]).unwrap();
        let bytes = encode(&t);
        assert_eq!(&bytes[bytes.len() - 4..], &[1, 1, 1, 1]);
        assert_eq!(read_tensor(&bytes[..]).unwrap(), t);
    }

    #[test]
    fn bad_magic_rejected() {
        let t = TensorContainer::from_u8(vec![1], vec![1]).unwrap();
        let mut bytes = encode(&t);
        bytes[..4].copy_from_slice(b"XXXX");
        assert!(matches!(
            read_tensor(&bytes[..]),
            Err(TensorError::BadMagic(m)) if &m == b"XXXX"
        ));
    }

    #[test]
    fn short_payload_is_truncation() {
        let t = TensorContainer::from_f32(vec![2, 2], vec![1.0; 4]).unwrap();
        let bytes = encode(&t);
        let cut = &bytes[..bytes.len() - 8];
        match read_tensor(cut) {
            Err(TensorError::Truncated {
                what: "payload",
                expected: 16,
                got: 8,
            }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn zero_extent_and_bad_codes_rejected() {
        let mut bytes = encode(&TensorContainer::from_u8(vec![1, 1], vec![0]).unwrap());
        bytes[24..32].copy_from_slice(&0u64.to_le_bytes());
        assert!(matches!(
            read_tensor(&bytes[..]),
            Err(TensorError::ZeroExtent { axis: 1 })
        ));

        let mut bytes = encode(&TensorContainer::from_u8(vec![1], vec![0]).unwrap());
        bytes[4..8].copy_from_slice(&2u32.to_le_bytes());
        assert!(matches!(
            read_tensor(&bytes[..]),
            Err(TensorError::UnsupportedVersion(2))
        ));
        bytes[4..8].copy_from_slice(&1u32.to_le_bytes());
        bytes[8..12].copy_from_slice(&7u32.to_le_bytes());
        assert!(matches!(
            read_tensor(&bytes[..]),
            Err(TensorError::UnsupportedDtype(7))
        ));
    }

    #[test]
    fn constructor_checks_shape() {
        assert!(matches!(
            TensorContainer::from_f32(vec![2, 3], vec![0.0; 5]),
            Err(TensorError::ShapeMismatch { expected: 6, .. })
        ));
        assert!(matches!(
            TensorContainer::from_f32(vec![], vec![]),
            Err(TensorError::NoDims)
        ));
    }

    #[test]
    fn header_only_read() {
        let t = TensorContainer::from_f32(vec![3, 4, 5], vec![0.5; 60]).unwrap();
        let bytes = encode(&t);
        let h = read_header(&mut &bytes[..]).unwrap();
        assert_eq!(h.dims, vec![3, 4, 5]);
        assert_eq!(h.dtype, DType::F32);
    }
}
