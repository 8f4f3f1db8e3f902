use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{read_tensor_file, write_tensor_file, TensorContainer, TensorError};

/// Integer pixel coordinate, origin top-left, `x` rightward, `y` downward.
///
/// Serialized as `[x, y]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "[usize; 2]", into = "[usize; 2]")]
pub struct Pixel {
    pub x: usize,
    pub y: usize,
}

impl Pixel {
    pub const fn new(x: usize, y: usize) -> Self {
        Self { x, y }
    }

    /// Row-major ordering key (smaller `y` first, then smaller `x`).
    pub fn row_major_key(self) -> (usize, usize) {
        (self.y, self.x)
    }
}

impl From<[usize; 2]> for Pixel {
    fn from([x, y]: [usize; 2]) -> Self {
        Pixel { x, y }
    }
}

impl From<Pixel> for [usize; 2] {
    fn from(p: Pixel) -> Self {
        [p.x, p.y]
    }
}

impl std::fmt::Display for Pixel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Dense per-pixel feature field, stored `[row][col][channel]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureImage {
    width: usize,
    height: usize,
    dim: usize,
    data: Vec<f32>,
    /// Spatial size of the raw backbone output before upsampling. Metadata only.
    pub source_res: Option<(usize, usize)>,
}

impl FeatureImage {
    pub fn new(width: usize, height: usize, dim: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        if width == 0 || height == 0 || dim == 0 {
            return Err(TensorError::DimMismatch(format!(
                "feature image extents must be positive, got {width}x{height}x{dim}"
            )));
        }
        let expected = width * height * dim;
        if data.len() != expected {
            return Err(TensorError::ShapeMismatch {
                dims: vec![height, width, dim],
                expected,
                payload: data.len(),
            });
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(TensorError::NonFinite(i));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
            source_res: None,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(
        width: usize,
        height: usize,
        dim: usize,
        mut f: impl FnMut(usize, usize) -> Vec<f32>,
    ) -> Result<Self, TensorError> {
        let mut data = Vec::with_capacity(width * height * dim);
        for y in 0..height {
            for x in 0..width {
                let v = f(x, y);
                if v.len() != dim {
                    return Err(TensorError::DimMismatch(format!(
                        "pixel ({x}, {y}) produced {} channels, expected {dim}",
                        v.len()
                    )));
                }
                data.extend_from_slice(&v);
            }
        }
        Self::new(width, height, dim, data)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn contains(&self, p: Pixel) -> bool {
        p.x < self.width && p.y < self.height
    }

    /// Feature vector at `p`. Panics when `p` is out of bounds.
    pub fn feature(&self, p: Pixel) -> &[f32] {
        assert!(self.contains(p), "pixel {p} outside {}x{}", self.width, self.height);
        let start = (p.y * self.width + p.x) * self.dim;
        &self.data[start..start + self.dim]
    }

    pub fn feature_at_index(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> TensorContainer {
        TensorContainer::from_f32(vec![self.height, self.width, self.dim], self.data.clone())
            .expect("feature image invariants imply a valid tensor")
    }

    pub fn from_tensor(t: TensorContainer) -> Result<Self, TensorError> {
        let (dims, data) = t.into_f32()?;
        match dims.as_slice() {
            &[h, w, d] => Self::new(w, h, d, data),
            _ => Err(TensorError::WrongRank {
                expected: "[height, width, dim] feature image",
                dims,
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_tensor(read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        write_tensor_file(&self.to_tensor(), path)
    }
}

/// Per-vertex distilled features with a validity flag per row.
///
/// On disk this is a `[n, dim]` f32 tensor; a row is valid iff it is not all
/// zeros.
#[derive(Debug, Clone, PartialEq)]
pub struct VertexFeatureField {
    dim: usize,
    data: Vec<f32>,
    valid: Vec<bool>,
}

impl VertexFeatureField {
    pub fn new(dim: usize, data: Vec<f32>, valid: Vec<bool>) -> Result<Self, TensorError> {
        if dim == 0 || valid.is_empty() {
            return Err(TensorError::DimMismatch(
                "vertex feature field needs at least one vertex and one channel".into(),
            ));
        }
        if data.len() != valid.len() * dim {
            return Err(TensorError::ShapeMismatch {
                dims: vec![valid.len(), dim],
                expected: valid.len() * dim,
                payload: data.len(),
            });
        }
        for (v, row) in data.chunks_exact(dim).enumerate() {
            if valid[v] {
                if let Some(c) = row.iter().position(|x| !x.is_finite()) {
                    return Err(TensorError::NonFinite(v * dim + c));
                }
            } else if row.iter().any(|&x| x != 0.0) {
                return Err(TensorError::InvalidRowNotZero(v));
            }
        }
        Ok(Self { dim, data, valid })
    }

    /// Every row valid.
    pub fn from_rows(rows: &[Vec<f32>]) -> Result<Self, TensorError> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(TensorError::DimMismatch("ragged feature rows".into()));
        }
        let data = rows.concat();
        Self::new(dim, data, vec![true; rows.len()])
    }

    /// Validity inferred from non-zero rows, matching the on-disk convention.
    pub fn from_data(dim: usize, data: Vec<f32>) -> Result<Self, TensorError> {
        if dim == 0 {
            return Err(TensorError::DimMismatch("zero feature dimension".into()));
        }
        let valid = data
            .chunks_exact(dim)
            .map(|row| row.iter().any(|&x| x != 0.0))
            .collect();
        Self::new(dim, data, valid)
    }

    pub fn len(&self) -> usize {
        self.valid.len()
    }

    pub fn is_empty(&self) -> bool {
        self.valid.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn is_valid(&self, v: usize) -> bool {
        self.valid[v]
    }

    pub fn validity(&self) -> &[bool] {
        &self.valid
    }

    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&b| b).count()
    }

    pub fn feature(&self, v: usize) -> &[f32] {
        &self.data[v * self.dim..(v + 1) * self.dim]
    }

    pub fn to_tensor(&self) -> TensorContainer {
        TensorContainer::from_f32(vec![self.len(), self.dim], self.data.clone())
            .expect("vertex field invariants imply a valid tensor")
    }

    pub fn from_tensor(t: TensorContainer) -> Result<Self, TensorError> {
        let (dims, data) = t.into_f32()?;
        match dims.as_slice() {
            &[_, d] => Self::from_data(d, data),
            _ => Err(TensorError::WrongRank {
                expected: "[vertices, dim] feature field",
                dims,
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_tensor(read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        write_tensor_file(&self.to_tensor(), path)
    }
}

fn check_bits(bits: &[u8]) -> Result<(), TensorError> {
    match bits.iter().position(|&b| b > 1) {
        Some(index) => Err(TensorError::MaskValue {
            index,
            value: bits[index],
        }),
        None => Ok(()),
    }
}

/// Binary pixel mask, row-major.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask2D {
    width: usize,
    height: usize,
    bits: Vec<u8>,
}

impl Mask2D {
    pub fn empty(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![0; width * height],
        }
    }

    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            bits: vec![1; width * height],
        }
    }

    pub fn from_bits(width: usize, height: usize, bits: Vec<u8>) -> Result<Self, TensorError> {
        if bits.len() != width * height {
            return Err(TensorError::ShapeMismatch {
                dims: vec![height, width],
                expected: width * height,
                payload: bits.len(),
            });
        }
        check_bits(&bits)?;
        Ok(Self { width, height, bits })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut bits = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                bits.push(f(x, y) as u8);
            }
        }
        Self { width, height, bits }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn in_bounds(&self, p: Pixel) -> bool {
        p.x < self.width && p.y < self.height
    }

    /// Whether `p` is set; out-of-bounds pixels are never set.
    pub fn contains(&self, p: Pixel) -> bool {
        self.in_bounds(p) && self.bits[p.y * self.width + p.x] == 1
    }

    pub fn set(&mut self, p: Pixel, on: bool) {
        assert!(self.in_bounds(p));
        self.bits[p.y * self.width + p.x] = on as u8;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    /// Set pixels in row-major order.
    pub fn pixels(&self) -> impl Iterator<Item = Pixel> + '_ {
        let w = self.width;
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(move |(i, _)| Pixel::new(i % w, i / w))
    }

    pub fn is_subset_of(&self, other: &Mask2D) -> bool {
        self.dims() == other.dims() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }

    /// Run-length encoding over row-major order: `[start, len]` per run of ones.
    pub fn to_rle(&self) -> Vec<[usize; 2]> {
        let mut runs = Vec::new();
        let mut i = 0;
        while i < self.bits.len() {
            if self.bits[i] == 1 {
                let start = i;
                while i < self.bits.len() && self.bits[i] == 1 {
                    i += 1;
                }
                runs.push([start, i - start]);
            } else {
                i += 1;
            }
        }
        runs
    }

    pub fn from_rle(width: usize, height: usize, runs: &[[usize; 2]]) -> Result<Self, TensorError> {
        let mut mask = Self::empty(width, height);
        for &[start, len] in runs {
            let end = start
                .checked_add(len)
                .filter(|&e| e <= mask.bits.len())
                .ok_or_else(|| TensorError::DimMismatch(format!("run [{start}, {len}] exceeds mask")))?;
            mask.bits[start..end].fill(1);
        }
        Ok(mask)
    }

    pub fn to_tensor(&self) -> TensorContainer {
        TensorContainer::from_u8(vec![self.height, self.width], self.bits.clone())
            .expect("mask invariants imply a valid tensor")
    }

    pub fn from_tensor(t: TensorContainer) -> Result<Self, TensorError> {
        let (dims, bits) = t.into_u8()?;
        match dims.as_slice() {
            &[h, w] => Self::from_bits(w, h, bits),
            _ => Err(TensorError::WrongRank {
                expected: "[height, width] mask",
                dims,
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_tensor(read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        write_tensor_file(&self.to_tensor(), path)
    }
}

/// Binary per-vertex mask.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask3D {
    bits: Vec<u8>,
}

impl Mask3D {
    pub fn empty(n: usize) -> Self {
        Self { bits: vec![0; n] }
    }

    pub fn from_bits(bits: Vec<u8>) -> Result<Self, TensorError> {
        check_bits(&bits)?;
        Ok(Self { bits })
    }

    pub fn from_indices(n: usize, indices: impl IntoIterator<Item = usize>) -> Result<Self, TensorError> {
        let mut bits = vec![0; n];
        for i in indices {
            *bits
                .get_mut(i)
                .ok_or_else(|| TensorError::DimMismatch(format!("vertex {i} >= {n}")))? = 1;
        }
        Ok(Self { bits })
    }

    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.iter().all(|&b| b == 0)
    }

    pub fn bits(&self) -> &[u8] {
        &self.bits
    }

    pub fn contains(&self, v: usize) -> bool {
        self.bits.get(v) == Some(&1)
    }

    pub fn insert(&mut self, v: usize) {
        self.bits[v] = 1;
    }

    pub fn count(&self) -> usize {
        self.bits.iter().filter(|&&b| b == 1).count()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b == 1)
            .map(|(i, _)| i)
            .collect()
    }

    pub fn is_subset_of(&self, other: &Mask3D) -> bool {
        self.len() == other.len() && self.bits.iter().zip(&other.bits).all(|(&a, &b)| a <= b)
    }

    /// |a ∩ b| / |a ∪ b| over vertex sets; 0 when the union is empty.
    pub fn iou(&self, other: &Mask3D) -> Result<f32, TensorError> {
        if self.len() != other.len() {
            return Err(TensorError::DimMismatch(format!(
                "vertex masks of length {} and {}",
                self.len(),
                other.len()
            )));
        }
        let (inter, union) = self
            .bits
            .iter()
            .zip(&other.bits)
            .fold((0usize, 0usize), |(i, u), (&a, &b)| {
                (i + (a & b) as usize, u + (a | b) as usize)
            });
        Ok(if union == 0 {
            0.0
        } else {
            inter as f32 / union as f32
        })
    }

    pub fn to_tensor(&self) -> TensorContainer {
        TensorContainer::from_u8(vec![self.len()], self.bits.clone())
            .expect("non-empty vertex mask")
    }

    pub fn from_tensor(t: TensorContainer) -> Result<Self, TensorError> {
        let (dims, bits) = t.into_u8()?;
        match dims.as_slice() {
            &[_] => Self::from_bits(bits),
            _ => Err(TensorError::WrongRank {
                expected: "[vertices] mask",
                dims,
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_tensor(read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        write_tensor_file(&self.to_tensor(), path)
    }
}
