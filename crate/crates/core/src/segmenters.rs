//! 2D and 3D segmentation providers behind uniform interfaces, and the
//! end-to-end pixel-click to 3D-part pipeline built on them.

use std::collections::HashMap;
use std::path::{Path, PathBuf};
use std::sync::{Arc, RwLock};

use serde::{Deserialize, Serialize};

use crate::matcher::{bsb_match, cosine_similarity, ClickContext, MatchError, MatchResult};
use crate::mesh::{connected_component, hop_distances, Mesh};
use crate::tensor_io::{
    read_tensor_file, Mask2D, Mask3D, Pixel, TensorContainer, TensorData, TensorError,
    VertexFeatureField,
};

/// Default similarity threshold of the flood-fill segmenter.
pub const DEFAULT_TAU: f32 = 0.85;

#[derive(Debug, thiserror::Error)]
pub enum SegError {
    #[error("pixel {0} is background")]
    Background(Pixel),
    #[error("pixel {pixel} outside {width}x{height}")]
    OutOfBounds {
        pixel: Pixel,
        width: usize,
        height: usize,
    },
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("vertex {0} has no valid feature")]
    InvalidSeed(usize),
    #[error("no stored segmentation for {0}")]
    Miss(String),
    #[error("stored masks violate the provider contract: {0}")]
    Contract(String),
    #[error("bad provider spec {0:?}")]
    Spec(String),
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Mesh(#[from] crate::mesh::MeshError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Capabilities {
    /// Safe to query from several threads at once.
    pub concurrent: bool,
    /// Answers are stable, so callers may cache them.
    pub memoizable: bool,
}

impl Default for Capabilities {
    fn default() -> Self {
        Self {
            concurrent: true,
            memoizable: true,
        }
    }
}

/// Coarse and fine masks for one click.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskPair {
    pub object: Mask2D,
    pub part: Mask2D,
}

pub trait Seg2DProvider: Send + Sync {
    fn dims(&self) -> (usize, usize);
    fn query(&self, pixel: Pixel) -> Result<MaskPair, SegError>;
    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

pub trait Seg3DProvider: Send + Sync {
    fn vertex_count(&self) -> usize;
    fn query(&self, vertex: usize) -> Result<Mask3D, SegError>;
    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

fn labels_from_tensor(t: TensorContainer) -> Result<(Vec<usize>, Vec<u32>), TensorError> {
    let dims = t.dims().to_vec();
    let labels = match t.data() {
        TensorData::U8(v) => v.iter().map(|&x| x as u32).collect(),
        TensorData::F32(v) => v
            .iter()
            .enumerate()
            .map(|(i, &x)| {
                if x >= 0.0 && x.fract() == 0.0 && x <= u32::MAX as f32 {
                    Ok(x as u32)
                } else {
                    Err(TensorError::DimMismatch(format!("label {x} at {i} is not a non-negative integer")))
                }
            })
            .collect::<Result<_, _>>()?,
    };
    Ok((dims, labels))
}

fn labels_to_tensor(dims: Vec<usize>, labels: &[u32]) -> TensorContainer {
    let res = if labels.iter().all(|&l| l <= u8::MAX as u32) {
        TensorContainer::from_u8(dims, labels.iter().map(|&l| l as u8).collect())
    } else {
        TensorContainer::from_f32(dims, labels.iter().map(|&l| l as f32).collect())
    };
    res.expect("label field dims match its length")
}

/// Integer label per pixel; 0 is background.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField2D {
    width: usize,
    height: usize,
    labels: Vec<u32>,
}

impl LabelField2D {
    pub fn new(width: usize, height: usize, labels: Vec<u32>) -> Result<Self, TensorError> {
        if width == 0 || height == 0 || labels.len() != width * height {
            return Err(TensorError::ShapeMismatch {
                dims: vec![height, width],
                expected: width * height,
                payload: labels.len(),
            });
        }
        Ok(Self { width, height, labels })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> u32) -> Self {
        let labels = (0..height)
            .flat_map(|y| (0..width).map(move |x| (x, y)))
            .map(|(x, y)| f(x, y))
            .collect();
        Self { width, height, labels }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn label(&self, p: Pixel) -> u32 {
        self.labels[p.y * self.width + p.x]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn region(&self, label: u32) -> Mask2D {
        Mask2D::from_fn(self.width, self.height, |x, y| self.labels[y * self.width + x] == label)
    }

    pub fn object_mask(&self) -> Mask2D {
        Mask2D::from_fn(self.width, self.height, |x, y| self.labels[y * self.width + x] > 0)
    }

    /// Pixels sharing the label at `p`; errors on background.
    pub fn part_mask(&self, p: Pixel) -> Result<Mask2D, SegError> {
        if p.x >= self.width || p.y >= self.height {
            return Err(SegError::OutOfBounds {
                pixel: p,
                width: self.width,
                height: self.height,
            });
        }
        match self.label(p) {
            0 => Err(SegError::Background(p)),
            l => Ok(self.region(l)),
        }
    }

    pub fn to_tensor(&self) -> TensorContainer {
        labels_to_tensor(vec![self.height, self.width], &self.labels)
    }

    pub fn from_tensor(t: TensorContainer) -> Result<Self, TensorError> {
        let (dims, labels) = labels_from_tensor(t)?;
        match dims.as_slice() {
            &[h, w] => Self::new(w, h, labels),
            _ => Err(TensorError::WrongRank {
                expected: "[height, width] label field",
                dims,
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_tensor(read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        crate::tensor_io::write_tensor_file(&self.to_tensor(), path)
    }
}

/// Integer label per vertex.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelField3D {
    labels: Vec<u32>,
}

impl LabelField3D {
    pub fn new(labels: Vec<u32>) -> Result<Self, TensorError> {
        if labels.is_empty() {
            return Err(TensorError::DimMismatch("empty vertex label field".into()));
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn label(&self, v: usize) -> u32 {
        self.labels[v]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn part(&self, label: u32) -> Mask3D {
        Mask3D::from_bits(self.labels.iter().map(|&l| (l == label) as u8).collect())
            .expect("bits are 0 or 1")
    }

    pub fn to_tensor(&self) -> TensorContainer {
        labels_to_tensor(vec![self.labels.len()], &self.labels)
    }

    pub fn from_tensor(t: TensorContainer) -> Result<Self, TensorError> {
        let (dims, labels) = labels_from_tensor(t)?;
        match dims.as_slice() {
            &[_] => Self::new(labels),
            _ => Err(TensorError::WrongRank {
                expected: "[vertices] label field",
                dims,
            }),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, TensorError> {
        Self::from_tensor(read_tensor_file(path)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), TensorError> {
        crate::tensor_io::write_tensor_file(&self.to_tensor(), path)
    }
}

/// Part = pixels with the clicked label; object = all foreground.
#[derive(Debug, Clone)]
pub struct SyntheticSeg2D {
    labels: LabelField2D,
    object: Mask2D,
}

impl SyntheticSeg2D {
    pub fn new(labels: LabelField2D) -> Self {
        let object = labels.object_mask();
        Self { labels, object }
    }

    pub fn labels(&self) -> &LabelField2D {
        &self.labels
    }
}

impl Seg2DProvider for SyntheticSeg2D {
    fn dims(&self) -> (usize, usize) {
        (self.labels.width, self.labels.height)
    }

    fn query(&self, pixel: Pixel) -> Result<MaskPair, SegError> {
        let part = self.labels.part_mask(pixel)?;
        Ok(MaskPair {
            object: self.object.clone(),
            part,
        })
    }
}

/// Query vertex's label class.
#[derive(Debug, Clone)]
pub struct SyntheticSeg3D {
    labels: LabelField3D,
}

impl SyntheticSeg3D {
    pub fn new(labels: LabelField3D) -> Self {
        Self { labels }
    }
}

impl Seg3DProvider for SyntheticSeg3D {
    fn vertex_count(&self) -> usize {
        self.labels.len()
    }

    fn query(&self, vertex: usize) -> Result<Mask3D, SegError> {
        if vertex >= self.labels.len() {
            return Err(SegError::VertexOutOfRange(vertex));
        }
        Ok(self.labels.part(self.labels.label(vertex)))
    }
}

/// Grows the region of vertices connected to the seed whose features have
/// cosine similarity at least `tau` with the seed's.
#[derive(Debug, Clone)]
pub struct FloodFillSeg3D {
    field: Arc<VertexFeatureField>,
    mesh: Arc<Mesh>,
    tau: f32,
}

impl FloodFillSeg3D {
    pub fn new(field: Arc<VertexFeatureField>, mesh: Arc<Mesh>, tau: f32) -> Result<Self, SegError> {
        if field.len() != mesh.vertex_count() {
            return Err(SegError::Contract(format!(
                "{} vertex features for a mesh of {} vertices",
                field.len(),
                mesh.vertex_count()
            )));
        }
        if !tau.is_finite() {
            return Err(SegError::Spec(format!("threshold {tau}")));
        }
        Ok(Self { field, mesh, tau })
    }

    pub fn tau(&self) -> f32 {
        self.tau
    }
}

impl Seg3DProvider for FloodFillSeg3D {
    fn vertex_count(&self) -> usize {
        self.mesh.vertex_count()
    }

    fn query(&self, vertex: usize) -> Result<Mask3D, SegError> {
        if vertex >= self.field.len() {
            return Err(SegError::VertexOutOfRange(vertex));
        }
        if !self.field.is_valid(vertex) {
            return Err(SegError::InvalidSeed(vertex));
        }
        let seed = self.field.feature(vertex);
        Ok(connected_component(&self.mesh, vertex, |u| {
            u == vertex
                || (self.field.is_valid(u)
                    && cosine_similarity(self.field.feature(u), seed).is_ok_and(|s| s >= self.tau))
        })?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LookupMode {
    #[default]
    Exact,
    Nearest,
}

fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T, SegError> {
    let text = std::fs::read_to_string(path).map_err(|source| SegError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| SegError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn resolve(base: &Path, p: &Path) -> PathBuf {
    crate::tensor_io::resolve_path(base, p)
}

/// Index of precomputed 2D masks, keyed by pixel or by region.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seg2DIndex {
    pub width: usize,
    pub height: usize,
    pub entries: Vec<Seg2DEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seg2DEntry {
    /// Click this entry answers for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pixel: Option<Pixel>,
    /// Mask of pixels this entry answers for.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub region: Option<PathBuf>,
    pub object: PathBuf,
    pub part: PathBuf,
}

/// Serves masks written by an external promptable segmenter.
///
/// A query is answered by the first region entry containing the pixel, then
/// by an exact pixel key, then (in nearest mode) by the closest pixel key in
/// Euclidean distance, ties in row-major order.
pub struct FileBackedSeg2D {
    base: PathBuf,
    index: Seg2DIndex,
    mode: LookupMode,
    regions: Vec<Option<Mask2D>>,
    cache: RwLock<HashMap<usize, Arc<MaskPair>>>,
}

impl std::fmt::Debug for FileBackedSeg2D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileBackedSeg2D")
            .field("base", &self.base)
            .field("entries", &self.index.entries.len())
            .field("mode", &self.mode)
            .finish()
    }
}

impl FileBackedSeg2D {
    pub fn open(manifest: impl AsRef<Path>, mode: LookupMode) -> Result<Self, SegError> {
        let manifest = manifest.as_ref();
        let index: Seg2DIndex = read_json(manifest)?;
        let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_index(base, index, mode)
    }

    pub fn from_index(base: PathBuf, index: Seg2DIndex, mode: LookupMode) -> Result<Self, SegError> {
        let dims = (index.width, index.height);
        let mut regions = Vec::with_capacity(index.entries.len());
        for (i, e) in index.entries.iter().enumerate() {
            if e.pixel.is_none() && e.region.is_none() {
                return Err(SegError::Contract(format!("entry {i} has neither pixel nor region key")));
            }
            if let Some(p) = e.pixel {
                if p.x >= index.width || p.y >= index.height {
                    return Err(SegError::Contract(format!("entry {i} key {p} outside image")));
                }
            }
            let region = match &e.region {
                Some(path) => {
                    let m = Mask2D::load(resolve(&base, path))?;
                    if m.dims() != dims {
                        return Err(SegError::Contract(format!("entry {i} region is {:?}", m.dims())));
                    }
                    Some(m)
                }
                None => None,
            };
            regions.push(region);
        }
        Ok(Self {
            base,
            index,
            mode,
            regions,
            cache: RwLock::new(HashMap::new()),
        })
    }

    fn lookup(&self, p: Pixel) -> Option<usize> {
        if let Some(i) = self.regions.iter().position(|r| r.as_ref().is_some_and(|m| m.contains(p))) {
            return Some(i);
        }
        let keyed = self
            .index
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| e.pixel.map(|k| (i, k)));
        match self.mode {
            LookupMode::Exact => keyed.filter(|&(_, k)| k == p).map(|(i, _)| i).next(),
            LookupMode::Nearest => keyed
                .min_by_key(|&(i, k)| {
                    let dx = k.x.abs_diff(p.x);
                    let dy = k.y.abs_diff(p.y);
                    (dx * dx + dy * dy, k.y, k.x, i)
                })
                .map(|(i, _)| i),
        }
    }

    fn load_entry(&self, i: usize) -> Result<Arc<MaskPair>, SegError> {
        if let Some(hit) = self.cache.read().expect("cache lock").get(&i) {
            return Ok(hit.clone());
        }
        let e = &self.index.entries[i];
        let object = Mask2D::load(resolve(&self.base, &e.object))?;
        let part = Mask2D::load(resolve(&self.base, &e.part))?;
        let dims = (self.index.width, self.index.height);
        if object.dims() != dims || part.dims() != dims {
            return Err(SegError::Contract(format!("entry {i} masks do not match {dims:?}")));
        }
        if !part.is_subset_of(&object) {
            return Err(SegError::Contract(format!("entry {i} part mask exceeds object mask")));
        }
        let pair = Arc::new(MaskPair { object, part });
        let mut cache = self.cache.write().expect("cache lock");
        Ok(cache.entry(i).or_insert(pair).clone())
    }
}

impl Seg2DProvider for FileBackedSeg2D {
    fn dims(&self) -> (usize, usize) {
        (self.index.width, self.index.height)
    }

    fn query(&self, pixel: Pixel) -> Result<MaskPair, SegError> {
        if pixel.x >= self.index.width || pixel.y >= self.index.height {
            return Err(SegError::OutOfBounds {
                pixel,
                width: self.index.width,
                height: self.index.height,
            });
        }
        let i = self
            .lookup(pixel)
            .ok_or_else(|| SegError::Miss(format!("pixel {pixel}")))?;
        Ok((*self.load_entry(i)?).clone())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seg3DIndex {
    pub vertices: usize,
    pub entries: Vec<Seg3DEntry>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Seg3DEntry {
    pub vertex: usize,
    pub mask: PathBuf,
}

/// Serves precomputed vertex-click segmentations. Nearest mode picks the
/// indexed vertex with the fewest adjacency hops, ties to the lower index.
pub struct FileBackedSeg3D {
    base: PathBuf,
    index: Seg3DIndex,
    mode: LookupMode,
    mesh: Option<Arc<Mesh>>,
    cache: RwLock<HashMap<usize, Mask3D>>,
}

impl std::fmt::Debug for FileBackedSeg3D {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("FileBackedSeg3D")
            .field("base", &self.base)
            .field("entries", &self.index.entries.len())
            .field("mode", &self.mode)
            .finish()
    }
}

impl FileBackedSeg3D {
    pub fn open(manifest: impl AsRef<Path>, mode: LookupMode, mesh: Option<Arc<Mesh>>) -> Result<Self, SegError> {
        let manifest = manifest.as_ref();
        let index: Seg3DIndex = read_json(manifest)?;
        let base = manifest.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_index(base, index, mode, mesh)
    }

    pub fn from_index(
        base: PathBuf,
        index: Seg3DIndex,
        mode: LookupMode,
        mesh: Option<Arc<Mesh>>,
    ) -> Result<Self, SegError> {
        if let Some(e) = index.entries.iter().find(|e| e.vertex >= index.vertices) {
            return Err(SegError::Contract(format!("key vertex {} >= {}", e.vertex, index.vertices)));
        }
        match (&mesh, mode) {
            (None, LookupMode::Nearest) => {
                return Err(SegError::Spec("nearest vertex lookup needs a mesh".into()))
            }
            (Some(m), _) if m.vertex_count() != index.vertices => {
                return Err(SegError::Contract(format!(
                    "index covers {} vertices, mesh has {}",
                    index.vertices,
                    m.vertex_count()
                )))
            }
            _ => {}
        }
        Ok(Self {
            base,
            index,
            mode,
            mesh,
            cache: RwLock::new(HashMap::new()),
        })
    }

    fn lookup(&self, v: usize) -> Option<usize> {
        let exact = self.index.entries.iter().position(|e| e.vertex == v);
        if exact.is_some() || self.mode == LookupMode::Exact {
            return exact;
        }
        let mesh = self.mesh.as_ref()?;
        let dist = hop_distances(mesh, v);
        self.index
            .entries
            .iter()
            .enumerate()
            .filter_map(|(i, e)| dist[e.vertex].map(|d| (d, e.vertex, i)))
            .min()
            .map(|(_, _, i)| i)
    }
}

impl Seg3DProvider for FileBackedSeg3D {
    fn vertex_count(&self) -> usize {
        self.index.vertices
    }

    fn query(&self, vertex: usize) -> Result<Mask3D, SegError> {
        if vertex >= self.index.vertices {
            return Err(SegError::VertexOutOfRange(vertex));
        }
        let i = self
            .lookup(vertex)
            .ok_or_else(|| SegError::Miss(format!("vertex {vertex}")))?;
        if let Some(m) = self.cache.read().expect("cache lock").get(&i) {
            return Ok(m.clone());
        }
        let m = Mask3D::load(resolve(&self.base, &self.index.entries[i].mask))?;
        if m.len() != self.index.vertices {
            return Err(SegError::Contract(format!(
                "mask for entry {i} has {} entries",
                m.len()
            )));
        }
        self.cache.write().expect("cache lock").insert(i, m.clone());
        Ok(m)
    }
}

/// Provider spec strings: `synthetic:<labels.bsbt>`,
/// `files:<manifest.json>[:exact|nearest]`, `floodfill:<tau>`.
#[derive(Debug, Clone, PartialEq)]
pub enum ProviderSpec {
    Synthetic(PathBuf),
    Files { manifest: PathBuf, mode: LookupMode },
    FloodFill { tau: f32 },
}

impl std::str::FromStr for ProviderSpec {
    type Err = SegError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SegError::Spec(s.to_string());
        let (kind, rest) = s.split_once(':').ok_or_else(bad)?;
        match kind {
            "synthetic" if !rest.is_empty() => Ok(ProviderSpec::Synthetic(rest.into())),
            "files" => {
                let (path, mode) = if let Some(p) = rest.strip_suffix(":exact") {
                    (p, LookupMode::Exact)
                } else if let Some(p) = rest.strip_suffix(":nearest") {
                    (p, LookupMode::Nearest)
                } else {
                    (rest, LookupMode::Exact)
                };
                if path.is_empty() {
                    return Err(bad());
                }
                Ok(ProviderSpec::Files {
                    manifest: path.into(),
                    mode,
                })
            }
            "floodfill" => {
                let tau: f32 = rest.parse().map_err(|_| bad())?;
                if !(-1.0..=1.0).contains(&tau) {
                    return Err(bad());
                }
                Ok(ProviderSpec::FloodFill { tau })
            }
            _ => Err(bad()),
        }
    }
}

impl ProviderSpec {
    /// Resolves relative paths against `base`.
    pub fn rebased(self, base: &Path) -> Self {
        match self {
            ProviderSpec::Synthetic(p) => ProviderSpec::Synthetic(resolve(base, &p)),
            ProviderSpec::Files { manifest, mode } => ProviderSpec::Files {
                manifest: resolve(base, &manifest),
                mode,
            },
            other => other,
        }
    }

    pub fn build_seg2d(&self) -> Result<Arc<dyn Seg2DProvider>, SegError> {
        match self {
            ProviderSpec::Synthetic(path) => Ok(Arc::new(SyntheticSeg2D::new(LabelField2D::load(path)?))),
            ProviderSpec::Files { manifest, mode } => Ok(Arc::new(FileBackedSeg2D::open(manifest, *mode)?)),
            ProviderSpec::FloodFill { .. } => Err(SegError::Spec("floodfill is a 3D provider".into())),
        }
    }

    pub fn build_seg3d(
        &self,
        field: Option<Arc<VertexFeatureField>>,
        mesh: Option<Arc<Mesh>>,
    ) -> Result<Arc<dyn Seg3DProvider>, SegError> {
        match self {
            ProviderSpec::Synthetic(path) => Ok(Arc::new(SyntheticSeg3D::new(LabelField3D::load(path)?))),
            ProviderSpec::Files { manifest, mode } => Ok(Arc::new(FileBackedSeg3D::open(manifest, *mode, mesh)?)),
            ProviderSpec::FloodFill { tau } => {
                let (Some(field), Some(mesh)) = (field, mesh) else {
                    return Err(SegError::Spec("floodfill needs vertex features and a mesh".into()));
                };
                Ok(Arc::new(FloodFillSeg3D::new(field, mesh, *tau)?))
            }
        }
    }
}

/// Outcome of the full pixel-click pipeline.
#[derive(Debug, Clone, PartialEq)]
pub struct Correspondence {
    pub result: MatchResult,
    /// 3D part of the matched vertex; all zeros on a no-match.
    pub mask3d: Mask3D,
}

/// Matches the click, then segments the shape at the matched vertex. A
/// no-match yields an empty 3D segmentation.
pub fn correspond(
    ctx: &ClickContext<'_>,
    seg2d: &dyn Seg2DProvider,
    seg3d: &dyn Seg3DProvider,
) -> Result<Correspondence, SegError> {
    let result = bsb_match(ctx, seg2d)?;
    let n = ctx.vertices.len();
    let mask3d = match result.vertex {
        Some(v) => {
            let m = seg3d.query(v)?;
            if m.len() != n || !m.contains(v) {
                return Err(SegError::Contract(format!("3D mask for vertex {v} violates the provider contract")));
            }
            m
        }
        None => Mask3D::empty(n),
    };
    Ok(Correspondence { result, mask3d })
}
