use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{read_header_file, DType, Pixel, TensorError};
use crate::mesh::{load_mesh, MeshError};
use crate::raster::Camera;

#[derive(Debug, thiserror::Error)]
pub enum ManifestError {
    #[error("cannot read manifest {path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("manifest {path} does not match the schema: {source}")]
    Schema {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("case {case}: {source}")]
    Tensor {
        case: String,
        #[source]
        source: TensorError,
    },
    #[error("case {case}: {source}")]
    Mesh {
        case: String,
        #[source]
        source: MeshError,
    },
    #[error("case {case}: {reason}")]
    Invalid { case: String, reason: String },
}

/// An annotated image region for the IoU-fidelity statistic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionEntry {
    pub mask: PathBuf,
    pub has_counterpart: bool,
}

/// One evaluation case as written in the manifest. Paths are relative to the
/// manifest's directory unless absolute.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CaseEntry {
    pub name: String,
    pub image_features: PathBuf,
    pub part_mask: PathBuf,
    pub object_mask: PathBuf,
    pub vertex_features: PathBuf,
    pub mesh: PathBuf,
    pub click: Pixel,
    /// Empty when the clicked region has no counterpart on the shape.
    pub gt_part: Vec<usize>,
    /// 2D provider spec (`synthetic:<labels>` or `files:<manifest>[:mode]`).
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seg2d: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub regions: Vec<RegionEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub view: Option<Camera>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ManifestFile {
    pub cases: Vec<CaseEntry>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetManifest {
    pub base_dir: PathBuf,
    pub cases: Vec<CaseEntry>,
}

impl DatasetManifest {
    pub fn resolve(&self, p: &Path) -> PathBuf {
        resolve_path(&self.base_dir, p)
    }

    pub fn len(&self) -> usize {
        self.cases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cases.is_empty()
    }
}

pub fn resolve_path(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

/// Parses a manifest and validates every case against the headers of the
/// containers it references.
pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest, ManifestError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| ManifestError::Read {
        path: path.to_path_buf(),
        source,
    })?;
    let file: ManifestFile = serde_json::from_str(&text).map_err(|source| ManifestError::Schema {
        path: path.to_path_buf(),
        source,
    })?;
    let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let manifest = DatasetManifest {
        base_dir,
        cases: file.cases,
    };
    for case in &manifest.cases {
        validate_case(&manifest.base_dir, case)?;
    }
    Ok(manifest)
}

fn validate_case(base: &Path, case: &CaseEntry) -> Result<(), ManifestError> {
    let name = || case.name.clone();
    let invalid = |reason: String| ManifestError::Invalid {
        case: case.name.clone(),
        reason,
    };
    let header = |p: &Path| {
        read_header_file(resolve_path(base, p)).map_err(|source| ManifestError::Tensor {
            case: name(),
            source,
        })
    };

    let image = header(&case.image_features)?;
    let (h, w, d) = match (image.dtype, image.dims.as_slice()) {
        (DType::F32, &[h, w, d]) => (h, w, d),
        _ => {
            return Err(invalid(format!(
                "image features must be f32 [h, w, d], found {} {:?}",
                image.dtype, image.dims
            )))
        }
    };
    let check_mask = |label: &str, p: &Path| -> Result<(), ManifestError> {
        let m = header(p)?;
        if m.dtype != DType::U8 || m.dims != [h, w] {
            return Err(invalid(format!(
                "{label} {} {:?} does not match image features [{h}, {w}]",
                m.dtype, m.dims
            )));
        }
        Ok(())
    };
    check_mask("part mask", &case.part_mask)?;
    check_mask("object mask", &case.object_mask)?;
    for region in &case.regions {
        check_mask("region mask", &region.mask)?;
    }

    let verts = header(&case.vertex_features)?;
    let n = match (verts.dtype, verts.dims.as_slice()) {
        (DType::F32, &[n, vd]) if vd == d => n,
        _ => {
            return Err(invalid(format!(
                "vertex features must be f32 [n, {d}], found {} {:?}",
                verts.dtype, verts.dims
            )))
        }
    };
    let mesh = load_mesh(resolve_path(base, &case.mesh)).map_err(|source| ManifestError::Mesh {
        case: name(),
        source,
    })?;
    if mesh.vertex_count() != n {
        return Err(invalid(format!(
            "mesh has {} vertices but vertex features have {n}",
            mesh.vertex_count()
        )));
    }

    if case.click.x >= w || case.click.y >= h {
        return Err(invalid(format!(
            "click {} outside image bounds {w}x{h}",
            case.click
        )));
    }
    if let Some(&bad) = case.gt_part.iter().find(|&&v| v >= n) {
        return Err(invalid(format!("ground-truth vertex {bad} >= {n}")));
    }
    Ok(())
}
