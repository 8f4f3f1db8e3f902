//! Lifting per-view pixel features onto mesh vertices by averaging.

use rayon::prelude::*;

use crate::matcher::{cosine_similarity, MatchError};
use crate::mesh::Mesh;
use crate::raster::{render, Camera, RenderMap};
use crate::tensor_io::{FeatureImage, TensorError, VertexFeatureField};

#[derive(Debug, thiserror::Error)]
pub enum DistillError {
    #[error("no views supplied")]
    NoViews,
    #[error("view {view} has {found} channels, expected {expected}")]
    DimMismatch {
        view: usize,
        expected: usize,
        found: usize,
    },
    #[error("view {view} feature image is {found:?}, camera renders {expected:?}")]
    SizeMismatch {
        view: usize,
        expected: (usize, usize),
        found: (usize, usize),
    },
    #[error("view {view}: {source}")]
    Camera {
        view: usize,
        #[source]
        source: crate::raster::RasterError,
    },
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Views of one mesh paired with feature images at render resolution.
#[derive(Debug, Clone, Default)]
pub struct ViewFeatureSet {
    views: Vec<(Camera, FeatureImage)>,
}

impl ViewFeatureSet {
    pub fn new(views: Vec<(Camera, FeatureImage)>) -> Result<Self, DistillError> {
        let dim = views.first().ok_or(DistillError::NoViews)?.1.dim();
        for (i, (cam, img)) in views.iter().enumerate() {
            cam.validate()
                .map_err(|source| DistillError::Camera { view: i, source })?;
            if img.dim() != dim {
                return Err(DistillError::DimMismatch {
                    view: i,
                    expected: dim,
                    found: img.dim(),
                });
            }
            if (img.width(), img.height()) != (cam.width, cam.height) {
                return Err(DistillError::SizeMismatch {
                    view: i,
                    expected: (cam.width, cam.height),
                    found: (img.width(), img.height()),
                });
            }
        }
        Ok(Self { views })
    }

    pub fn len(&self) -> usize {
        self.views.len()
    }

    pub fn is_empty(&self) -> bool {
        self.views.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.views[0].1.dim()
    }

    pub fn views(&self) -> &[(Camera, FeatureImage)] {
        &self.views
    }
}

/// Averages, for every vertex, the features at its rounded projected pixel
/// over all views in which it is visible and that pixel is covered by the
/// mesh.
///
/// Contributions are summed in f64 after sorting them by value, so the
/// result does not depend on view order. Vertices seen in no view come back
/// invalid with a zero row.
pub fn distill_features(mesh: &Mesh, views: &ViewFeatureSet) -> Result<VertexFeatureField, DistillError> {
    if views.is_empty() {
        return Err(DistillError::NoViews);
    }
    let dim = views.dim();
    let n = mesh.vertex_count();

    let maps: Vec<RenderMap> = views
        .views
        .par_iter()
        .map(|(cam, _)| render(mesh, cam))
        .collect();

    let mut contributions: Vec<Vec<&[f32]>> = vec![Vec::new(); n];
    for ((_, image), map) in views.views.iter().zip(&maps) {
        for (v, slot) in contributions.iter_mut().enumerate() {
            if !map.is_visible(v) {
                continue;
            }
            // Silhouette corners can be visible while their rounded pixel is
            // background; that pixel describes the background, not v.
            if let Some(p) = map.vertex_pixel(v).filter(|&p| map.vertex_at(p).is_some()) {
                slot.push(image.feature(p));
            }
        }
    }

    let rows: Vec<(Vec<f32>, bool)> = contributions
        .into_par_iter()
        .map(|mut feats| {
            if feats.is_empty() {
                return (vec![0.0; dim], false);
            }
            feats.sort_by(|a, b| {
                a.iter()
                    .zip(b.iter())
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(std::cmp::Ordering::Equal)
            });
            let mut sum = vec![0f64; dim];
            for f in &feats {
                for (s, &x) in sum.iter_mut().zip(f.iter()) {
                    *s += x as f64;
                }
            }
            let count = feats.len() as f64;
            let mean: Vec<f32> = sum.iter().map(|s| (s / count) as f32).collect();
            // An all-zero mean cannot be told apart from an unseen vertex on disk.
            let valid = mean.iter().any(|&x| x != 0.0);
            (mean, valid)
        })
        .collect();

    let mut data = Vec::with_capacity(n * dim);
    let mut valid = Vec::with_capacity(n);
    for (row, ok) in rows {
        data.extend_from_slice(&row);
        valid.push(ok);
    }
    Ok(VertexFeatureField::new(dim, data, valid)?)
}

/// Cosine similarity of every valid vertex to `query`; invalid vertices get
/// `-inf`.
pub fn feature_heatmap(field: &VertexFeatureField, query: &[f32]) -> Result<Vec<f32>, MatchError> {
    if query.len() != field.dim() {
        return Err(MatchError::DimMismatch {
            expected: field.dim(),
            found: query.len(),
        });
    }
    if query.iter().all(|&x| x == 0.0) {
        return Err(MatchError::ZeroNorm);
    }
    (0..field.len())
        .map(|v| {
            if field.is_valid(v) {
                cosine_similarity(query, field.feature(v))
            } else {
                Ok(f32::NEG_INFINITY)
            }
        })
        .collect()
}
