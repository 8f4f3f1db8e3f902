//! Best-segmentation-buddy matching between a clicked pixel and mesh
//! vertices, the two baselines it is compared against, and the reverse
//! (vertex to pixel) direction.
//!
//! Forward matching for a click `p`:
//!
//! 1. rank valid vertices by cosine similarity to the feature at `p` and
//!    keep the top `k` as candidates;
//! 2. for each candidate find its most similar pixel `q'` inside the object
//!    mask;
//! 3. drop candidates whose `q'` falls outside the part mask of `p`;
//! 4. segment each surviving `q'` and keep the candidate whose mask has the
//!    highest IoU with the part mask of `p`.
//!
//! When no candidate survives step 3 the result is an explicit no-match.
//!
//! All argmax ties resolve deterministically: similarity ties go to the lower
//! vertex index, pixel ties to row-major order, IoU ties to the earlier
//! candidate rank.

use std::collections::HashMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::segmenters::{Seg2DProvider, Seg3DProvider};
use crate::tensor_io::{FeatureImage, Mask2D, Mask3D, Pixel, VertexFeatureField};

/// Candidate budget used when none is given.
pub const DEFAULT_K: usize = 100;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MatchError {
    #[error("feature dimensions differ: {expected} vs {found}")]
    DimMismatch { expected: usize, found: usize },
    #[error("zero-norm feature vector")]
    ZeroNorm,
    #[error("no valid vertex with a non-zero feature")]
    NoValidVertices,
    #[error("object mask holds no pixel with a non-zero feature")]
    EmptyObjectMask,
    #[error("mask sizes differ: {a:?} vs {b:?}")]
    MaskDims { a: (usize, usize), b: (usize, usize) },
    #[error("click {0} lies outside the image")]
    ClickOutOfBounds(Pixel),
    #[error("click {0} is not inside its part mask")]
    ClickOutsidePart(Pixel),
    #[error("part mask is not contained in the object mask")]
    PartNotInObject,
    #[error("candidate budget k must be at least 1")]
    InvalidK,
    #[error("vertex {0} out of range")]
    VertexOutOfRange(usize),
    #[error("vertex {0} has no valid feature")]
    InvalidVertex(usize),
    #[error("vertex mask has {found} entries, expected {expected}")]
    Mask3DLength { expected: usize, found: usize },
    #[error("segmentation failed: {0}")]
    Segmentation(String),
}

fn norm(a: &[f32]) -> f64 {
    a.iter().map(|&x| x as f64 * x as f64).sum::<f64>().sqrt()
}

fn cosine_with_norms(a: &[f32], na: f64, b: &[f32], nb: f64) -> f32 {
    let dot: f64 = a.iter().zip(b).map(|(&x, &y)| x as f64 * y as f64).sum();
    let c = ((dot / (na * nb)) as f32).clamp(-1.0, 1.0);
    // −0.0 would rank below +0.0 under total_cmp and break index tie-breaking.
    if c == 0.0 {
        0.0
    } else {
        c
    }
}

/// `a·b / (‖a‖‖b‖)` accumulated in f64, clamped to [−1, 1].
pub fn cosine_similarity(a: &[f32], b: &[f32]) -> Result<f32, MatchError> {
    if a.len() != b.len() {
        return Err(MatchError::DimMismatch {
            expected: a.len(),
            found: b.len(),
        });
    }
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return Err(MatchError::ZeroNorm);
    }
    Ok(cosine_with_norms(a, na, b, nb))
}

/// |a ∩ b| / |a ∪ b|, 0 when the union is empty.
pub fn mask_iou(a: &Mask2D, b: &Mask2D) -> Result<f32, MatchError> {
    if a.dims() != b.dims() {
        return Err(MatchError::MaskDims {
            a: a.dims(),
            b: b.dims(),
        });
    }
    let (inter, union) = a
        .bits()
        .iter()
        .zip(b.bits())
        .fold((0u64, 0u64), |(i, u), (&x, &y)| (i + (x & y) as u64, u + (x | y) as u64));
    Ok(if union == 0 {
        0.0
    } else {
        inter as f32 / union as f32
    })
}

/// Everything a single forward match needs.
#[derive(Debug, Clone, Copy)]
pub struct ClickContext<'a> {
    pub image: &'a FeatureImage,
    pub click: Pixel,
    pub part_mask: &'a Mask2D,
    pub object_mask: &'a Mask2D,
    pub vertices: &'a VertexFeatureField,
    pub k: usize,
}

impl<'a> ClickContext<'a> {
    pub fn new(
        image: &'a FeatureImage,
        click: Pixel,
        part_mask: &'a Mask2D,
        object_mask: &'a Mask2D,
        vertices: &'a VertexFeatureField,
        k: usize,
    ) -> Result<Self, MatchError> {
        let ctx = Self {
            image,
            click,
            part_mask,
            object_mask,
            vertices,
            k,
        };
        ctx.validate()?;
        Ok(ctx)
    }

    pub fn with_k(mut self, k: usize) -> Self {
        self.k = k;
        self
    }

    pub fn validate(&self) -> Result<(), MatchError> {
        let dims = (self.image.width(), self.image.height());
        for m in [self.part_mask, self.object_mask] {
            if m.dims() != dims {
                return Err(MatchError::MaskDims { a: dims, b: m.dims() });
            }
        }
        if !self.image.contains(self.click) {
            return Err(MatchError::ClickOutOfBounds(self.click));
        }
        if !self.part_mask.contains(self.click) {
            return Err(MatchError::ClickOutsidePart(self.click));
        }
        if !self.part_mask.is_subset_of(self.object_mask) {
            return Err(MatchError::PartNotInObject);
        }
        if self.vertices.dim() != self.image.dim() {
            return Err(MatchError::DimMismatch {
                expected: self.image.dim(),
                found: self.vertices.dim(),
            });
        }
        if self.k == 0 {
            return Err(MatchError::InvalidK);
        }
        Ok(())
    }

    fn click_feature(&self) -> &'a [f32] {
        self.image.feature(self.click)
    }
}

/// Ranks valid non-zero vertices by similarity to `query`, best first.
fn rank_vertices(
    vertices: &VertexFeatureField,
    query: &[f32],
    k: usize,
) -> Result<Vec<(usize, f32)>, MatchError> {
    let nq = norm(query);
    if nq == 0.0 {
        return Err(MatchError::ZeroNorm);
    }
    let mut scored: Vec<(usize, f32)> = (0..vertices.len())
        .into_par_iter()
        .filter_map(|v| {
            if !vertices.is_valid(v) {
                return None;
            }
            let f = vertices.feature(v);
            let nf = norm(f);
            (nf > 0.0).then(|| (v, cosine_with_norms(query, nq, f, nf)))
        })
        .collect();
    if scored.is_empty() {
        return Err(MatchError::NoValidVertices);
    }
    sort_ranked(&mut scored);
    scored.truncate(k);
    Ok(scored)
}

fn sort_ranked(scored: &mut [(usize, f32)]) {
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
}

/// Valid vertices with non-zero features and their norms.
struct VertexBank<'a> {
    field: &'a VertexFeatureField,
    entries: Vec<(usize, f64)>,
}

impl<'a> VertexBank<'a> {
    fn new(field: &'a VertexFeatureField) -> Result<Self, MatchError> {
        let entries: Vec<(usize, f64)> = (0..field.len())
            .filter(|&v| field.is_valid(v))
            .map(|v| (v, norm(field.feature(v))))
            .filter(|&(_, n)| n > 0.0)
            .collect();
        if entries.is_empty() {
            return Err(MatchError::NoValidVertices);
        }
        Ok(Self { field, entries })
    }

    fn nearest(&self, query: &[f32], nq: f64) -> (usize, f32) {
        let mut best = (self.entries[0].0, f32::NEG_INFINITY);
        for &(v, nv) in &self.entries {
            let s = cosine_with_norms(query, nq, self.field.feature(v), nv);
            if s > best.1 {
                best = (v, s);
            }
        }
        best
    }
}

/// Pixels of a mask with non-zero features, in row-major order, and their norms.
struct PixelBank<'a> {
    image: &'a FeatureImage,
    entries: Vec<(Pixel, f64)>,
}

impl<'a> PixelBank<'a> {
    fn new(image: &'a FeatureImage, mask: &Mask2D) -> Result<Self, MatchError> {
        let entries: Vec<(Pixel, f64)> = mask
            .pixels()
            .map(|p| (p, norm(image.feature(p))))
            .filter(|&(_, n)| n > 0.0)
            .collect();
        if entries.is_empty() {
            return Err(MatchError::EmptyObjectMask);
        }
        Ok(Self { image, entries })
    }

    fn nearest(&self, query: &[f32], nq: f64) -> (Pixel, f32) {
        let mut best = (self.entries[0].0, f32::NEG_INFINITY);
        for &(p, np) in &self.entries {
            let s = cosine_with_norms(query, nq, self.image.feature(p), np);
            if s > best.1 {
                best = (p, s);
            }
        }
        best
    }

    fn ranked(&self, query: &[f32], nq: f64, k: usize) -> Vec<(Pixel, f32)> {
        let w = self.image.width();
        let mut scored: Vec<(usize, f32)> = self
            .entries
            .par_iter()
            .map(|&(p, np)| {
                (
                    p.y * w + p.x,
                    cosine_with_norms(query, nq, self.image.feature(p), np),
                )
            })
            .collect();
        sort_ranked(&mut scored);
        scored.truncate(k);
        scored
            .into_iter()
            .map(|(i, s)| (Pixel::new(i % w, i / w), s))
            .collect()
    }
}

/// The `k` valid vertices most similar to the clicked pixel, best first.
pub fn top_k_candidates(ctx: &ClickContext<'_>) -> Result<Vec<usize>, MatchError> {
    Ok(rank_vertices(ctx.vertices, ctx.click_feature(), ctx.k)?
        .into_iter()
        .map(|(v, _)| v)
        .collect())
}

/// Most similar object-mask pixel to vertex `v`.
pub fn nearest_pixel(v: usize, ctx: &ClickContext<'_>) -> Result<Pixel, MatchError> {
    let f = vertex_feature(ctx.vertices, v)?;
    let bank = PixelBank::new(ctx.image, ctx.object_mask)?;
    Ok(bank.nearest(f, norm(f)).0)
}

fn vertex_feature(field: &VertexFeatureField, v: usize) -> Result<&[f32], MatchError> {
    if v >= field.len() {
        return Err(MatchError::VertexOutOfRange(v));
    }
    let f = field.feature(v);
    if !field.is_valid(v) || norm(f) == 0.0 {
        return Err(MatchError::InvalidVertex(v));
    }
    Ok(f)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Candidate {
    pub vertex: usize,
    pub similarity: f32,
    pub nearest_pixel: Pixel,
    pub in_part: bool,
    pub iou: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MatchResult {
    pub vertex: Option<usize>,
    pub pixel: Option<Pixel>,
    pub iou: Option<f32>,
    pub candidates: Vec<Candidate>,
    /// Segmentation of the matched pixel `q*`.
    #[serde(skip)]
    pub match_mask: Option<Mask2D>,
}

impl MatchResult {
    pub fn is_match(&self) -> bool {
        self.vertex.is_some()
    }
}

/// Queries `seg` once per distinct pixel, concurrently when it allows it, and
/// checks each answer against the provider contract.
fn segment_pixels(
    seg: &dyn Seg2DProvider,
    pixels: &[Pixel],
    dims: (usize, usize),
) -> HashMap<Pixel, Result<Mask2D, String>> {
    let query = |&p: &Pixel| {
        let res = seg
            .query(p)
            .map_err(|e| e.to_string())
            .and_then(|pair| {
                if pair.part.dims() != dims {
                    Err(format!("provider mask is {:?}, image is {dims:?}", pair.part.dims()))
                } else if !pair.part.contains(p) {
                    Err(format!("provider part mask does not contain {p}"))
                } else {
                    Ok(pair.part)
                }
            });
        (p, res)
    };
    if seg.capabilities().concurrent {
        pixels.par_iter().map(query).collect()
    } else {
        pixels.iter().map(query).collect()
    }
}

/// Forward best-segmentation-buddy match for the click in `ctx`.
pub fn bsb_match(ctx: &ClickContext<'_>, seg2d: &dyn Seg2DProvider) -> Result<MatchResult, MatchError> {
    ctx.validate()?;
    let ranked = rank_vertices(ctx.vertices, ctx.click_feature(), ctx.k)?;
    let bank = PixelBank::new(ctx.image, ctx.object_mask)?;

    let nearest: Vec<Pixel> = ranked
        .par_iter()
        .map(|&(v, _)| {
            let f = ctx.vertices.feature(v);
            bank.nearest(f, norm(f)).0
        })
        .collect();

    let mut survivors: Vec<Pixel> = Vec::new();
    for q in &nearest {
        if ctx.part_mask.contains(*q) && !survivors.contains(q) {
            survivors.push(*q);
        }
    }
    let dims = ctx.part_mask.dims();
    let masks = segment_pixels(seg2d, &survivors, dims);

    let mut candidates = Vec::with_capacity(ranked.len());
    let mut best: Option<(usize, f32)> = None;
    let mut max_iou = 0.0f32;
    for (rank, (&(vertex, similarity), &q)) in ranked.iter().zip(&nearest).enumerate() {
        let in_part = ctx.part_mask.contains(q);
        let mut cand = Candidate {
            vertex,
            similarity,
            nearest_pixel: q,
            in_part,
            iou: None,
            diagnostic: None,
        };
        if in_part {
            match &masks[&q] {
                Ok(m) => {
                    let iou = mask_iou(ctx.part_mask, m)?;
                    cand.iou = Some(iou);
                    if iou > max_iou {
                        max_iou = iou;
                        best = Some((rank, iou));
                    }
                }
                Err(msg) => cand.diagnostic = Some(msg.clone()),
            }
        }
        candidates.push(cand);
    }

    Ok(match best {
        Some((rank, iou)) => {
            let q = candidates[rank].nearest_pixel;
            MatchResult {
                vertex: Some(candidates[rank].vertex),
                pixel: Some(q),
                iou: Some(iou),
                match_mask: masks.get(&q).and_then(|r| r.as_ref().ok()).cloned(),
                candidates,
            }
        }
        None => MatchResult {
            vertex: None,
            pixel: None,
            iou: None,
            match_mask: None,
            candidates,
        },
    })
}

/// The single most similar vertex.
pub fn nn_baseline(ctx: &ClickContext<'_>) -> Result<usize, MatchError> {
    ctx.validate()?;
    Ok(rank_vertices(ctx.vertices, ctx.click_feature(), 1)?[0].0)
}

/// A uniformly random member of the top-`k` candidates.
pub fn random_candidate_baseline(ctx: &ClickContext<'_>, seed: u64) -> Result<usize, MatchError> {
    ctx.validate()?;
    let cands = top_k_candidates(ctx)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(cands[rng.gen_range(0..cands.len())])
}

/// Inputs of the vertex-to-pixel direction.
#[derive(Debug, Clone, Copy)]
pub struct ReverseContext<'a> {
    pub image: &'a FeatureImage,
    /// Pixels eligible as candidates.
    pub scope: &'a Mask2D,
    pub vertices: &'a VertexFeatureField,
    pub vertex: usize,
    /// 3D segmentation of the clicked vertex.
    pub part3d: &'a Mask3D,
    pub k: usize,
}

impl ReverseContext<'_> {
    pub fn validate(&self) -> Result<(), MatchError> {
        let dims = (self.image.width(), self.image.height());
        if self.scope.dims() != dims {
            return Err(MatchError::MaskDims {
                a: dims,
                b: self.scope.dims(),
            });
        }
        if self.vertices.dim() != self.image.dim() {
            return Err(MatchError::DimMismatch {
                expected: self.image.dim(),
                found: self.vertices.dim(),
            });
        }
        if self.part3d.len() != self.vertices.len() {
            return Err(MatchError::Mask3DLength {
                expected: self.vertices.len(),
                found: self.part3d.len(),
            });
        }
        if !self.part3d.contains(self.vertex) {
            return Err(MatchError::Segmentation(format!(
                "vertex mask does not contain clicked vertex {}",
                self.vertex
            )));
        }
        if self.k == 0 {
            return Err(MatchError::InvalidK);
        }
        vertex_feature(self.vertices, self.vertex)?;
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseCandidate {
    pub pixel: Pixel,
    pub similarity: f32,
    pub nearest_vertex: usize,
    pub in_part: bool,
    pub iou: Option<f32>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReverseMatchResult {
    pub pixel: Option<Pixel>,
    /// Nearest vertex of the matched pixel.
    pub vertex: Option<usize>,
    pub iou: Option<f32>,
    pub candidates: Vec<ReverseCandidate>,
}

/// Vertex-to-pixel match: the forward procedure with the modalities swapped.
///
/// Candidates are the `k` scope pixels most similar to the clicked vertex;
/// a candidate survives when its most similar vertex lies in `part3d`, and
/// survivors are ranked by the IoU of `seg3d(nearest vertex)` with `part3d`.
pub fn bsb_match_reverse(
    ctx: &ReverseContext<'_>,
    seg3d: &dyn Seg3DProvider,
) -> Result<ReverseMatchResult, MatchError> {
    ctx.validate()?;
    let query = ctx.vertices.feature(ctx.vertex);
    let pixels = PixelBank::new(ctx.image, ctx.scope)?;
    let ranked = pixels.ranked(query, norm(query), ctx.k);
    let verts = VertexBank::new(ctx.vertices)?;

    let nearest: Vec<usize> = ranked
        .par_iter()
        .map(|&(p, _)| {
            let f = ctx.image.feature(p);
            verts.nearest(f, norm(f)).0
        })
        .collect();

    let mut memo: HashMap<usize, Result<Mask3D, String>> = HashMap::new();
    let n = ctx.vertices.len();
    let mut candidates = Vec::with_capacity(ranked.len());
    let mut best: Option<(usize, f32)> = None;
    let mut max_iou = 0.0f32;
    for (rank, (&(pixel, similarity), &u)) in ranked.iter().zip(&nearest).enumerate() {
        let in_part = ctx.part3d.contains(u);
        let mut cand = ReverseCandidate {
            pixel,
            similarity,
            nearest_vertex: u,
            in_part,
            iou: None,
            diagnostic: None,
        };
        if in_part {
            let mask = memo.entry(u).or_insert_with(|| {
                seg3d
                    .query(u)
                    .map_err(|e| e.to_string())
                    .and_then(|m| {
                        if m.len() != n {
                            Err(format!("provider mask has {} entries, expected {n}", m.len()))
                        } else if !m.contains(u) {
                            Err(format!("provider mask does not contain vertex {u}"))
                        } else {
                            Ok(m)
                        }
                    })
            });
            match mask {
                Ok(m) => {
                    let iou = ctx
                        .part3d
                        .iou(m)
                        .map_err(|e| MatchError::Segmentation(e.to_string()))?;
                    cand.iou = Some(iou);
                    if iou > max_iou {
                        max_iou = iou;
                        best = Some((rank, iou));
                    }
                }
                Err(msg) => cand.diagnostic = Some(msg.clone()),
            }
        }
        candidates.push(cand);
    }

    Ok(match best {
        Some((rank, iou)) => ReverseMatchResult {
            pixel: Some(candidates[rank].pixel),
            vertex: Some(candidates[rank].nearest_vertex),
            iou: Some(iou),
            candidates,
        },
        None => ReverseMatchResult {
            pixel: None,
            vertex: None,
            iou: None,
            candidates,
        },
    })
}
