//! Evaluation over case manifests: success rate, the candidate-budget
//! ablation, IoU fidelity, and building cases from projected vertices.
//!
//! Report schema (`EvalReport` as JSON):
//!
//! ```text
//! { "method": "bsb" | "nn" | "random", "k": 100, "seed": 7 | null,
//!   "total": 8, "hits": 6, "misses": 2, "no_match": 1, "errors": 0,
//!   "success_rate": 0.75,
//!   "cases": [ { "name": "...", "outcome": "hit" | "miss" | "no_match" | "error",
//!                "vertex": 3 | null, "iou": 1.0 | null, "diagnostic": "..." | null } ] }
//! ```
//!
//! `misses` includes no-match and error cases, so `hits + misses == total`.

use std::collections::HashMap;
use std::sync::Arc;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::matcher::{bsb_match, nn_baseline, random_candidate_baseline, ClickContext, MatchError};
use crate::mesh::Mesh;
use crate::raster::{render, Camera, RenderMap};
use crate::segmenters::{LabelField3D, ProviderSpec, Seg2DProvider, SegError};
use crate::tensor_io::{
    CaseEntry, DatasetManifest, FeatureImage, Mask2D, Pixel, TensorError, VertexFeatureField,
};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("manifest has no cases")]
    EmptyManifest,
    #[error("candidate budgets must be non-empty and strictly ascending, got {0:?}")]
    BadKs(Vec<usize>),
    #[error("k must be positive")]
    InvalidK,
    #[error("the random baseline needs a seed")]
    MissingSeed,
    #[error("case {case}: region {region} has zero area")]
    EmptyRegion { case: String, region: usize },
    #[error("vertex {0} is not visible in any candidate view")]
    Invisible(usize),
    #[error("case {case}: {source}")]
    Tensor {
        case: String,
        #[source]
        source: TensorError,
    },
    #[error("case {case}: {source}")]
    Seg {
        case: String,
        #[source]
        source: SegError,
    },
    #[error(transparent)]
    Match(#[from] MatchError),
}

/// Everything one forward match needs, plus ground truth.
#[derive(Clone)]
pub struct CorrespondenceCase {
    pub name: String,
    pub image: FeatureImage,
    pub part_mask: Mask2D,
    pub object_mask: Mask2D,
    pub vertices: VertexFeatureField,
    pub click: Pixel,
    /// Ground-truth vertices for the click. Empty when the clicked region
    /// has no counterpart on the shape, so every returned vertex is a miss.
    pub gt_part: Vec<usize>,
    pub seg2d: Option<Arc<dyn Seg2DProvider>>,
    /// Annotated regions and whether each has a 3D counterpart.
    pub regions: Vec<(Mask2D, bool)>,
    pub mesh_name: Option<String>,
    pub view: Option<Camera>,
}

impl std::fmt::Debug for CorrespondenceCase {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CorrespondenceCase")
            .field("name", &self.name)
            .field("click", &self.click)
            .field("vertices", &self.vertices.len())
            .field("gt_part", &self.gt_part.len())
            .field("seg2d", &self.seg2d.is_some())
            .field("regions", &self.regions.len())
            .finish()
    }
}

impl CorrespondenceCase {
    /// Loads one manifest entry, including its 2D provider if it names one.
    pub fn load(manifest: &DatasetManifest, entry: &CaseEntry) -> Result<Self, EvalError> {
        let tensor = |source| EvalError::Tensor {
            case: entry.name.clone(),
            source,
        };
        let seg = |source| EvalError::Seg {
            case: entry.name.clone(),
            source,
        };
        let image = FeatureImage::load(manifest.resolve(&entry.image_features)).map_err(tensor)?;
        let part_mask = Mask2D::load(manifest.resolve(&entry.part_mask)).map_err(tensor)?;
        let object_mask = Mask2D::load(manifest.resolve(&entry.object_mask)).map_err(tensor)?;
        let vertices = VertexFeatureField::load(manifest.resolve(&entry.vertex_features)).map_err(tensor)?;
        let seg2d = match &entry.seg2d {
            Some(spec) => {
                let spec: ProviderSpec = spec.parse().map_err(seg)?;
                Some(spec.rebased(&manifest.base_dir).build_seg2d().map_err(seg)?)
            }
            None => None,
        };
        let regions = entry
            .regions
            .iter()
            .map(|r| Ok((Mask2D::load(manifest.resolve(&r.mask)).map_err(tensor)?, r.has_counterpart)))
            .collect::<Result<_, EvalError>>()?;
        Ok(Self {
            name: entry.name.clone(),
            image,
            part_mask,
            object_mask,
            vertices,
            click: entry.click,
            gt_part: entry.gt_part.clone(),
            seg2d,
            regions,
            mesh_name: entry.mesh.file_name().map(|s| s.to_string_lossy().into_owned()),
            view: entry.view,
        })
    }

    pub fn context(&self, k: usize) -> Result<ClickContext<'_>, MatchError> {
        ClickContext::new(
            &self.image,
            self.click,
            &self.part_mask,
            &self.object_mask,
            &self.vertices,
            k,
        )
    }
}

/// Loads every case of a manifest.
pub fn load_cases(manifest: &DatasetManifest) -> Result<Vec<CorrespondenceCase>, EvalError> {
    manifest
        .cases
        .iter()
        .map(|e| CorrespondenceCase::load(manifest, e))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    Bsb,
    Nn,
    Random,
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "bsb" => Ok(Method::Bsb),
            "nn" => Ok(Method::Nn),
            "random" => Ok(Method::Random),
            other => Err(format!("unknown method {other:?} (expected bsb, nn or random)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    Hit,
    Miss,
    NoMatch,
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CaseOutcome {
    pub name: String,
    pub outcome: Outcome,
    pub vertex: Option<usize>,
    pub iou: Option<f32>,
    pub diagnostic: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvalReport {
    pub method: Method,
    pub k: usize,
    pub seed: Option<u64>,
    pub total: usize,
    pub hits: usize,
    pub misses: usize,
    pub no_match: usize,
    pub errors: usize,
    pub success_rate: f64,
    pub cases: Vec<CaseOutcome>,
}

/// Seed for case `i` of a run seeded with `seed` (splitmix64 finalizer).
pub fn case_seed(seed: u64, i: u64) -> u64 {
    let mut z = seed ^ i.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn run_case(case: &CorrespondenceCase, method: Method, k: usize, seed: Option<u64>) -> CaseOutcome {
    let verdict = |v: usize| {
        if case.gt_part.contains(&v) {
            Outcome::Hit
        } else {
            Outcome::Miss
        }
    };
    let res: Result<(Option<usize>, Option<f32>), String> = (|| {
        let ctx = case.context(k).map_err(|e| e.to_string())?;
        match method {
            Method::Bsb => {
                let seg = case.seg2d.as_deref().ok_or("case has no 2D segmentation provider")?;
                let r = bsb_match(&ctx, seg).map_err(|e| e.to_string())?;
                Ok((r.vertex, r.iou))
            }
            Method::Nn => Ok((Some(nn_baseline(&ctx).map_err(|e| e.to_string())?), None)),
            Method::Random => {
                let s = seed.ok_or("random baseline needs a seed")?;
                Ok((Some(random_candidate_baseline(&ctx, s).map_err(|e| e.to_string())?), None))
            }
        }
    })();
    let (outcome, vertex, iou, diagnostic) = match res {
        Ok((Some(v), iou)) => (verdict(v), Some(v), iou, None),
        Ok((None, _)) => (Outcome::NoMatch, None, None, None),
        Err(msg) => (Outcome::Error, None, None, Some(msg)),
    };
    CaseOutcome {
        name: case.name.clone(),
        outcome,
        vertex,
        iou,
        diagnostic,
    }
}

/// Runs `method` on every case. Per-case failures count as misses and keep
/// their diagnostic.
pub fn eval_success_rate(
    cases: &[CorrespondenceCase],
    method: Method,
    k: usize,
    seed: Option<u64>,
) -> Result<EvalReport, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    if k == 0 {
        return Err(EvalError::InvalidK);
    }
    if method == Method::Random && seed.is_none() {
        return Err(EvalError::MissingSeed);
    }
    let outcomes: Vec<CaseOutcome> = cases
        .par_iter()
        .enumerate()
        .map(|(i, c)| run_case(c, method, k, seed.map(|s| case_seed(s, i as u64))))
        .collect();
    let count = |o: Outcome| outcomes.iter().filter(|c| c.outcome == o).count();
    let hits = count(Outcome::Hit);
    Ok(EvalReport {
        method,
        k,
        seed,
        total: outcomes.len(),
        hits,
        misses: outcomes.len() - hits,
        no_match: count(Outcome::NoMatch),
        errors: count(Outcome::Error),
        success_rate: hits as f64 / outcomes.len() as f64,
        cases: outcomes,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationRow {
    pub k: usize,
    pub success_rate: f64,
    pub hits: usize,
    pub no_match: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AblationReport {
    pub total: usize,
    pub rows: Vec<AblationRow>,
    /// Nearest-neighbour baseline on the same cases, for reference.
    pub nn_success_rate: f64,
}

/// Success rate of the matcher for each candidate budget in `ks`.
pub fn ablate_k(cases: &[CorrespondenceCase], ks: &[usize]) -> Result<AblationReport, EvalError> {
    if ks.is_empty() || ks[0] == 0 || ks.windows(2).any(|w| w[0] >= w[1]) {
        return Err(EvalError::BadKs(ks.to_vec()));
    }
    let rows = ks
        .iter()
        .map(|&k| {
            let r = eval_success_rate(cases, Method::Bsb, k, None)?;
            Ok(AblationRow {
                k,
                success_rate: r.success_rate,
                hits: r.hits,
                no_match: r.no_match,
            })
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let nn = eval_success_rate(cases, Method::Nn, 1, None)?;
    Ok(AblationReport {
        total: cases.len(),
        rows,
        nn_success_rate: nn.success_rate,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FidelityStats {
    /// Mean achieved IoU over samples in regions with a 3D counterpart;
    /// absent when there were none.
    pub matched_mean: Option<f64>,
    pub unmatched_mean: Option<f64>,
    pub matched_samples: usize,
    pub unmatched_samples: usize,
}

/// Samples `samples_per_region` pixels uniformly (with replacement) in every
/// annotated region, matches each, and averages the achieved IoU split by
/// the region's counterpart flag. A no-match contributes 0.
pub fn fidelity_iou_stats(
    cases: &[CorrespondenceCase],
    samples_per_region: usize,
    k: usize,
    seed: u64,
) -> Result<FidelityStats, EvalError> {
    if cases.is_empty() {
        return Err(EvalError::EmptyManifest);
    }
    let mut jobs = Vec::new();
    for (ci, case) in cases.iter().enumerate() {
        for (ri, (mask, flag)) in case.regions.iter().enumerate() {
            let pixels: Vec<Pixel> = mask.pixels().collect();
            if pixels.is_empty() {
                return Err(EvalError::EmptyRegion {
                    case: case.name.clone(),
                    region: ri,
                });
            }
            let mut rng = ChaCha8Rng::seed_from_u64(case_seed(case_seed(seed, ci as u64), ri as u64));
            for _ in 0..samples_per_region {
                jobs.push((ci, *flag, pixels[rng.gen_range(0..pixels.len())]));
            }
        }
    }
    let ious = jobs
        .par_iter()
        .map(|&(ci, flag, p)| {
            let case = &cases[ci];
            let seg_err = |source| EvalError::Seg {
                case: case.name.clone(),
                source,
            };
            let seg = case
                .seg2d
                .as_deref()
                .ok_or_else(|| seg_err(SegError::Spec("case has no 2D segmentation provider".into())))?;
            let masks = seg.query(p).map_err(seg_err)?;
            let ctx = ClickContext::new(&case.image, p, &masks.part, &masks.object, &case.vertices, k)?;
            let r = bsb_match(&ctx, seg)?;
            Ok((flag, r.iou.unwrap_or(0.0) as f64))
        })
        .collect::<Result<Vec<_>, EvalError>>()?;
    let mean = |flag: bool| {
        let v: Vec<f64> = ious.iter().filter(|x| x.0 == flag).map(|x| x.1).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(FidelityStats {
        matched_mean: mean(true),
        unmatched_mean: mean(false),
        matched_samples: ious.iter().filter(|x| x.0).count(),
        unmatched_samples: ious.iter().filter(|x| !x.0).count(),
    })
}

/// Per-view inputs of a projected case.
#[derive(Clone)]
pub struct ViewInputs {
    pub image: FeatureImage,
    pub seg2d: Arc<dyn Seg2DProvider>,
}

/// Case whose click is the projection of `vertex` in `camera`.
#[allow(clippy::too_many_arguments)]
pub fn build_projected_click_case(
    name: &str,
    mesh: &Mesh,
    labels: &LabelField3D,
    vertices: &VertexFeatureField,
    camera: &Camera,
    view: &ViewInputs,
    vertex: usize,
) -> Result<CorrespondenceCase, EvalError> {
    let map = render(mesh, camera);
    projected_case(name, &map, labels, vertices, camera, view, vertex)
}

fn projected_case(
    name: &str,
    map: &RenderMap,
    labels: &LabelField3D,
    vertices: &VertexFeatureField,
    camera: &Camera,
    view: &ViewInputs,
    vertex: usize,
) -> Result<CorrespondenceCase, EvalError> {
    let click = map.vertex_pixel(vertex).ok_or(EvalError::Invisible(vertex))?;
    let masks = view.seg2d.query(click).map_err(|source| EvalError::Seg {
        case: name.to_string(),
        source,
    })?;
    Ok(CorrespondenceCase {
        name: name.to_string(),
        image: view.image.clone(),
        part_mask: masks.part,
        object_mask: masks.object,
        vertices: vertices.clone(),
        click,
        gt_part: labels.part(labels.label(vertex)).indices(),
        seg2d: Some(view.seg2d.clone()),
        regions: Vec::new(),
        mesh_name: None,
        view: Some(*camera),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecipeConfig {
    pub vertices: usize,
    pub views_per_vertex: usize,
    pub seed: u64,
}

impl Default for RecipeConfig {
    fn default() -> Self {
        Self {
            vertices: 10,
            views_per_vertex: 2,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct RecipeOutput {
    pub cases: Vec<CorrespondenceCase>,
    /// Sampled vertices visible in no candidate view.
    pub discarded: Vec<usize>,
}

/// Samples vertices, picks up to `views_per_vertex` random views in which
/// each is visible, and emits one projected case per (vertex, view). Inputs
/// for a view are requested at most once.
pub fn projected_click_recipe(
    mesh: &Mesh,
    labels: &LabelField3D,
    vertices: &VertexFeatureField,
    cameras: &[Camera],
    mut view_inputs: impl FnMut(&Camera) -> Result<ViewInputs, EvalError>,
    cfg: RecipeConfig,
) -> Result<RecipeOutput, EvalError> {
    let maps: Vec<RenderMap> = cameras.par_iter().map(|c| render(mesh, c)).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = mesh.vertex_count();
    let mut sampled = index::sample(&mut rng, n, cfg.vertices.min(n)).into_vec();
    sampled.sort_unstable();

    let mut inputs: HashMap<usize, ViewInputs> = HashMap::new();
    let mut out = RecipeOutput {
        cases: Vec::new(),
        discarded: Vec::new(),
    };
    for v in sampled {
        let mut visible: Vec<usize> = (0..cameras.len()).filter(|&c| maps[c].is_visible(v)).collect();
        if visible.is_empty() {
            out.discarded.push(v);
            continue;
        }
        visible.shuffle(&mut rng);
        visible.truncate(cfg.views_per_vertex);
        visible.sort_unstable();
        for c in visible {
            if !inputs.contains_key(&c) {
                inputs.insert(c, view_inputs(&cameras[c])?);
            }
            let name = format!("v{v}-view{c}");
            out.cases
                .push(projected_case(&name, &maps[c], labels, vertices, &cameras[c], &inputs[&c], v)?);
        }
    }
    Ok(out)
}
