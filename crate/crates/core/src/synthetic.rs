//! Planted instances with known answers, used by tests, examples and the
//! committed fixtures.
//!
//! A planted image has up to three labelled regions. Region A (label 1) and
//! region B (label 2) have counterparts on the shape, two disconnected grid
//! patches; region C (label 3) has none. Pixel features are constant per
//! region. Vertex features are the matching region feature tilted away from
//! the image features, so no vertex is an exact nearest neighbour of any
//! pixel. A decoy vertex inside patch B can be planted whose feature is the
//! closest one to region A while its own nearest pixel lies in region B.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::eval::CorrespondenceCase;
use crate::matcher::{ClickContext, MatchError};
use crate::mesh::Mesh;
use crate::raster::{render, Camera};
use crate::segmenters::{LabelField2D, LabelField3D, SyntheticSeg2D, SyntheticSeg3D};
use crate::tensor_io::{
    CaseEntry, FeatureImage, ManifestFile, Mask2D, Pixel, RegionEntry, TensorError, VertexFeatureField,
};

pub const LABEL_A: u32 = 1;
pub const LABEL_B: u32 = 2;
pub const LABEL_C: u32 = 3;

/// Regular icosahedron with circumradius 1.
pub fn icosahedron() -> Mesh {
    let t = (1.0 + 5f32.sqrt()) / 2.0;
    let s = (1.0 + t * t).sqrt();
    let raw = [
        [-1.0, t, 0.0],
        [1.0, t, 0.0],
        [-1.0, -t, 0.0],
        [1.0, -t, 0.0],
        [0.0, -1.0, t],
        [0.0, 1.0, t],
        [0.0, -1.0, -t],
        [0.0, 1.0, -t],
        [t, 0.0, -1.0],
        [t, 0.0, 1.0],
        [-t, 0.0, -1.0],
        [-t, 0.0, 1.0],
    ];
    let vertices = raw.iter().map(|p: &[f32; 3]| [p[0] / s, p[1] / s, p[2] / s]).collect();
    let faces = vec![
        [0, 11, 5],
        [0, 5, 1],
        [0, 1, 7],
        [0, 7, 10],
        [0, 10, 11],
        [1, 5, 9],
        [5, 11, 4],
        [11, 10, 2],
        [10, 7, 6],
        [7, 1, 8],
        [3, 9, 4],
        [3, 4, 2],
        [3, 2, 6],
        [3, 6, 8],
        [3, 8, 9],
        [4, 9, 5],
        [2, 4, 11],
        [6, 2, 10],
        [8, 6, 7],
        [9, 8, 1],
    ];
    Mesh::new(vertices, faces).expect("icosahedron is well formed")
}

/// Appends an `nx × ny` grid of vertices in the plane `z = z0` and its
/// triangles; returns the new vertex indices.
fn push_grid(
    vertices: &mut Vec<[f32; 3]>,
    faces: &mut Vec<[usize; 3]>,
    (nx, ny): (usize, usize),
    (x0, x1): (f32, f32),
    (y0, y1): (f32, f32),
    z0: f32,
) -> Vec<usize> {
    let base = vertices.len();
    for j in 0..ny {
        for i in 0..nx {
            let x = x0 + (x1 - x0) * i as f32 / (nx - 1).max(1) as f32;
            let y = y0 + (y1 - y0) * j as f32 / (ny - 1).max(1) as f32;
            vertices.push([x, y, z0]);
        }
    }
    for j in 0..ny.saturating_sub(1) {
        for i in 0..nx.saturating_sub(1) {
            let a = base + j * nx + i;
            faces.push([a, a + 1, a + nx]);
            faces.push([a + 1, a + nx + 1, a + nx]);
        }
    }
    (base..vertices.len()).collect()
}

/// Random orthonormal `dim × 4` embedding of the 4-dimensional planted
/// feature space.
fn random_embedding(rng: &mut ChaCha8Rng, dim: usize) -> Vec<Vec<f64>> {
    let mut basis: Vec<Vec<f64>> = Vec::with_capacity(4);
    while basis.len() < 4 {
        let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
        for b in &basis {
            let d: f64 = v.iter().zip(b).map(|(x, y)| x * y).sum();
            v.iter_mut().zip(b).for_each(|(x, y)| *x -= d * y);
        }
        let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if n > 1e-3 {
            basis.push(v.into_iter().map(|x| x / n).collect());
        }
    }
    basis
}

#[derive(Debug, Clone)]
pub struct PlantedOptions {
    pub width: usize,
    pub height: usize,
    /// At least 4.
    pub dim: usize,
    /// Plant the decoy vertex in patch B.
    pub decoy: bool,
    /// Paint region C, which has no counterpart on the shape.
    pub missing_region: bool,
    /// Click in region C instead of region A.
    pub click_missing: bool,
    /// Amplitude of uniform noise added to vertex features.
    pub noise: f32,
    pub patch: (usize, usize),
    pub seed: u64,
}

impl Default for PlantedOptions {
    fn default() -> Self {
        Self {
            width: 16,
            height: 12,
            dim: 4,
            decoy: false,
            missing_region: false,
            click_missing: false,
            noise: 0.0,
            patch: (3, 3),
            seed: 0,
        }
    }
}

/// A complete planted correspondence problem.
#[derive(Debug, Clone)]
pub struct PlantedInstance {
    pub image: FeatureImage,
    pub labels: LabelField2D,
    pub mesh: Mesh,
    pub vertices: VertexFeatureField,
    pub vertex_labels: LabelField3D,
    pub click: Pixel,
    /// Ground-truth vertices for the click; empty when the clicked region
    /// has no counterpart.
    pub gt_part: Vec<usize>,
    pub decoy_vertex: Option<usize>,
}

impl PlantedInstance {
    pub fn part_mask(&self) -> Mask2D {
        self.labels.region(self.labels.label(self.click))
    }

    pub fn object_mask(&self) -> Mask2D {
        self.labels.object_mask()
    }

    pub fn seg2d(&self) -> SyntheticSeg2D {
        SyntheticSeg2D::new(self.labels.clone())
    }

    pub fn seg3d(&self) -> SyntheticSeg3D {
        SyntheticSeg3D::new(self.vertex_labels.clone())
    }

    /// Vertices of patch A.
    pub fn part_a(&self) -> Vec<usize> {
        self.vertex_labels.part(LABEL_A).indices()
    }

    pub fn to_case(&self, name: &str) -> CorrespondenceCase {
        CorrespondenceCase {
            name: name.to_string(),
            image: self.image.clone(),
            part_mask: self.part_mask(),
            object_mask: self.object_mask(),
            vertices: self.vertices.clone(),
            click: self.click,
            gt_part: self.gt_part.clone(),
            seg2d: Some(Arc::new(self.seg2d())),
            regions: self.regions(),
            mesh_name: None,
            view: None,
        }
    }

    /// Labelled regions with their counterpart flags.
    pub fn regions(&self) -> Vec<(Mask2D, bool)> {
        [(LABEL_A, true), (LABEL_B, true), (LABEL_C, false)]
            .into_iter()
            .map(|(l, flag)| (self.labels.region(l), flag))
            .filter(|(m, _)| !m.is_empty())
            .collect()
    }

    pub fn with_context<T>(
        &self,
        k: usize,
        f: impl FnOnce(&ClickContext<'_>) -> T,
    ) -> Result<T, MatchError> {
        let part = self.part_mask();
        let object = self.object_mask();
        let ctx = ClickContext::new(&self.image, self.click, &part, &object, &self.vertices, k)?;
        Ok(f(&ctx))
    }
}

/// Builds a planted instance.
///
/// Region A occupies a rectangle in the left half, region B one in the
/// right half, region C (when enabled) a band along the bottom.
pub fn planted_instance(opts: &PlantedOptions) -> PlantedInstance {
    assert!(opts.dim >= 4, "planted features need at least 4 channels");
    assert!(opts.width >= 8 && opts.height >= 6, "planted image too small");
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let (w, h) = (opts.width, opts.height);

    let band = if opts.missing_region { (h / 4).max(2) } else { 0 };
    let top = h - band;
    let ax0 = rng.gen_range(0..w / 4);
    let ax1 = rng.gen_range(w / 4 + 1..=w / 2 - 1);
    let bx0 = rng.gen_range(w / 2 + 1..=w / 2 + w / 4);
    let bx1 = rng.gen_range(bx0 + 1..w);
    let ay0 = rng.gen_range(0..top / 3);
    let ay1 = rng.gen_range(top / 2..top);
    let by0 = rng.gen_range(0..top / 3);
    let by1 = rng.gen_range(top / 2..top);
    let labels = LabelField2D::from_fn(w, h, |x, y| {
        if y >= top {
            LABEL_C
        } else if (ax0..=ax1).contains(&x) && (ay0..=ay1).contains(&y) {
            LABEL_A
        } else if (bx0..=bx1).contains(&x) && (by0..=by1).contains(&y) {
            LABEL_B
        } else {
            0
        }
    });

    let deg = |d: f64| d.to_radians();
    let feat_a = [1.0, 0.0, 0.0, 0.0];
    let feat_b = [deg(60.0).cos(), deg(60.0).sin(), 0.0, 0.0];
    let feat_c = [0.0, 0.0, 0.0, 1.0];
    // Tilt toward the third axis, which no pixel feature uses.
    let tilt = |f: [f64; 4], angle: f64| {
        [f[0] * deg(angle).cos(), f[1] * deg(angle).cos(), deg(angle).sin(), 0.0]
    };
    let vert_a = tilt(feat_a, 50.0);
    let vert_b = tilt(feat_b, 50.0);
    let decoy = [deg(35.0).cos(), deg(35.0).sin(), 0.0, 0.0];

    let embed = random_embedding(&mut rng, opts.dim);
    let lift = |f: &[f64; 4]| -> Vec<f32> {
        (0..opts.dim)
            .map(|c| (0..4).map(|k| f[k] * embed[k][c]).sum::<f64>() as f32)
            .collect()
    };
    let (la, lb, lc) = (lift(&feat_a), lift(&feat_b), lift(&feat_c));
    let image = FeatureImage::from_fn(w, h, opts.dim, |x, y| {
        match labels.label(Pixel::new(x, y)) {
            LABEL_A => la.clone(),
            LABEL_B => lb.clone(),
            LABEL_C => lc.clone(),
            _ => vec![0.0; opts.dim],
        }
    })
    .expect("planted image dims");

    let mut verts = Vec::new();
    let mut faces = Vec::new();
    let patch_a = push_grid(&mut verts, &mut faces, opts.patch, (-0.5, -0.1), (-0.3, 0.3), 0.0);
    let patch_b = push_grid(&mut verts, &mut faces, opts.patch, (0.1, 0.5), (-0.3, 0.3), 0.0);
    let mesh = Mesh::new(verts, faces).expect("planted mesh");
    let n = mesh.vertex_count();

    let decoy_vertex = opts.decoy.then(|| patch_b[rng.gen_range(0..patch_b.len())]);
    let mut rows = Vec::with_capacity(n);
    let mut vlabels = vec![0u32; n];
    for v in 0..n {
        let base = if Some(v) == decoy_vertex {
            decoy
        } else if patch_a.contains(&v) {
            vert_a
        } else {
            vert_b
        };
        let mut f = base;
        for x in f.iter_mut().take(3) {
            *x += rng.gen_range(-1.0..=1.0) * opts.noise as f64;
        }
        rows.push(lift(&f));
        vlabels[v] = if patch_a.contains(&v) { LABEL_A } else { LABEL_B };
    }
    let vertices = VertexFeatureField::from_rows(&rows).expect("planted rows");

    let click_label = if opts.missing_region && opts.click_missing {
        LABEL_C
    } else {
        LABEL_A
    };
    let region: Vec<Pixel> = labels.region(click_label).pixels().collect();
    let click = region[rng.gen_range(0..region.len())];
    let gt_part = if click_label == LABEL_A {
        patch_a.clone()
    } else {
        Vec::new()
    };

    PlantedInstance {
        image,
        labels,
        mesh,
        vertices,
        vertex_labels: LabelField3D::new(vlabels).expect("non-empty"),
        click,
        gt_part,
        decoy_vertex,
    }
}

/// The decoy fixture family: eight instances of varying size, dimension
/// and noise, the even-numbered ones carrying a decoy vertex.
pub fn decoy_family() -> Vec<(String, PlantedInstance)> {
    (0..8u64)
        .map(|i| {
            let opts = PlantedOptions {
                width: 12 + 2 * i as usize,
                height: 10 + i as usize,
                dim: 4 + (i as usize % 5),
                decoy: i % 2 == 0,
                missing_region: i % 3 == 0,
                click_missing: false,
                noise: 0.01,
                patch: (2 + (i as usize % 3), 3),
                seed: 1000 + i,
            };
            (format!("decoy-{i:02}"), planted_instance(&opts))
        })
        .collect()
}

/// Cases whose clicked region has no counterpart on the shape.
pub fn missing_part_family() -> Vec<(String, PlantedInstance)> {
    (0..4u64)
        .map(|i| {
            let opts = PlantedOptions {
                width: 16,
                height: 12,
                dim: 4 + i as usize,
                missing_region: true,
                click_missing: true,
                noise: 0.01,
                seed: 2000 + i,
                ..PlantedOptions::default()
            };
            (format!("missing-{i:02}"), planted_instance(&opts))
        })
        .collect()
}

/// Writes instances as a dataset manifest plus the containers it references
/// and returns the manifest path.
pub fn write_manifest(dir: &Path, cases: &[(String, PlantedInstance)]) -> Result<PathBuf, TensorError> {
    std::fs::create_dir_all(dir)?;
    let mut entries = Vec::with_capacity(cases.len());
    for (name, inst) in cases {
        let file = |suffix: &str| PathBuf::from(format!("{name}.{suffix}"));
        inst.image.save(dir.join(file("image.bsbt")))?;
        inst.part_mask().save(dir.join(file("part.bsbt")))?;
        inst.object_mask().save(dir.join(file("object.bsbt")))?;
        inst.vertices.save(dir.join(file("vertices.bsbt")))?;
        inst.labels.save(dir.join(file("labels.bsbt")))?;
        inst.vertex_labels.save(dir.join(file("vlabels.bsbt")))?;
        std::fs::write(dir.join(file("obj")), inst.mesh.to_obj())?;
        let mut regions = Vec::new();
        for (i, (mask, flag)) in inst.regions().into_iter().enumerate() {
            let p = file(&format!("region{i}.bsbt"));
            mask.save(dir.join(&p))?;
            regions.push(RegionEntry {
                mask: p,
                has_counterpart: flag,
            });
        }
        let case = inst.to_case(name);
        entries.push(CaseEntry {
            name: name.clone(),
            image_features: file("image.bsbt"),
            part_mask: file("part.bsbt"),
            object_mask: file("object.bsbt"),
            vertex_features: file("vertices.bsbt"),
            mesh: file("obj"),
            click: inst.click,
            gt_part: case.gt_part,
            seg2d: Some(format!("synthetic:{name}.labels.bsbt")),
            regions,
            view: None,
        });
    }
    let path = dir.join("manifest.json");
    let json = serde_json::to_string_pretty(&ManifestFile { cases: entries })
        .map_err(|e| TensorError::Io(e.into()))?;
    std::fs::write(&path, json + "\n")?;
    Ok(path)
}

/// Renders `field` from `camera`: each covered pixel carries the feature of
/// its attributed vertex, background pixels are zero.
pub fn render_vertex_features(mesh: &Mesh, camera: &Camera, field: &VertexFeatureField) -> FeatureImage {
    let map = render(mesh, camera);
    let d = field.dim();
    FeatureImage::from_fn(camera.width, camera.height, d, |x, y| match map.vertex_at(Pixel::new(x, y)) {
        Some(v) => field.feature(v).to_vec(),
        None => vec![0.0; d],
    })
    .expect("render dims")
}

/// Renders vertex labels to pixel labels, shifted by one so that 0 stays
/// background.
pub fn render_labels(mesh: &Mesh, camera: &Camera, labels: &LabelField3D) -> LabelField2D {
    let map = render(mesh, camera);
    LabelField2D::from_fn(camera.width, camera.height, |x, y| {
        map.vertex_at(Pixel::new(x, y)).map_or(0, |v| labels.label(v) + 1)
    })
}
