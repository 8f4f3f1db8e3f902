#![allow(dead_code)]

use bsb::matcher::MatchResult;
use bsb::mesh::Mesh;
use bsb::segmenters::{Capabilities, LabelField2D, MaskPair, Seg2DProvider, SegError};
use bsb::raster::{render, sample_views, Camera};
use bsb::tensor_io::{FeatureImage, Mask2D, Pixel, VertexFeatureField};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Part masks are the clicked label's region clipped to a disk whose radius
/// depends on the clicked pixel, so different pixels of one region get
/// different masks and IoUs vary.
pub struct DiskSeg {
    pub labels: LabelField2D,
    pub radii: Vec<f32>,
}

impl DiskSeg {
    pub fn new(labels: LabelField2D, rng: &mut ChaCha8Rng, quantized: bool) -> Self {
        let n = labels.width() * labels.height();
        let radii = (0..n)
            .map(|_| {
                if quantized {
                    [2.0f32, 4.0, 100.0][rng.gen_range(0..3)]
                } else {
                    rng.gen_range(1.0f32..12.0)
                }
            })
            .collect();
        Self { labels, radii }
    }
}

impl Seg2DProvider for DiskSeg {
    fn dims(&self) -> (usize, usize) {
        (self.labels.width(), self.labels.height())
    }

    fn query(&self, p: Pixel) -> Result<MaskPair, SegError> {
        let (w, h) = self.dims();
        if p.x >= w || p.y >= h {
            return Err(SegError::OutOfBounds {
                pixel: p,
                width: w,
                height: h,
            });
        }
        let label = self.labels.label(p);
        if label == 0 {
            return Err(SegError::Background(p));
        }
        let r = self.radii[p.y * w + p.x];
        let part = Mask2D::from_fn(w, h, |x, y| {
            let (dx, dy) = (x as f32 - p.x as f32, y as f32 - p.y as f32);
            self.labels.label(Pixel::new(x, y)) == label && dx * dx + dy * dy <= r * r
        });
        Ok(MaskPair {
            object: self.labels.object_mask(),
            part,
        })
    }

    fn capabilities(&self) -> Capabilities {
        Capabilities::default()
    }
}

pub struct RandomInstance {
    pub image: FeatureImage,
    pub vertices: VertexFeatureField,
    pub seg: DiskSeg,
    pub click: Pixel,
    pub part: Mask2D,
    pub object: Mask2D,
}

/// Random labels from a few Voronoi sites, random or quantized features, a
/// click on a foreground pixel with a non-zero feature.
pub fn random_instance(seed: u64, quantized: bool) -> RandomInstance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = rng.gen_range(4..=32);
    let h = rng.gen_range(4..=32);
    let d = rng.gen_range(1..=8);
    let n = rng.gen_range(1..=64);
    let sites: Vec<(f32, f32, u32)> = (0..rng.gen_range(2..=6))
        .map(|i| (rng.gen_range(0.0..w as f32), rng.gen_range(0.0..h as f32), i as u32))
        .collect();
    // Label 0 (background) is one of the sites, so some pixels are background.
    let labels = LabelField2D::from_fn(w, h, |x, y| {
        sites
            .iter()
            .min_by(|a, b| {
                let da = (a.0 - x as f32).powi(2) + (a.1 - y as f32).powi(2);
                let db = (b.0 - x as f32).powi(2) + (b.1 - y as f32).powi(2);
                da.total_cmp(&db).then(a.2.cmp(&b.2))
            })
            .map(|s| s.2)
            .unwrap()
    });
    let sample = |rng: &mut ChaCha8Rng| -> f32 {
        if quantized {
            rng.gen_range(-1i32..=1) as f32
        } else {
            rng.gen_range(-1.0f32..1.0)
        }
    };
    let image_data: Vec<f32> = (0..w * h * d).map(|_| sample(&mut rng)).collect();
    let mut image = FeatureImage::new(w, h, d, image_data).unwrap();
    let mut vdata: Vec<f32> = (0..n * d).map(|_| sample(&mut rng)).collect();
    // Some vertices are invalid (zero rows).
    for v in 0..n {
        if rng.gen_bool(0.1) {
            vdata[v * d..(v + 1) * d].fill(0.0);
        }
    }
    if vdata.iter().all(|&x| x == 0.0) {
        vdata[0] = 1.0;
    }
    let vertices = VertexFeatureField::from_data(d, vdata).unwrap();

    let mut labels = labels;
    if labels.object_mask().is_empty() {
        labels = LabelField2D::from_fn(w, h, |_, _| 1);
    }
    let fg: Vec<Pixel> = labels.object_mask().pixels().collect();
    let click = fg[rng.gen_range(0..fg.len())];
    if image.feature(click).iter().all(|&x| x == 0.0) {
        let mut data = image.data().to_vec();
        data[(click.y * w + click.x) * d] = 1.0;
        image = FeatureImage::new(w, h, d, data).unwrap();
    }
    let seg = DiskSeg::new(labels, &mut rng, quantized);
    let pair = seg.query(click).unwrap();
    RandomInstance {
        image,
        vertices,
        seg,
        click,
        part: pair.part,
        object: pair.object,
    }
}

fn cos(a: &[f32], b: &[f32]) -> Option<f32> {
    let mut dot = 0f64;
    let mut na = 0f64;
    let mut nb = 0f64;
    for i in 0..a.len() {
        dot += a[i] as f64 * b[i] as f64;
        na += a[i] as f64 * a[i] as f64;
        nb += b[i] as f64 * b[i] as f64;
    }
    if na == 0.0 || nb == 0.0 {
        return None;
    }
    Some(((dot / (na.sqrt() * nb.sqrt())) as f32).clamp(-1.0, 1.0))
}

pub fn iou_by_counting(a: &Mask2D, b: &Mask2D) -> f32 {
    let mut inter = 0u64;
    let mut union = 0u64;
    for y in 0..a.height() {
        for x in 0..a.width() {
            let p = Pixel::new(x, y);
            let (ia, ib) = (a.contains(p), b.contains(p));
            inter += (ia && ib) as u64;
            union += (ia || ib) as u64;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f32 / union as f32
    }
}

/// Most similar object pixel to `f` by exhaustive row-major scan.
pub fn brute_nearest_pixel(image: &FeatureImage, object: &Mask2D, f: &[f32]) -> Option<Pixel> {
    let mut best: Option<(Pixel, f32)> = None;
    for y in 0..image.height() {
        for x in 0..image.width() {
            let p = Pixel::new(x, y);
            if !object.contains(p) {
                continue;
            }
            if let Some(s) = cos(f, image.feature(p)) {
                if best.is_none_or(|(_, b)| s > b) {
                    best = Some((p, s));
                }
            }
        }
    }
    best.map(|b| b.0)
}

/// Candidate order: similarity descending, index ascending.
pub fn brute_candidates(image: &FeatureImage, click: Pixel, vertices: &VertexFeatureField, k: usize) -> Vec<usize> {
    let q = image.feature(click);
    let mut scored: Vec<(usize, f32)> = Vec::new();
    for v in 0..vertices.len() {
        if !vertices.is_valid(v) {
            continue;
        }
        if let Some(s) = cos(q, vertices.feature(v)) {
            scored.push((v, s));
        }
    }
    // Insertion sort keeps this independent of the library's sort.
    let mut ordered: Vec<(usize, f32)> = Vec::new();
    for c in scored {
        let pos = ordered
            .iter()
            .position(|o| c.1 > o.1 || (c.1 == o.1 && c.0 < o.0))
            .unwrap_or(ordered.len());
        ordered.insert(pos, c);
    }
    ordered.into_iter().take(k).map(|c| c.0).collect()
}

/// Exhaustive forward matcher: (vertex, pixel, iou) or none.
pub fn brute_match(inst: &RandomInstance, k: usize) -> Option<(usize, Pixel, f32)> {
    let mut best: Option<(usize, Pixel, f32)> = None;
    for v in brute_candidates(&inst.image, inst.click, &inst.vertices, k) {
        let q = brute_nearest_pixel(&inst.image, &inst.object, inst.vertices.feature(v)).unwrap();
        if !inst.part.contains(q) {
            continue;
        }
        let m = inst.seg.query(q).unwrap().part;
        let iou = iou_by_counting(&inst.part, &m);
        if iou > best.map_or(0.0, |b| b.2) {
            best = Some((v, q, iou));
        }
    }
    best
}

pub fn summary(r: &MatchResult) -> Option<(usize, Pixel, f32)> {
    r.vertex.map(|v| (v, r.pixel.unwrap(), r.iou.unwrap()))
}

/// Icosphere with `levels` rounds of midpoint subdivision.
pub fn icosphere(levels: usize) -> Mesh {
    let base = bsb::synthetic::icosahedron();
    let mut verts: Vec<[f32; 3]> = base.vertices().to_vec();
    let mut faces: Vec<[usize; 3]> = base.faces().to_vec();
    for _ in 0..levels {
        let mut mid = std::collections::HashMap::new();
        let mut next = Vec::new();
        for f in &faces {
            let mut m = [0usize; 3];
            for i in 0..3 {
                let (a, b) = (f[i].min(f[(i + 1) % 3]), f[i].max(f[(i + 1) % 3]));
                m[i] = *mid.entry((a, b)).or_insert_with(|| {
                    let (pa, pb) = (verts[a], verts[b]);
                    let c = [(pa[0] + pb[0]) / 2.0, (pa[1] + pb[1]) / 2.0, (pa[2] + pb[2]) / 2.0];
                    let n = (c[0] * c[0] + c[1] * c[1] + c[2] * c[2]).sqrt();
                    verts.push([c[0] / n, c[1] / n, c[2] / n]);
                    verts.len() - 1
                });
            }
            next.push([f[0], m[0], m[2]]);
            next.push([f[1], m[1], m[0]]);
            next.push([f[2], m[2], m[1]]);
            next.push([m[0], m[1], m[2]]);
        }
        faces = next;
    }
    Mesh::new(verts, faces).unwrap()
}

/// Scales every vertex of `mesh` by `s` and offsets it by `t`.
pub fn transformed(mesh: &Mesh, s: [f32; 3], t: [f32; 3]) -> (Vec<[f32; 3]>, Vec<[usize; 3]>) {
    let v = mesh
        .vertices()
        .iter()
        .map(|p| [p[0] * s[0] + t[0], p[1] * s[1] + t[1], p[2] * s[2] + t[2]])
        .collect();
    (v, mesh.faces().to_vec())
}

/// Ten small test meshes with self-occlusion of various kinds.
pub fn test_meshes() -> Vec<(String, Mesh)> {
    let mut out = Vec::new();
    let ico = bsb::synthetic::icosahedron();
    let (v, f) = transformed(&ico, [0.6; 3], [0.0; 3]);
    out.push(("icosahedron".to_string(), Mesh::new(v, f).unwrap()));
    let (v, f) = transformed(&icosphere(1), [0.6; 3], [0.0; 3]);
    out.push(("icosphere1".to_string(), Mesh::new(v, f).unwrap()));
    let (v, f) = transformed(&icosphere(2), [0.5, 0.7, 0.4], [0.0; 3]);
    out.push(("ellipsoid2".to_string(), Mesh::new(v, f).unwrap()));

    // Bumpy sphere: radial noise makes it non-convex.
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let s = icosphere(2);
    let v: Vec<[f32; 3]> = s
        .vertices()
        .iter()
        .map(|p| {
            let r = rng.gen_range(0.45f32..0.65);
            [p[0] * r, p[1] * r, p[2] * r]
        })
        .collect();
    out.push(("bumpy".to_string(), Mesh::new(v, s.faces().to_vec()).unwrap()));

    // Two spheres, one partly behind the other.
    let a = icosphere(1);
    let (mut v, mut f) = transformed(&a, [0.3; 3], [-0.2, 0.0, 0.2]);
    let (v2, f2) = transformed(&a, [0.35; 3], [0.25, 0.1, -0.2]);
    let off = v.len();
    v.extend(v2);
    f.extend(f2.into_iter().map(|t| [t[0] + off, t[1] + off, t[2] + off]));
    out.push(("two-spheres".to_string(), Mesh::new(v, f).unwrap()));

    // Torus.
    let (nu, nv) = (16, 8);
    let mut v = Vec::new();
    let mut f = Vec::new();
    for i in 0..nu {
        for j in 0..nv {
            let (u, w) = (
                i as f32 / nu as f32 * std::f32::consts::TAU,
                j as f32 / nv as f32 * std::f32::consts::TAU,
            );
            let r = 0.45 + 0.18 * w.cos();
            v.push([r * u.cos(), 0.18 * w.sin(), r * u.sin()]);
            let a = i * nv + j;
            let b = ((i + 1) % nu) * nv + j;
            let c = ((i + 1) % nu) * nv + (j + 1) % nv;
            let d = i * nv + (j + 1) % nv;
            f.push([a, b, c]);
            f.push([a, c, d]);
        }
    }
    out.push(("torus".to_string(), Mesh::new(v, f).unwrap()));

    // Stacked parallel grids.
    let mut v = Vec::new();
    let mut f = Vec::new();
    for (layer, z) in [(0usize, 0.3f32), (1, -0.1), (2, -0.4)] {
        let base = v.len();
        let n = 5;
        for j in 0..n {
            for i in 0..n {
                let s = 0.6 - 0.1 * layer as f32;
                v.push([
                    -s + 2.0 * s * i as f32 / (n - 1) as f32,
                    -s + 2.0 * s * j as f32 / (n - 1) as f32,
                    z,
                ]);
            }
        }
        for j in 0..n - 1 {
            for i in 0..n - 1 {
                let a = base + j * n + i;
                f.push([a, a + 1, a + n]);
                f.push([a + 1, a + n + 1, a + n]);
            }
        }
    }
    out.push(("stacked-grids".to_string(), Mesh::new(v, f).unwrap()));

    // Open box (no lid) seen from many sides.
    let c = [
        [-0.4, -0.4, -0.4],
        [0.4, -0.4, -0.4],
        [0.4, 0.4, -0.4],
        [-0.4, 0.4, -0.4],
        [-0.4, -0.4, 0.4],
        [0.4, -0.4, 0.4],
        [0.4, 0.4, 0.4],
        [-0.4, 0.4, 0.4],
        [0.0, 0.0, 0.0],
    ];
    let f = vec![
        [0, 1, 2],
        [0, 2, 3],
        [4, 6, 5],
        [4, 7, 6],
        [0, 4, 5],
        [0, 5, 1],
        [1, 5, 6],
        [1, 6, 2],
        [0, 3, 7],
        [0, 7, 4],
        [8, 0, 1],
    ];
    out.push(("open-box".to_string(), Mesh::new(c.to_vec(), f).unwrap()));

    // Random triangle soup.
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut v = Vec::new();
    let mut f = Vec::new();
    for t in 0..20 {
        let c = [rng.gen_range(-0.5f32..0.5), rng.gen_range(-0.5f32..0.5), rng.gen_range(-0.5f32..0.5)];
        for _ in 0..3 {
            v.push([
                c[0] + rng.gen_range(-0.2f32..0.2),
                c[1] + rng.gen_range(-0.2f32..0.2),
                c[2] + rng.gen_range(-0.2f32..0.2),
            ]);
        }
        f.push([3 * t, 3 * t + 1, 3 * t + 2]);
    }
    out.push(("soup".to_string(), Mesh::new(v, f).unwrap()));

    let (v, f) = transformed(&icosphere(3), [0.7, 0.3, 0.5], [0.0, 0.1, 0.0]);
    out.push(("flat-ellipsoid3".to_string(), Mesh::new(v, f).unwrap()));
    out
}

fn cross(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Möller–Trumbore: distance along `dir` to the triangle, if hit.
pub fn ray_triangle(orig: [f64; 3], dir: [f64; 3], tri: [[f64; 3]; 3]) -> Option<f64> {
    let sub = |a: [f64; 3], b: [f64; 3]| [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    let dot = |a: [f64; 3], b: [f64; 3]| a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
    let e1 = sub(tri[1], tri[0]);
    let e2 = sub(tri[2], tri[0]);
    let pv = cross(dir, e2);
    let det = dot(e1, pv);
    if det.abs() < 1e-12 {
        return None;
    }
    let inv = 1.0 / det;
    let tv = sub(orig, tri[0]);
    let u = dot(tv, pv) * inv;
    if !(0.0..=1.0).contains(&u) {
        return None;
    }
    let qv = cross(tv, e1);
    let v = dot(dir, qv) * inv;
    if v < 0.0 || u + v > 1.0 {
        return None;
    }
    Some(dot(e2, qv) * inv)
}

/// Vertices that project within a pixel of the image and whose line of
/// sight from the eye is blocked by no triangle closer than `eps` to the
/// vertex. Pixel centers sit at integer coordinates, so a corner just past
/// the last center still owns the edge pixels of its faces.
pub fn ray_cast_visible(mesh: &Mesh, cam: &Camera, eps: f64) -> Vec<bool> {
    let (e, a, r) = (
        (cam.elevation as f64).to_radians(),
        (cam.azimuth as f64).to_radians(),
        cam.radius as f64,
    );
    let eye = [r * e.cos() * a.sin(), r * e.sin(), r * e.cos() * a.cos()];
    let pos = |v: usize| {
        let p = mesh.vertices()[v];
        [p[0] as f64, p[1] as f64, p[2] as f64]
    };
    (0..mesh.vertex_count())
        .map(|v| {
            let Ok(pr) = cam.project(mesh.vertices()[v]) else { return false };
            let (x, y) = (pr.x as f64, pr.y as f64);
            if x < -1.0 || y < -1.0 || x > cam.width as f64 || y > cam.height as f64 {
                return false;
            }
            let p = pos(v);
            let dir = [p[0] - eye[0], p[1] - eye[1], p[2] - eye[2]];
            let len = (dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]).sqrt();
            let dir = [dir[0] / len, dir[1] / len, dir[2] / len];
            !mesh.faces().iter().any(|f| {
                if f.contains(&v) {
                    return false;
                }
                ray_triangle(eye, dir, [pos(f[0]), pos(f[1]), pos(f[2])]).is_some_and(|t| t > 0.0 && t < len - eps)
            })
        })
        .collect()
}

/// Per-view disagreement counts against the ray-cast oracle, per mesh.
pub fn ray_cast_disagreements() -> Vec<(String, Vec<usize>)> {
    let cams = sample_views(12, 2024);
    test_meshes()
        .into_iter()
        .map(|(name, mesh)| {
            let counts = cams
                .iter()
                .map(|cam| {
                    let map = render(&mesh, cam);
                    let oracle = ray_cast_visible(&mesh, cam, 1e-3 * cam.radius as f64);
                    (0..mesh.vertex_count()).filter(|&v| map.is_visible(v) != oracle[v]).count()
                })
                .collect();
            (name, counts)
        })
        .collect()
}

pub fn noise_image(cam: &Camera, dim: usize, rng: &mut ChaCha8Rng) -> FeatureImage {
    let data = (0..cam.width * cam.height * dim).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
    FeatureImage::new(cam.width, cam.height, dim, data).unwrap()
}

pub fn views_for(cams: &[Camera], dim: usize, seed: u64) -> Vec<(Camera, FeatureImage)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    cams.iter().map(|c| (*c, noise_image(c, dim, &mut rng))).collect()
}

pub fn small(cams: Vec<Camera>) -> Vec<Camera> {
    cams.into_iter().map(|c| c.with_size(64, 48)).collect()
}

/// Pixel contributions per vertex, straight from the render maps.
pub fn contributions(mesh: &Mesh, views: &[(Camera, FeatureImage)]) -> Vec<Vec<Vec<f32>>> {
    let mut out = vec![Vec::new(); mesh.vertex_count()];
    for (cam, img) in views {
        let map = render(mesh, cam);
        for (v, slot) in out.iter_mut().enumerate() {
            let Some(p) = map.vertex_pixel(v) else { continue };
            if map.is_visible(v) && map.vertex_of_pixel()[p.y * cam.width + p.x].is_some() {
                slot.push(img.feature(p).to_vec());
            }
        }
    }
    out
}
