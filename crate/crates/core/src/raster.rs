//! Deterministic z-buffer rasterization with per-pixel vertex attribution.
//!
//! Cameras orbit the origin on a sphere and look at it. Pixel `(i, j)` has
//! its center at continuous coordinate `(i, j)`, so a projected point maps to
//! the pixel `(round(x), round(y))`.

use std::io::Write;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::mesh::Mesh;
use crate::tensor_io::Pixel;

pub const DEFAULT_RADIUS: f32 = 2.0;
pub const DEFAULT_FOV: f32 = 60.0;
pub const DEFAULT_SIZE: usize = 224;

/// Elevations of the standard evaluation grid, in degrees.
pub const GRID_ELEVATIONS: [f32; 5] = [-60.0, -30.0, 0.0, 30.0, 60.0];

/// Above this |elevation| the up vector switches from +Y to +X.
const POLE_ELEVATION: f32 = 89.0;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum RasterError {
    #[error("invalid camera: {0}")]
    InvalidCamera(String),
    #[error("point is behind the camera (depth {0})")]
    BehindCamera(f32),
    #[error("pixel {pixel} outside {width}x{height}")]
    OutOfBounds {
        pixel: Pixel,
        width: usize,
        height: usize,
    },
}

fn default_radius() -> f32 {
    DEFAULT_RADIUS
}
fn default_fov() -> f32 {
    DEFAULT_FOV
}
fn default_size() -> usize {
    DEFAULT_SIZE
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Camera {
    /// Degrees above the XZ plane.
    pub elevation: f32,
    /// Degrees around +Y, 0 looking down −Z from +Z.
    pub azimuth: f32,
    #[serde(default = "default_radius")]
    pub radius: f32,
    /// Vertical field of view in degrees.
    #[serde(default = "default_fov")]
    pub fov: f32,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
}

impl Default for Camera {
    fn default() -> Self {
        Self::orbit(0.0, 0.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    pub x: f32,
    pub y: f32,
    pub depth: f32,
}

impl Projection {
    /// Nearest pixel, possibly outside the image.
    pub fn pixel(&self) -> (i64, i64) {
        (self.x.round() as i64, self.y.round() as i64)
    }
}

type Vec3 = [f64; 3];

fn sub(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}
fn dot(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}
fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}
fn normalize(a: Vec3) -> Vec3 {
    let n = dot(a, a).sqrt();
    [a[0] / n, a[1] / n, a[2] / n]
}

/// Orthonormal camera frame.
#[derive(Debug, Clone, Copy)]
pub struct CameraFrame {
    pub eye: [f64; 3],
    pub right: [f64; 3],
    pub up: [f64; 3],
    pub forward: [f64; 3],
    pub focal: f64,
}

impl Camera {
    /// Default radius, fov and size at the given angles.
    pub fn orbit(elevation: f32, azimuth: f32) -> Self {
        Self {
            elevation,
            azimuth,
            radius: DEFAULT_RADIUS,
            fov: DEFAULT_FOV,
            width: DEFAULT_SIZE,
            height: DEFAULT_SIZE,
        }
    }

    pub fn with_size(mut self, width: usize, height: usize) -> Self {
        self.width = width;
        self.height = height;
        self
    }

    pub fn validate(&self) -> Result<(), RasterError> {
        if !(self.radius > 0.0 && self.radius.is_finite()) {
            return Err(RasterError::InvalidCamera(format!("radius {}", self.radius)));
        }
        if !(self.fov > 0.0 && self.fov < 180.0) {
            return Err(RasterError::InvalidCamera(format!("fov {}", self.fov)));
        }
        if self.width == 0 || self.height == 0 {
            return Err(RasterError::InvalidCamera("zero image size".into()));
        }
        if !self.elevation.is_finite() || !self.azimuth.is_finite() {
            return Err(RasterError::InvalidCamera("non-finite angle".into()));
        }
        Ok(())
    }

    pub fn frame(&self) -> CameraFrame {
        let el = (self.elevation as f64).to_radians();
        let az = (self.azimuth as f64).to_radians();
        let r = self.radius as f64;
        let eye = [r * el.cos() * az.sin(), r * el.sin(), r * el.cos() * az.cos()];
        let forward = normalize([-eye[0], -eye[1], -eye[2]]);
        let world_up = if self.elevation.abs() >= POLE_ELEVATION {
            [1.0, 0.0, 0.0]
        } else {
            [0.0, 1.0, 0.0]
        };
        let right = normalize(cross(forward, world_up));
        let up = cross(right, forward);
        let focal = (self.height as f64 / 2.0) / ((self.fov as f64).to_radians() * 0.5).tan();
        CameraFrame {
            eye,
            right,
            up,
            forward,
            focal,
        }
    }

    /// Pinhole projection to continuous pixel coordinates; `depth` is the
    /// distance along the view axis.
    pub fn project(&self, p: [f32; 3]) -> Result<Projection, RasterError> {
        let frame = self.frame();
        let (u, v, z) = frame.project_f64(p);
        if z <= 0.0 {
            return Err(RasterError::BehindCamera(z as f32));
        }
        Ok(Projection {
            x: (self.width as f64 / 2.0 + frame.focal * u) as f32,
            y: (self.height as f64 / 2.0 - frame.focal * v) as f32,
            depth: z as f32,
        })
    }
}

impl CameraFrame {
    fn project_f64(&self, p: [f32; 3]) -> (f64, f64, f64) {
        let rel = sub([p[0] as f64, p[1] as f64, p[2] as f64], self.eye);
        let xc = dot(rel, self.right);
        let yc = dot(rel, self.up);
        let zc = dot(rel, self.forward);
        (xc / zc, yc / zc, zc)
    }
}

pub fn project_vertex(camera: &Camera, p: [f32; 3]) -> Result<Projection, RasterError> {
    camera.project(p)
}

/// Per-pixel attribution and per-vertex visibility of one rendered view.
#[derive(Debug, Clone, PartialEq)]
pub struct RenderMap {
    width: usize,
    height: usize,
    vertex_of_pixel: Vec<Option<u32>>,
    depth: Vec<f32>,
    visible: Vec<bool>,
    vertex_pixel: Vec<Option<Pixel>>,
}

impl RenderMap {
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    /// `+inf` on background pixels.
    pub fn depth(&self) -> &[f32] {
        &self.depth
    }

    pub fn vertex_of_pixel(&self) -> &[Option<u32>] {
        &self.vertex_of_pixel
    }

    pub fn visible(&self) -> &[bool] {
        &self.visible
    }

    pub fn is_visible(&self, v: usize) -> bool {
        self.visible[v]
    }

    /// The in-bounds pixel nearest to `v`'s projection, if any.
    pub fn vertex_pixel(&self, v: usize) -> Option<Pixel> {
        self.vertex_pixel[v]
    }

    pub fn visible_count(&self) -> usize {
        self.visible.iter().filter(|&&b| b).count()
    }

    pub fn vertex_at(&self, p: Pixel) -> Option<usize> {
        if p.x < self.width && p.y < self.height {
            self.vertex_of_pixel[p.y * self.width + p.x].map(|v| v as usize)
        } else {
            None
        }
    }

    pub fn foreground(&self) -> impl Iterator<Item = (Pixel, usize)> + '_ {
        let w = self.width;
        self.vertex_of_pixel
            .iter()
            .enumerate()
            .filter_map(move |(i, v)| v.map(|v| (Pixel::new(i % w, i / w), v as usize)))
    }

    pub fn write_depth_pgm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let (lo, hi) = self
            .depth
            .iter()
            .filter(|d| d.is_finite())
            .fold((f32::INFINITY, f32::NEG_INFINITY), |(lo, hi), &d| (lo.min(d), hi.max(d)));
        let span = (hi - lo).max(1e-6);
        let pixels: Vec<u8> = self
            .depth
            .iter()
            .map(|&d| {
                if d.is_finite() {
                    (255.0 - 200.0 * (d - lo) / span).round() as u8
                } else {
                    0
                }
            })
            .collect();
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P5\n{} {}\n255\n", self.width, self.height)?;
        f.write_all(&pixels)?;
        f.flush()
    }

    /// Vertex ids hashed to colors; background black.
    pub fn write_vertex_id_ppm(&self, path: impl AsRef<Path>) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        write!(f, "P6\n{} {}\n255\n", self.width, self.height)?;
        for v in &self.vertex_of_pixel {
            let rgb = match v {
                Some(v) => {
                    let h = v.wrapping_mul(2654435761);
                    [(h >> 24) as u8 | 0x40, (h >> 16) as u8 | 0x40, (h >> 8) as u8 | 0x40]
                }
                None => [0, 0, 0],
            };
            f.write_all(&rgb)?;
        }
        f.flush()
    }
}

const INSIDE_TOL: f64 = 1e-9;

/// Z-buffer rasterization of `mesh` from `camera`.
///
/// Pixels whose center lies inside a triangle (edges inclusive) are covered;
/// nearer fragments win and equal-depth ties keep the earlier face. Each
/// covered pixel is attributed to the triangle corner with the largest
/// screen-space barycentric weight, ties to the lower vertex index.
///
/// A vertex is visible when some pixel is attributed to it, or when its
/// rounded projection lands on a covered pixel that is either won by one of
/// its own faces or whose depth is within `1e-3 × radius` of the vertex.
pub fn render(mesh: &Mesh, camera: &Camera) -> RenderMap {
    let (w, h) = (camera.width, camera.height);
    let frame = camera.frame();
    let cx = w as f64 / 2.0;
    let cy = h as f64 / 2.0;
    let screen: Vec<Option<[f64; 3]>> = mesh
        .vertices()
        .iter()
        .map(|&p| {
            let (u, v, z) = frame.project_f64(p);
            (z > 0.0).then(|| [cx + frame.focal * u, cy - frame.focal * v, z])
        })
        .collect();

    let mut depth = vec![f32::INFINITY; w * h];
    let mut zbuf = vec![f64::INFINITY; w * h];
    let mut vertex_of_pixel: Vec<Option<u32>> = vec![None; w * h];
    let mut face_of_pixel: Vec<Option<usize>> = vec![None; w * h];

    for (fi, face) in mesh.faces().iter().enumerate() {
        let (Some(a), Some(b), Some(c)) = (screen[face[0]], screen[face[1]], screen[face[2]]) else {
            continue;
        };
        let area = (b[0] - a[0]) * (c[1] - a[1]) - (c[0] - a[0]) * (b[1] - a[1]);
        if area.abs() < 1e-12 {
            continue;
        }
        let min_x = a[0].min(b[0]).min(c[0]).ceil().max(0.0);
        let max_x = a[0].max(b[0]).max(c[0]).floor().min(w as f64 - 1.0);
        let min_y = a[1].min(b[1]).min(c[1]).ceil().max(0.0);
        let max_y = a[1].max(b[1]).max(c[1]).floor().min(h as f64 - 1.0);
        if min_x > max_x || min_y > max_y {
            continue;
        }
        for py in min_y as usize..=max_y as usize {
            for px in min_x as usize..=max_x as usize {
                let (x, y) = (px as f64, py as f64);
                let w0 = ((b[0] - x) * (c[1] - y) - (c[0] - x) * (b[1] - y)) / area;
                let w1 = ((c[0] - x) * (a[1] - y) - (a[0] - x) * (c[1] - y)) / area;
                let w2 = 1.0 - w0 - w1;
                // Centers exactly on a shared edge must not fall through the
                // crack when rounding pushes both weights slightly negative.
                if w0 < -INSIDE_TOL || w1 < -INSIDE_TOL || w2 < -INSIDE_TOL {
                    continue;
                }
                let z = 1.0 / (w0 / a[2] + w1 / b[2] + w2 / c[2]);
                let idx = py * w + px;
                if z < zbuf[idx] {
                    zbuf[idx] = z;
                    depth[idx] = z as f32;
                    face_of_pixel[idx] = Some(fi);
                    let weights = [(w0, face[0]), (w1, face[1]), (w2, face[2])];
                    let best = weights
                        .iter()
                        .copied()
                        .reduce(|best, cand| {
                            if cand.0 > best.0 || (cand.0 == best.0 && cand.1 < best.1) {
                                cand
                            } else {
                                best
                            }
                        })
                        .map(|(_, v)| v)
                        .unwrap_or(face[0]);
                    vertex_of_pixel[idx] = Some(best as u32);
                }
            }
        }
    }

    let eps = 1e-3 * camera.radius as f64;
    let vertex_pixel: Vec<Option<Pixel>> = screen
        .iter()
        .map(|s| {
            let s = (*s)?;
            let (px, py) = (s[0].round(), s[1].round());
            (px >= 0.0 && py >= 0.0 && px < w as f64 && py < h as f64)
                .then(|| Pixel::new(px as usize, py as usize))
        })
        .collect();
    let mut visible = vec![false; mesh.vertex_count()];
    for v in vertex_of_pixel.iter().flatten() {
        visible[*v as usize] = true;
    }
    for (v, p) in vertex_pixel.iter().enumerate() {
        if visible[v] {
            continue;
        }
        let (Some(p), Some(s)) = (p, screen[v]) else { continue };
        let idx = p.y * w + p.x;
        // A pixel won by one of v's own faces cannot hide v, however steep
        // that face is near the silhouette. Background pixels never count, so
        // a visible vertex always sits on covered pixels.
        let Some(f) = face_of_pixel[idx] else { continue };
        if mesh.faces()[f].contains(&v) || s[2] <= zbuf[idx] + eps {
            visible[v] = true;
        }
    }

    RenderMap {
        width: w,
        height: h,
        vertex_of_pixel,
        depth,
        visible,
        vertex_pixel,
    }
}

pub fn unproject_pixel(map: &RenderMap, x: usize, y: usize) -> Result<Option<usize>, RasterError> {
    if x >= map.width || y >= map.height {
        return Err(RasterError::OutOfBounds {
            pixel: Pixel::new(x, y),
            width: map.width,
            height: map.height,
        });
    }
    Ok(map.vertex_of_pixel[y * map.width + x].map(|v| v as usize))
}

/// Cross product of the angle lists, elevation-major, default intrinsics.
pub fn view_grid(elevations: &[f32], azimuths: &[f32]) -> Vec<Camera> {
    elevations
        .iter()
        .flat_map(|&e| azimuths.iter().map(move |&a| Camera::orbit(e, a)))
        .collect()
}

/// The 5 × 12 evaluation grid: elevations ±60/±30/0, azimuths every 30°.
pub fn standard_view_grid() -> Vec<Camera> {
    let azimuths: Vec<f32> = (0..12).map(|i| i as f32 * 30.0).collect();
    view_grid(&GRID_ELEVATIONS, &azimuths)
}

/// Seeded random orbit cameras: elevation uniform in [−90, 90], azimuth
/// uniform in [0, 360).
pub fn sample_views(count: usize, seed: u64) -> Vec<Camera> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| {
            let elevation = rng.gen_range(-90.0f32..=90.0);
            let azimuth = rng.gen_range(0.0f32..360.0);
            Camera::orbit(elevation, azimuth)
        })
        .collect()
}
