//! Triangle meshes: OBJ loading, normalization, and edge adjacency.

use std::collections::VecDeque;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::tensor_io::Mask3D;

#[derive(Debug, thiserror::Error)]
pub enum MeshError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Parse { line: usize, reason: String },
    #[error("face {face} references vertex {index}, mesh has {count}")]
    IndexOutOfRange {
        face: usize,
        index: usize,
        count: usize,
    },
    #[error("face {0} is degenerate")]
    DegenerateFace(usize),
    #[error("mesh has no vertices")]
    Empty,
    #[error("mesh has zero extent")]
    ZeroExtent,
    #[error("seed vertex {0} out of range")]
    SeedOutOfRange(usize),
    #[error("seed vertex {0} does not satisfy the membership predicate")]
    SeedNotMember(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Mesh {
    vertices: Vec<[f32; 3]>,
    faces: Vec<[usize; 3]>,
    #[serde(skip)]
    adjacency: Vec<Vec<usize>>,
}

impl Mesh {
    pub fn new(vertices: Vec<[f32; 3]>, faces: Vec<[usize; 3]>) -> Result<Self, MeshError> {
        if vertices.is_empty() {
            return Err(MeshError::Empty);
        }
        let n = vertices.len();
        let mut adjacency = vec![Vec::new(); n];
        for (fi, f) in faces.iter().enumerate() {
            if let Some(&index) = f.iter().find(|&&i| i >= n) {
                return Err(MeshError::IndexOutOfRange {
                    face: fi,
                    index,
                    count: n,
                });
            }
            if f[0] == f[1] || f[1] == f[2] || f[0] == f[2] {
                return Err(MeshError::DegenerateFace(fi));
            }
            for k in 0..3 {
                let (a, b) = (f[k], f[(k + 1) % 3]);
                adjacency[a].push(b);
                adjacency[b].push(a);
            }
        }
        for list in &mut adjacency {
            list.sort_unstable();
            list.dedup();
        }
        Ok(Self {
            vertices,
            faces,
            adjacency,
        })
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn vertices(&self) -> &[[f32; 3]] {
        &self.vertices
    }

    pub fn faces(&self) -> &[[usize; 3]] {
        &self.faces
    }

    pub fn position(&self, v: usize) -> [f32; 3] {
        self.vertices[v]
    }

    /// Sorted neighbor list of `v`.
    pub fn neighbors(&self, v: usize) -> &[usize] {
        &self.adjacency[v]
    }

    pub fn bounding_box(&self) -> ([f32; 3], [f32; 3]) {
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in &self.vertices {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        (lo, hi)
    }

    pub fn to_obj(&self) -> String {
        use std::fmt::Write;
        let mut s = String::new();
        for p in &self.vertices {
            let _ = writeln!(s, "v {} {} {}", p[0], p[1], p[2]);
        }
        for f in &self.faces {
            let _ = writeln!(s, "f {} {} {}", f[0] + 1, f[1] + 1, f[2] + 1);
        }
        s
    }
}

/// Parses the OBJ subset: `v x y z`, `f i j k [l ...]` (1-based, `i/t/n`
/// forms accepted), `#` comments. Other records are ignored. Polygons are
/// fan-triangulated from their first vertex.
pub fn parse_obj(text: &str) -> Result<Mesh, MeshError> {
    let mut vertices = Vec::new();
    let mut faces = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line_no = lineno + 1;
        let line = raw.split('#').next().unwrap_or("").trim();
        let mut tokens = line.split_whitespace();
        match tokens.next() {
            Some("v") => {
                let mut p = [0f32; 3];
                for slot in &mut p {
                    let tok = tokens.next().ok_or_else(|| MeshError::Parse {
                        line: line_no,
                        reason: "vertex needs three coordinates".into(),
                    })?;
                    *slot = tok.parse().map_err(|_| MeshError::Parse {
                        line: line_no,
                        reason: format!("non-numeric coordinate {tok:?}"),
                    })?;
                    if !slot.is_finite() {
                        return Err(MeshError::Parse {
                            line: line_no,
                            reason: format!("non-finite coordinate {tok:?}"),
                        });
                    }
                }
                vertices.push(p);
            }
            Some("f") => {
                let idx = tokens
                    .map(|tok| {
                        let head = tok.split('/').next().unwrap_or("");
                        match head.parse::<usize>() {
                            Ok(i) if i >= 1 => Ok(i - 1),
                            _ => Err(MeshError::Parse {
                                line: line_no,
                                reason: format!("bad face index {tok:?}"),
                            }),
                        }
                    })
                    .collect::<Result<Vec<_>, _>>()?;
                if idx.len() < 3 {
                    return Err(MeshError::Parse {
                        line: line_no,
                        reason: "face needs at least three vertices".into(),
                    });
                }
                for k in 1..idx.len() - 1 {
                    faces.push([idx[0], idx[k], idx[k + 1]]);
                }
            }
            _ => {}
        }
    }
    Mesh::new(vertices, faces)
}

pub fn load_mesh(path: impl AsRef<Path>) -> Result<Mesh, MeshError> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|source| MeshError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_obj(&text)
}

/// Centers the bounding box at the origin and scales its longest edge to 1.
pub fn normalize_mesh(mesh: &Mesh) -> Result<Mesh, MeshError> {
    let (lo, hi) = mesh.bounding_box();
    let center: [f64; 3] = std::array::from_fn(|k| (lo[k] as f64 + hi[k] as f64) * 0.5);
    let extent = (0..3)
        .map(|k| hi[k] as f64 - lo[k] as f64)
        .fold(0.0f64, f64::max);
    if extent <= 0.0 {
        return Err(MeshError::ZeroExtent);
    }
    let scale = 1.0 / extent;
    let vertices = mesh
        .vertices
        .iter()
        .map(|p| std::array::from_fn(|k| ((p[k] as f64 - center[k]) * scale) as f32))
        .collect();
    Ok(Mesh {
        vertices,
        faces: mesh.faces.clone(),
        adjacency: mesh.adjacency.clone(),
    })
}

/// Maximal set reachable from `seed` through adjacency edges while staying
/// inside `member`.
pub fn connected_component(
    mesh: &Mesh,
    seed: usize,
    member: impl Fn(usize) -> bool,
) -> Result<Mask3D, MeshError> {
    let n = mesh.vertex_count();
    if seed >= n {
        return Err(MeshError::SeedOutOfRange(seed));
    }
    if !member(seed) {
        return Err(MeshError::SeedNotMember(seed));
    }
    let mut mask = Mask3D::empty(n);
    mask.insert(seed);
    let mut queue = VecDeque::from([seed]);
    while let Some(v) = queue.pop_front() {
        for &u in mesh.neighbors(v) {
            if !mask.contains(u) && member(u) {
                mask.insert(u);
                queue.push_back(u);
            }
        }
    }
    Ok(mask)
}

/// Breadth-first hop distances from `seed`; `None` for unreachable vertices.
pub fn hop_distances(mesh: &Mesh, seed: usize) -> Vec<Option<usize>> {
    let mut dist = vec![None; mesh.vertex_count()];
    dist[seed] = Some(0);
    let mut queue = VecDeque::from([seed]);
    while let Some(v) = queue.pop_front() {
        let d = dist[v].unwrap_or(0);
        for &u in mesh.neighbors(v) {
            if dist[u].is_none() {
                dist[u] = Some(d + 1);
                queue.push_back(u);
            }
        }
    }
    dist
}
