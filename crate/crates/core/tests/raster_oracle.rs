mod common;

use bsb::mesh::Mesh;
use bsb::raster::{render, sample_views, standard_view_grid, Camera};
use bsb::synthetic::icosahedron;
use common::{ray_cast_disagreements, ray_cast_visible, test_meshes};

type M4 = [[f64; 4]; 4];

fn mul(a: &M4, b: &M4) -> M4 {
    let mut r = [[0.0; 4]; 4];
    for i in 0..4 {
        for j in 0..4 {
            r[i][j] = (0..4).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    r
}

fn apply(m: &M4, p: [f64; 4]) -> [f64; 4] {
    let mut r = [0.0; 4];
    for i in 0..4 {
        r[i] = (0..4).map(|k| m[i][k] * p[k]).sum();
    }
    r
}

fn norm3(v: [f64; 3]) -> [f64; 3] {
    let n = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
    [v[0] / n, v[1] / n, v[2] / n]
}

fn cross3(a: [f64; 3], b: [f64; 3]) -> [f64; 3] {
    [a[1] * b[2] - a[2] * b[1], a[2] * b[0] - a[0] * b[2], a[0] * b[1] - a[1] * b[0]]
}

/// Right-handed look-at view matrix (camera looks down −Z).
fn look_at(eye: [f64; 3], up: [f64; 3]) -> M4 {
    let f = norm3([-eye[0], -eye[1], -eye[2]]);
    let s = norm3(cross3(f, up));
    let u = cross3(s, f);
    let d = |a: [f64; 3]| a[0] * eye[0] + a[1] * eye[1] + a[2] * eye[2];
    [
        [s[0], s[1], s[2], -d(s)],
        [u[0], u[1], u[2], -d(u)],
        [-f[0], -f[1], -f[2], d(f)],
        [0.0, 0.0, 0.0, 1.0],
    ]
}

/// Symmetric perspective projection with vertical field of view `fovy`.
fn perspective(fovy: f64, aspect: f64, near: f64, far: f64) -> M4 {
    let t = 1.0 / (fovy / 2.0).tan();
    [
        [t / aspect, 0.0, 0.0, 0.0],
        [0.0, t, 0.0, 0.0],
        [0.0, 0.0, (far + near) / (near - far), 2.0 * far * near / (near - far)],
        [0.0, 0.0, -1.0, 0.0],
    ]
}

fn matrix_project(cam: &Camera, p: [f32; 3]) -> (f64, f64) {
    let (e, a, r) = (
        (cam.elevation as f64).to_radians(),
        (cam.azimuth as f64).to_radians(),
        cam.radius as f64,
    );
    let eye = [r * e.cos() * a.sin(), r * e.sin(), r * e.cos() * a.cos()];
    let up = if cam.elevation.abs() >= 89.0 {
        [1.0, 0.0, 0.0]
    } else {
        [0.0, 1.0, 0.0]
    };
    let (w, h) = (cam.width as f64, cam.height as f64);
    let mvp = mul(&perspective((cam.fov as f64).to_radians(), w / h, 0.01, 100.0), &look_at(eye, up));
    let clip = apply(&mvp, [p[0] as f64, p[1] as f64, p[2] as f64, 1.0]);
    let (nx, ny) = (clip[0] / clip[3], clip[1] / clip[3]);
    ((nx + 1.0) / 2.0 * w, (1.0 - ny) / 2.0 * h)
}

#[test]
fn projection_agrees_with_matrix_pipeline() {
    let mut cams = standard_view_grid();
    cams.extend(sample_views(40, 3));
    cams.push(Camera::orbit(90.0, 10.0));
    cams.push(Camera::orbit(-90.0, 200.0));
    cams.push(Camera {
        width: 320,
        height: 160,
        fov: 45.0,
        radius: 3.0,
        ..Camera::orbit(20.0, 75.0)
    });
    let mesh = &test_meshes()[2].1;
    let mut worst = 0f64;
    for cam in &cams {
        for &p in mesh.vertices() {
            let got = cam.project(p).unwrap();
            let (x, y) = matrix_project(cam, p);
            worst = worst.max((got.x as f64 - x).abs()).max((got.y as f64 - y).abs());
        }
    }
    assert!(worst < 1e-3, "max deviation {worst} px");
}

#[test]
fn icosahedron_visibility_is_exact() {
    let m = icosahedron();
    let mut cams = standard_view_grid();
    cams.extend(sample_views(100, 5));
    for cam in &cams {
        let map = render(&m, cam);
        let oracle = ray_cast_visible(&m, cam, 1e-3 * cam.radius as f64);
        assert_eq!(map.visible(), &oracle[..], "{cam:?}");
        assert!((6..=12).contains(&map.visible_count()));
        // Every unprojected foreground vertex passes the oracle.
        assert!(map.foreground().all(|(_, v)| oracle[v]));
    }
}

/// No vertex is visible without a cause: attribution, or a covered rounded
/// pixel that is its own face's or lies within the depth tolerance.
#[test]
fn visibility_follows_depth_rule() {
    let cams = sample_views(12, 2024);
    for (name, mesh) in test_meshes() {
        for cam in &cams {
            let map = render(&mesh, cam);
            let attributed: std::collections::HashSet<usize> = map.foreground().map(|(_, v)| v).collect();
            for v in 0..mesh.vertex_count() {
                let expected = attributed.contains(&v)
                    || map.vertex_pixel(v).is_some_and(|p| {
                        let idx = p.y * cam.width + p.x;
                        let z = map.depth()[idx];
                        let own = map.vertex_of_pixel()[idx].is_some_and(|u| {
                            mesh.faces().iter().any(|f| f.contains(&v) && f.contains(&(u as usize)))
                        });
                        let vz = cam.project(mesh.vertices()[v]).unwrap().depth;
                        z.is_finite() && (vz <= z + 1e-3 * cam.radius || own)
                    });
                if !expected {
                    assert!(!map.is_visible(v), "{name}: vertex {v} visible without cause");
                }
            }
        }
    }
}

/// Whether `v` is off the mesh boundary and every face around it projects
/// with the same winding, so `v` is not on the silhouette.
fn interior(mesh: &Mesh, cam: &Camera, v: usize) -> bool {
    let around: Vec<&[usize; 3]> = mesh.faces().iter().filter(|f| f.contains(&v)).collect();
    let closed = around.iter().all(|f| {
        f.iter().filter(|&&u| u != v).all(|&u| around.iter().filter(|g| g.contains(&u)).count() == 2)
    });
    let signs: Vec<bool> = around
        .iter()
        .map(|f| {
            let [a, b, c] = f.map(|i| cam.project(mesh.vertices()[i]).unwrap());
            (b.x - a.x) * (c.y - a.y) - (c.x - a.x) * (b.y - a.y) > 0.0
        })
        .collect();
    closed && !signs.is_empty() && signs.iter().all(|&s| s == signs[0])
}

/// Rounded-pixel consistency: a visible vertex away from the silhouette
/// unprojects to a vertex within 2 px. Silhouette corners are exempt, since
/// pixel-center sampling can leave their rounded pixel uncovered or showing
/// a surface behind them; those are counted and logged.
#[test]
fn visible_vertices_unproject_nearby() {
    let (mut all_checked, mut all_fails) = (0, 0);
    for (i, (name, mesh)) in test_meshes().into_iter().enumerate() {
        let (mut checked, mut fails, mut exempt, mut exempt_fails) = (0usize, 0usize, 0usize, 0usize);
        for cam in sample_views(12, 77) {
            let map = render(&mesh, &cam);
            for v in (0..mesh.vertex_count()).filter(|&v| map.is_visible(v)) {
                let a = cam.project(mesh.vertices()[v]).unwrap();
                let near = map.vertex_pixel(v).and_then(|p| map.vertex_at(p)).is_some_and(|u| {
                    let b = cam.project(mesh.vertices()[u]).unwrap();
                    ((a.x - b.x).powi(2) + (a.y - b.y).powi(2)).sqrt() <= 2.0
                });
                if interior(&mesh, &cam, v) {
                    checked += 1;
                    fails += !near as usize;
                } else {
                    exempt += 1;
                    exempt_fails += !near as usize;
                }
            }
        }
        eprintln!("{name:>16}: interior {fails}/{checked} fail, silhouette {exempt_fails}/{exempt} fail");
        if i < 2 {
            assert_eq!(fails, 0, "{name}");
        }
        all_checked += checked;
        all_fails += fails;
    }
    assert!(all_fails * 20 < all_checked, "{all_fails} of {all_checked}");
}

#[test]
fn ray_cast_agreement_on_coarse_convex_meshes() {
    let table = ray_cast_disagreements();
    for (name, counts) in &table {
        eprintln!("{name:>16}: {counts:?}");
    }
    for (name, counts) in &table[..2] {
        assert!(counts.iter().all(|&c| c <= 1), "{name}: {counts:?}");
    }
}

