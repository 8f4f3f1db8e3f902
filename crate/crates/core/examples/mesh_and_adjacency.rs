//! Load an OBJ, normalize it to the unit box and walk its adjacency.

use std::error::Error;

use bsb::mesh::{hop_distances, load_mesh, normalize_mesh};
use bsb::synthetic::icosahedron;

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = dir.path().join("ico.obj");
    std::fs::write(&path, icosahedron().to_obj())?;

    let mesh = load_mesh(&path)?;
    let unit = normalize_mesh(&mesh)?;
    let (lo, hi) = unit.bounding_box();
    println!("{} vertices, {} faces, bbox {lo:?}..{hi:?}", unit.vertex_count(), unit.face_count());
    println!("neighbors of 0: {:?}", unit.neighbors(0));

    let hops = hop_distances(&unit, 0);
    let far = hops.iter().filter(|h| **h == Some(3)).count();
    println!("vertices three hops from 0: {far}");
    assert_eq!(far, 1);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
