//! Render a mesh from the standard 60-view grid and report visibility.

use std::error::Error;

use bsb::raster::{render, standard_view_grid, unproject_pixel};
use bsb::synthetic::icosahedron;

pub fn run() -> Result<(), Box<dyn Error>> {
    let mesh = icosahedron();
    let cams = standard_view_grid();
    println!("{} views", cams.len());
    for cam in cams.iter().step_by(12) {
        let cam = cam.with_size(96, 96);
        let map = render(&mesh, &cam);
        let center = unproject_pixel(&map, 48, 48)?;
        println!(
            "elevation {:>5}, azimuth {:>5}: {} visible, center pixel -> {:?}",
            cam.elevation,
            cam.azimuth,
            map.visible_count(),
            center
        );
        assert!((6..=12).contains(&map.visible_count()));
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
