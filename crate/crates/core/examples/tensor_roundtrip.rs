//! Write a feature image and a mask as BSBT containers and read them back.

use std::error::Error;

use bsb::tensor_io::{read_header_file, FeatureImage, Mask2D};

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let image = FeatureImage::from_fn(8, 6, 3, |x, y| vec![x as f32, y as f32, (x * y) as f32])?;
    let mask = Mask2D::from_fn(8, 6, |x, y| x + y < 5);

    let image_path = dir.path().join("image.bsbt");
    let mask_path = dir.path().join("mask.bsbt");
    image.save(&image_path)?;
    mask.save(&mask_path)?;

    for path in [&image_path, &mask_path] {
        let h = read_header_file(path)?;
        println!("{}: {} {:?}", path.file_name().unwrap().to_string_lossy(), h.dtype, h.dims);
    }
    assert_eq!(FeatureImage::load(&image_path)?, image);
    let back = Mask2D::load(&mask_path)?;
    assert_eq!(back, mask);
    println!("mask runs: {:?}", back.to_rle());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
