//! Shape-to-image: pick a vertex and find the image region that matches its
//! 3D part.

use std::error::Error;

use bsb::matcher::{bsb_match_reverse, ReverseContext};
use bsb::segmenters::{Seg2DProvider, Seg3DProvider};
use bsb::synthetic::{planted_instance, PlantedOptions};

pub fn run() -> Result<(), Box<dyn Error>> {
    let inst = planted_instance(&PlantedOptions {
        noise: 0.01,
        seed: 11,
        ..PlantedOptions::default()
    });
    let seg2d = inst.seg2d();
    let seg3d = inst.seg3d();
    let v = inst.gt_part[0];
    let part3d = seg3d.query(v)?;
    let scope = inst.object_mask();
    let ctx = ReverseContext {
        image: &inst.image,
        scope: &scope,
        vertices: &inst.vertices,
        vertex: v,
        part3d: &part3d,
        k: 20,
    };
    let r = bsb_match_reverse(&ctx, &seg3d)?;
    let pixel = r.pixel.expect("the planted part has a counterpart");
    let region = seg2d.query(pixel)?.part;
    println!("vertex {v} -> pixel {pixel} (via vertex {:?}, 3D IoU {:?})", r.vertex, r.iou);
    println!("image region of {} pixels: {:?}", region.count(), region.to_rle());
    assert_eq!(region, inst.part_mask());
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
