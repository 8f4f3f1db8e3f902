//! A click where the most similar vertex is a decoy in the wrong part: the
//! nearest-neighbor baseline takes the decoy, the segment-aware matcher
//! does not.

use std::error::Error;

use bsb::matcher::{bsb_match, nn_baseline};
use bsb::segmenters::correspond;
use bsb::synthetic::{planted_instance, PlantedOptions};

pub fn run() -> Result<(), Box<dyn Error>> {
    let inst = planted_instance(&PlantedOptions {
        decoy: true,
        noise: 0.01,
        seed: 3,
        ..PlantedOptions::default()
    });
    let seg2d = inst.seg2d();
    let seg3d = inst.seg3d();
    let (nn, result, c) = inst.with_context(50, |ctx| -> Result<_, Box<dyn Error>> {
        Ok((nn_baseline(ctx)?, bsb_match(ctx, &seg2d)?, correspond(ctx, &seg2d, &seg3d)?))
    })??;

    println!("click {} in a part of {} vertices", inst.click, inst.gt_part.len());
    println!("nearest neighbor: vertex {nn} (decoy {:?})", inst.decoy_vertex);
    println!("matched: vertex {:?} via pixel {:?}, IoU {:?}", result.vertex, result.pixel, result.iou);
    println!("3D part: {:?}", c.mask3d.indices());
    for cand in result.candidates.iter().take(5) {
        println!("  candidate {:>2}: sim {:.3} in_part {} iou {:?}", cand.vertex, cand.similarity, cand.in_part, cand.iou);
    }
    assert!(!inst.gt_part.contains(&nn));
    assert!(inst.gt_part.contains(&result.vertex.unwrap()));
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
