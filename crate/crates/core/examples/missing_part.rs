//! A click on an image region that has no counterpart on the shape returns
//! an explicit no-match and an empty 3D segmentation.

use std::error::Error;

use bsb::segmenters::correspond;
use bsb::synthetic::missing_part_family;

pub fn run() -> Result<(), Box<dyn Error>> {
    for (name, inst) in missing_part_family() {
        let seg2d = inst.seg2d();
        let seg3d = inst.seg3d();
        let c = inst.with_context(inst.vertices.len(), |ctx| correspond(ctx, &seg2d, &seg3d))??;
        let hits = c.result.candidates.iter().filter(|x| x.in_part).count();
        println!(
            "{name}: vertex {:?}, {} candidates, {hits} land in the clicked part, 3D mask has {} vertices",
            c.result.vertex,
            c.result.candidates.len(),
            c.mask3d.count()
        );
        assert!(c.result.vertex.is_none() && c.mask3d.count() == 0);
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
