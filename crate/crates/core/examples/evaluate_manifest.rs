//! Success rate, baselines and the candidate-budget ablation over a case
//! manifest.

use std::error::Error;

use bsb::eval::{ablate_k, eval_success_rate, fidelity_iou_stats, load_cases, Method};
use bsb::synthetic::{decoy_family, write_manifest};
use bsb::tensor_io::load_manifest;

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    let path = write_manifest(dir.path(), &decoy_family())?;
    let cases = load_cases(&load_manifest(&path)?)?;

    for (method, seed) in [(Method::Bsb, None), (Method::Nn, None), (Method::Random, Some(7))] {
        let r = eval_success_rate(&cases, method, 10, seed)?;
        println!("{method:?}: {}/{} hits, {} no-match", r.hits, r.total, r.no_match);
    }
    let ablation = ablate_k(&cases, &[1, 2, 5, 10, 50])?;
    for row in &ablation.rows {
        println!("k = {:>2}: success {:.3}", row.k, row.success_rate);
    }
    let fid = fidelity_iou_stats(&cases, 4, 10, 1)?;
    println!("mean IoU with counterpart {:?}, without {:?}", fid.matched_mean, fid.unmatched_mean);
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    run()
}
