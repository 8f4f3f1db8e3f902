//! Regenerate the committed fixture manifests under tests/fixtures.

use std::error::Error;
use std::path::{Path, PathBuf};

use bsb::synthetic::{decoy_family, missing_part_family, write_manifest};

pub fn write_all(root: &Path) -> Result<Vec<PathBuf>, Box<dyn Error>> {
    Ok(vec![
        write_manifest(&root.join("decoy"), &decoy_family())?,
        write_manifest(&root.join("missing"), &missing_part_family())?,
    ])
}

pub fn run() -> Result<(), Box<dyn Error>> {
    let dir = tempfile::tempdir()?;
    for p in write_all(dir.path())? {
        println!("wrote {}", p.display());
    }
    Ok(())
}

#[allow(dead_code)]
fn main() -> Result<(), Box<dyn Error>> {
    let root = std::env::args()
        .nth(1)
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures"));
    for p in write_all(&root)? {
        println!("wrote {}", p.display());
    }
    Ok(())
}
