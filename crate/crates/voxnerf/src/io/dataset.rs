//! Dataset directory layout: cameras.json, images/*.ppm, depths/*.raw
//! (+ JSON sidecars), split.json.

use std::fs;
use std::path::Path;

use crate::error::{Result, VoxError};
use crate::io::{cameras, depth, ppm};
use crate::synth::{Dataset, Split};

pub fn save_dataset(dir: &Path, dataset: &Dataset) -> Result<()> {
    fs::create_dir_all(dir.join("images"))?;
    fs::create_dir_all(dir.join("depths"))?;
    cameras::write_cameras(&dir.join("cameras.json"), &dataset.cameras)?;
    fs::write(
        dir.join("split.json"),
        serde_json::to_string_pretty(&dataset.split)?,
    )?;
    for (i, img) in dataset.images.iter().enumerate() {
        ppm::write_ppm(&dir.join("images").join(format!("{i:04}.ppm")), img)?;
    }
    for (i, d) in dataset.depths.iter().enumerate() {
        depth::write_depth(&dir.join("depths").join(format!("{i:04}.raw")), d)?;
    }
    Ok(())
}

pub fn load_dataset(dir: &Path) -> Result<Dataset> {
    let cams = cameras::read_cameras(&dir.join("cameras.json"))?;
    let split: Vec<Split> = serde_json::from_str(&fs::read_to_string(dir.join("split.json"))?)?;
    if split.len() != cams.len() {
        return Err(VoxError::Contract(format!(
            "split has {} labels for {} cameras",
            split.len(),
            cams.len()
        )));
    }
    let mut images = Vec::with_capacity(cams.len());
    let mut depths = Vec::with_capacity(cams.len());
    for i in 0..cams.len() {
        images.push(ppm::read_ppm(&dir.join("images").join(format!("{i:04}.ppm")))?);
        depths.push(depth::read_depth(
            &dir.join("depths").join(format!("{i:04}.raw")),
        )?);
    }
    Ok(Dataset {
        cameras: cams,
        images,
        depths,
        split,
    })
}
