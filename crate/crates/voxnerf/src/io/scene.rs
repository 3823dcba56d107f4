//! Scene description JSON.

use std::fs;
use std::path::Path;

use crate::error::Result;
use crate::synth::SyntheticScene;

pub fn write_scene(path: &Path, scene: &SyntheticScene) -> Result<()> {
    scene.validate()?;
    fs::write(path, serde_json::to_string_pretty(scene)?)?;
    Ok(())
}

pub fn read_scene(path: &Path) -> Result<SyntheticScene> {
    let scene: SyntheticScene = serde_json::from_str(&fs::read_to_string(path)?)?;
    scene.validate()?;
    Ok(scene)
}
