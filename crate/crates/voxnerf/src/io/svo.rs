//! Octree persistence: JSON with root geometry and sorted leaf codes.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::math::Aabb;
use crate::svo::SparseVoxelOctree;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SvoFile {
    root_bounds: Aabb,
    max_level: u32,
    leaf_size: f64,
    /// Morton codes at max_level, sorted for reproducible bytes.
    leaves: Vec<u64>,
}

pub fn write_svo(path: &Path, svo: &SparseVoxelOctree) -> Result<()> {
    let mut leaves: Vec<u64> = svo.occupied_leaves().iter().copied().collect();
    leaves.sort_unstable();
    let file = SvoFile {
        root_bounds: svo.root_bounds,
        max_level: svo.max_level,
        leaf_size: svo.leaf_size,
        leaves,
    };
    fs::write(path, serde_json::to_string(&file)?)?;
    Ok(())
}

pub fn read_svo(path: &Path) -> Result<SparseVoxelOctree> {
    let file: SvoFile = serde_json::from_str(&fs::read_to_string(path)?)?;
    SparseVoxelOctree::from_parts(
        file.root_bounds,
        file.max_level,
        file.leaf_size,
        file.leaves.into_iter().collect(),
    )
}
