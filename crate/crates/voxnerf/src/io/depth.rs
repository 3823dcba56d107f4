//! Raw 32-bit float depth maps with a JSON sidecar.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::image::DepthMap;

/// Sentinel stored in the raw file where no depth is available.
pub const INVALID_DEPTH: f32 = -1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DepthSidecar {
    pub width: u32,
    pub height: u32,
    pub units: String,
    pub invalid_value: f32,
}

fn sidecar_path(raw: &Path) -> std::path::PathBuf {
    raw.with_extension("json")
}

pub fn write_depth(raw_path: &Path, depth: &DepthMap) -> Result<()> {
    let mut bytes = Vec::with_capacity(depth.data.len() * 4);
    for i in 0..depth.data.len() {
        let v = if depth.valid[i] {
            depth.data[i] as f32
        } else {
            INVALID_DEPTH
        };
        bytes.extend_from_slice(&v.to_le_bytes());
    }
    fs::write(raw_path, bytes)?;
    let sidecar = DepthSidecar {
        width: depth.width,
        height: depth.height,
        units: "meters".into(),
        invalid_value: INVALID_DEPTH,
    };
    fs::write(
        sidecar_path(raw_path),
        serde_json::to_string_pretty(&sidecar)?,
    )?;
    Ok(())
}

pub fn read_depth(raw_path: &Path) -> Result<DepthMap> {
    let sidecar: DepthSidecar =
        serde_json::from_str(&fs::read_to_string(sidecar_path(raw_path))?)?;
    let bytes = fs::read(raw_path)?;
    let need = sidecar.width as usize * sidecar.height as usize * 4;
    if bytes.len() != need {
        return Err(VoxError::Parse {
            offset: bytes.len().min(need),
            message: format!("raw depth size {} != expected {need}", bytes.len()),
        });
    }
    let mut depth = DepthMap::new(sidecar.width, sidecar.height);
    for (i, chunk) in bytes.chunks_exact(4).enumerate() {
        let v = f32::from_le_bytes(chunk.try_into().unwrap());
        if v != sidecar.invalid_value {
            depth.data[i] = v as f64;
            depth.valid[i] = true;
        }
    }
    Ok(depth)
}
