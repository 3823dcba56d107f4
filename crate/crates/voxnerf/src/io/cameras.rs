//! Camera list JSON: intrinsics plus 4x4 row-major camera-to-world poses.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::math::{vec3, Mat3};
use crate::raycast::Camera;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CameraRecord {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
    /// Row-major camera-to-world transform; last row must be [0,0,0,1].
    pub transform: [[f64; 4]; 4],
}

impl From<&Camera> for CameraRecord {
    fn from(c: &Camera) -> CameraRecord {
        let r = &c.rotation;
        let t = c.translation;
        CameraRecord {
            fx: c.fx,
            fy: c.fy,
            cx: c.cx,
            cy: c.cy,
            width: c.width,
            height: c.height,
            transform: [
                [r.rows[0][0], r.rows[0][1], r.rows[0][2], t.x],
                [r.rows[1][0], r.rows[1][1], r.rows[1][2], t.y],
                [r.rows[2][0], r.rows[2][1], r.rows[2][2], t.z],
                [0.0, 0.0, 0.0, 1.0],
            ],
        }
    }
}

impl CameraRecord {
    pub fn to_camera(&self) -> Result<Camera> {
        let m = &self.transform;
        if m[3] != [0.0, 0.0, 0.0, 1.0] {
            return Err(VoxError::Contract(
                "camera transform last row must be [0,0,0,1]".into(),
            ));
        }
        let cam = Camera {
            fx: self.fx,
            fy: self.fy,
            cx: self.cx,
            cy: self.cy,
            width: self.width,
            height: self.height,
            rotation: Mat3 {
                rows: [
                    [m[0][0], m[0][1], m[0][2]],
                    [m[1][0], m[1][1], m[1][2]],
                    [m[2][0], m[2][1], m[2][2]],
                ],
            },
            translation: vec3(m[0][3], m[1][3], m[2][3]),
        };
        cam.validate()?;
        Ok(cam)
    }
}

pub fn write_cameras(path: &Path, cameras: &[Camera]) -> Result<()> {
    let records: Vec<CameraRecord> = cameras.iter().map(CameraRecord::from).collect();
    fs::write(path, serde_json::to_string_pretty(&records)?)?;
    Ok(())
}

pub fn read_cameras(path: &Path) -> Result<Vec<Camera>> {
    let records: Vec<CameraRecord> = serde_json::from_str(&fs::read_to_string(path)?)?;
    records.iter().map(CameraRecord::to_camera).collect()
}
