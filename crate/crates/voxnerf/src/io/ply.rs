//! ASCII PLY subset and plain-text point cloud I/O.
//!
//! Supported header: `element vertex N` with float properties x, y, z and
//! optionally sigma. Values print in shortest-roundtrip form, so write/read
//! is exact.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use crate::error::{Result, VoxError};
use crate::math::vec3;
use crate::svo::{PointCloud, PriorPoint};

pub fn write_ply(path: &Path, cloud: &PointCloud, with_sigma: bool) -> Result<()> {
    let mut out = String::new();
    out.push_str("ply\nformat ascii 1.0\n");
    let _ = writeln!(out, "element vertex {}", cloud.points.len());
    out.push_str("property float x\nproperty float y\nproperty float z\n");
    if with_sigma {
        out.push_str("property float sigma\n");
    }
    out.push_str("end_header\n");
    for p in &cloud.points {
        if with_sigma {
            let _ = writeln!(
                out,
                "{} {} {} {}",
                p.position.x, p.position.y, p.position.z, p.noise_sigma
            );
        } else {
            let _ = writeln!(out, "{} {} {}", p.position.x, p.position.y, p.position.z);
        }
    }
    fs::write(path, out)?;
    Ok(())
}

fn parse_err(offset: usize, message: impl Into<String>) -> VoxError {
    VoxError::Parse {
        offset,
        message: message.into(),
    }
}

/// Read a PLY cloud. When the file has no sigma property, every point gets
/// `global_sigma`; omitting both is an error because the octree needs a
/// noise scale.
pub fn read_ply(path: &Path, global_sigma: Option<f64>) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut offset = 0usize;
    let mut lines = text.lines().map(|l| {
        let at = offset;
        offset += l.len() + 1;
        (at, l.trim())
    });

    let mut expect = |want: &str| -> Result<()> {
        match lines.next() {
            Some((_, l)) if l == want => Ok(()),
            Some((at, l)) => Err(parse_err(at, format!("expected '{want}', got '{l}'"))),
            None => Err(parse_err(text.len(), format!("expected '{want}', got EOF"))),
        }
    };
    expect("ply")?;
    expect("format ascii 1.0")?;

    let mut n_vertex: Option<usize> = None;
    let mut props: Vec<String> = Vec::new();
    let mut header_end = text.len();
    for (at, line) in lines.by_ref() {
        if line == "end_header" {
            header_end = at;
            break;
        } else if let Some(rest) = line.strip_prefix("element vertex ") {
            n_vertex = Some(
                rest.parse()
                    .map_err(|_| parse_err(at, "bad vertex count"))?,
            );
        } else if line.starts_with("element ") {
            return Err(parse_err(at, "only vertex elements supported"));
        } else if let Some(rest) = line.strip_prefix("property ") {
            let mut it = rest.split_whitespace();
            let ty = it.next().unwrap_or("");
            let name = it.next().unwrap_or("");
            if !matches!(ty, "float" | "double") {
                return Err(parse_err(at, format!("unsupported property type {ty}")));
            }
            props.push(name.to_string());
        } else if !line.starts_with("comment") && !line.is_empty() {
            return Err(parse_err(at, format!("unrecognized header line '{line}'")));
        }
    }
    let n = n_vertex.ok_or_else(|| parse_err(header_end, "missing element vertex"))?;
    let has_sigma = props.iter().any(|p| p == "sigma");
    if props.len() < 3 || props[0] != "x" || props[1] != "y" || props[2] != "z" {
        return Err(parse_err(header_end, "properties must start with x y z"));
    }
    if !has_sigma && global_sigma.is_none() {
        return Err(parse_err(
            header_end,
            "no sigma property; supply a global sigma",
        ));
    }

    let mut points = Vec::with_capacity(n);
    for _ in 0..n {
        let (at, line) = lines
            .next()
            .ok_or_else(|| parse_err(text.len(), "truncated vertex list"))?;
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(at, format!("bad float: {e}")))?;
        if vals.len() != props.len() {
            return Err(parse_err(
                at,
                format!("expected {} values, got {}", props.len(), vals.len()),
            ));
        }
        let sigma = if has_sigma {
            vals[props.iter().position(|p| p == "sigma").unwrap()]
        } else {
            global_sigma.unwrap()
        };
        points.push(PriorPoint {
            position: vec3(vals[0], vals[1], vals[2]),
            noise_sigma: sigma,
        });
    }
    PointCloud::from_points(points)
}

/// One-point-per-line text format: "x y z [sigma]"; '#' starts a comment.
pub fn read_xyz(path: &Path, global_sigma: Option<f64>) -> Result<PointCloud> {
    let text = fs::read_to_string(path)?;
    let mut points = Vec::new();
    let mut offset = 0usize;
    for line in text.lines() {
        let at = offset;
        offset += line.len() + 1;
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let vals: Vec<f64> = line
            .split_whitespace()
            .map(|t| t.parse::<f64>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|e| parse_err(at, format!("bad float: {e}")))?;
        let sigma = match (vals.len(), global_sigma) {
            (4, _) => vals[3],
            (3, Some(s)) => s,
            (3, None) => {
                return Err(parse_err(at, "no per-point sigma; supply a global sigma"))
            }
            _ => return Err(parse_err(at, format!("expected 3 or 4 values, got {}", vals.len()))),
        };
        points.push(PriorPoint {
            position: vec3(vals[0], vals[1], vals[2]),
            noise_sigma: sigma,
        });
    }
    PointCloud::from_points(points)
}
