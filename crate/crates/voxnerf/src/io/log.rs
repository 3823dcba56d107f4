//! Training log CSV.

use std::fs;
use std::path::Path;

use crate::error::{Result, VoxError};
use crate::train::LogRow;

pub const LOG_HEADER: &str = "iteration,l_color,l_depth,l_reg,total,lr,psnr_train_patch";

pub fn write_log(path: &Path, rows: &[LogRow]) -> Result<()> {
    let mut out = String::from(LOG_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.iteration, r.l_color, r.l_depth, r.l_reg, r.total, r.lr, r.psnr_train_patch
        ));
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_log(path: &Path) -> Result<Vec<LogRow>> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == LOG_HEADER => {}
        _ => {
            return Err(VoxError::Parse {
                offset: 0,
                message: "bad training log header".into(),
            })
        }
    }
    let mut rows = Vec::new();
    let mut offset = LOG_HEADER.len() + 1;
    for line in lines {
        let at = offset;
        offset += line.len() + 1;
        if line.is_empty() {
            continue;
        }
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 7 {
            return Err(VoxError::Parse {
                offset: at,
                message: format!("expected 7 fields, got {}", f.len()),
            });
        }
        let num = |s: &str| -> Result<f64> {
            s.parse().map_err(|e| VoxError::Parse {
                offset: at,
                message: format!("bad number '{s}': {e}"),
            })
        };
        rows.push(LogRow {
            iteration: f[0].parse().map_err(|_| VoxError::Parse {
                offset: at,
                message: "bad iteration".into(),
            })?,
            l_color: num(f[1])?,
            l_depth: num(f[2])?,
            l_reg: num(f[3])?,
            total: num(f[4])?,
            lr: num(f[5])?,
            psnr_train_patch: num(f[6])?,
        });
    }
    Ok(rows)
}
