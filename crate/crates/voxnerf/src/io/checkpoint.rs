//! Versioned binary checkpoints: magic "VXNF", a JSON config header, the
//! flat little-endian f64 parameter vector, and optionally the Adam state so
//! an interrupted run resumes bit-for-bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::field::{Field, FieldConfig};
use crate::train::OptimizerState;

pub const MAGIC: &[u8; 4] = b"VXNF";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    config: FieldConfig,
    iteration: u64,
    n_params: usize,
    has_optimizer: bool,
}

pub fn save_checkpoint(
    path: &Path,
    field: &Field,
    opt: Option<&OptimizerState>,
    iteration: u64,
) -> Result<()> {
    let header = Header {
        config: field.cfg,
        iteration,
        n_params: field.params.len(),
        has_optimizer: opt.is_some(),
    };
    let json = serde_json::to_vec(&header)?;
    let mut bytes = Vec::with_capacity(16 + json.len() + field.params.len() * 8);
    bytes.extend_from_slice(MAGIC);
    bytes.extend_from_slice(&VERSION.to_le_bytes());
    bytes.extend_from_slice(&(json.len() as u64).to_le_bytes());
    bytes.extend_from_slice(&json);
    for p in &field.params {
        bytes.extend_from_slice(&p.to_le_bytes());
    }
    if let Some(opt) = opt {
        if opt.m.len() != field.params.len() {
            return Err(VoxError::Contract(
                "optimizer state does not match parameter layout".into(),
            ));
        }
        bytes.extend_from_slice(&opt.step.to_le_bytes());
        for v in opt.m.iter().chain(&opt.v) {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
    }
    // write-then-rename so an abort never truncates the previous checkpoint
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, &bytes)?;
    fs::rename(&tmp, path)?;
    Ok(())
}

struct Reader<'a> {
    data: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.pos + n > self.data.len() {
            return Err(VoxError::Parse {
                offset: self.pos,
                message: format!("truncated checkpoint: need {n} more bytes"),
            });
        }
        let s = &self.data[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn f64_vec(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n * 8)?;
        Ok(raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect())
    }
}

pub fn load_checkpoint(path: &Path) -> Result<(Field, Option<OptimizerState>, u64)> {
    let data = fs::read(path)?;
    let mut r = Reader {
        data: &data,
        pos: 0,
    };
    if r.take(4)? != MAGIC {
        return Err(VoxError::Parse {
            offset: 0,
            message: "not a VXNF checkpoint".into(),
        });
    }
    let version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
    if version != VERSION {
        return Err(VoxError::Parse {
            offset: 4,
            message: format!("unsupported checkpoint version {version}"),
        });
    }
    let json_len = u64::from_le_bytes(r.take(8)?.try_into().unwrap()) as usize;
    let header: Header = serde_json::from_slice(r.take(json_len)?)?;
    let layout = header.config.layout();
    if layout.total != header.n_params {
        return Err(VoxError::Parse {
            offset: r.pos,
            message: format!(
                "config expects {} parameters, header says {}",
                layout.total, header.n_params
            ),
        });
    }
    let params = r.f64_vec(header.n_params)?;
    let field = Field {
        cfg: header.config,
        layout,
        params,
    };
    let opt = if header.has_optimizer {
        let step = u64::from_le_bytes(r.take(8)?.try_into().unwrap());
        let m = r.f64_vec(header.n_params)?;
        let v = r.f64_vec(header.n_params)?;
        Some(OptimizerState { m, v, step })
    } else {
        None
    };
    Ok((field, opt, header.iteration))
}
