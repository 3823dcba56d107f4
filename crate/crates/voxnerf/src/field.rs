//! The learnable radiance field: multi-resolution hash-grid features, a
//! density decoder whose auxiliary output feeds a color decoder together
//! with a spherical-harmonics direction encoding. Forward and reverse-mode
//! passes are hand-written over one flat parameter vector.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::math::Vec3;
use crate::rng::substream;
use rand::Rng;

pub const SH_DIM: usize = 16;

const HASH_PRIMES: [u64; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HashGridConfig {
    pub n_levels: usize,
    pub table_size_log2: u32,
    pub features_per_level: usize,
    pub base_resolution: u32,
    pub growth_factor: f64,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        HashGridConfig {
            n_levels: 8,
            table_size_log2: 16,
            features_per_level: 2,
            base_resolution: 16,
            growth_factor: 1.5,
        }
    }
}

impl HashGridConfig {
    pub fn table_size(&self) -> usize {
        1 << self.table_size_log2
    }

    pub fn feat_dim(&self) -> usize {
        self.n_levels * self.features_per_level
    }

    pub fn resolution(&self, level: usize) -> u32 {
        (self.base_resolution as f64 * self.growth_factor.powi(level as i32)).floor() as u32
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FieldConfig {
    pub grid: HashGridConfig,
    /// Width of the single density-decoder hidden layer.
    pub density_hidden: usize,
    /// Length of the auxiliary code handed to the color decoder.
    pub hidden_dim: usize,
    /// Width of the two color-decoder hidden layers.
    pub color_hidden: usize,
}

impl Default for FieldConfig {
    fn default() -> Self {
        FieldConfig {
            grid: HashGridConfig::default(),
            density_hidden: 64,
            hidden_dim: 15,
            color_hidden: 64,
        }
    }
}

/// Offsets of each parameter block inside the flat vector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Layout {
    pub tables: usize,
    pub tables_len: usize,
    pub dens_w1: usize,
    pub dens_b1: usize,
    pub dens_w2: usize,
    pub dens_b2: usize,
    pub col_w1: usize,
    pub col_b1: usize,
    pub col_w2: usize,
    pub col_b2: usize,
    pub col_w3: usize,
    pub col_b3: usize,
    pub total: usize,
}

impl FieldConfig {
    pub fn color_in_dim(&self) -> usize {
        self.hidden_dim + SH_DIM
    }

    pub fn layout(&self) -> Layout {
        let g = &self.grid;
        let feat = g.feat_dim();
        let dh = self.density_hidden;
        let dout = 1 + self.hidden_dim;
        let ch = self.color_hidden;
        let cin = self.color_in_dim();
        let tables_len = g.n_levels * g.table_size() * g.features_per_level;
        let mut off = 0;
        let tables = off;
        off += tables_len;
        let dens_w1 = off;
        off += dh * feat;
        let dens_b1 = off;
        off += dh;
        let dens_w2 = off;
        off += dout * dh;
        let dens_b2 = off;
        off += dout;
        let col_w1 = off;
        off += ch * cin;
        let col_b1 = off;
        off += ch;
        let col_w2 = off;
        off += ch * ch;
        let col_b2 = off;
        off += ch;
        let col_w3 = off;
        off += 3 * ch;
        let col_b3 = off;
        off += 3;
        Layout {
            tables,
            tables_len,
            dens_w1,
            dens_b1,
            dens_w2,
            dens_b2,
            col_w1,
            col_b1,
            col_w2,
            col_b2,
            col_w3,
            col_b3,
            total: off,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FieldOutput {
    pub density: f64,
    pub color: [f64; 3],
    pub hidden: Vec<f64>,
}

/// Per-sample forward intermediates retained for the backward pass.
/// Reused across samples to avoid allocation in the training loop.
#[derive(Debug, Clone, Default)]
pub struct Trace {
    pub slots: Vec<[u32; 8]>,
    pub corner_w: Vec<[f64; 8]>,
    pub features: Vec<f64>,
    dens_pre_sig: Vec<f64>,
    dens_act: Vec<f64>,
    dens_out: Vec<f64>,
    dens_raw_sig: f64,
    color_in: Vec<f64>,
    c1_sig: Vec<f64>,
    c1_act: Vec<f64>,
    c2_sig: Vec<f64>,
    c2_act: Vec<f64>,
    pub color: [f64; 3],
    pub density: f64,
    pub clamped: bool,
}

fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x
    } else if x < -30.0 {
        x.exp()
    } else {
        x.exp().ln_1p()
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Degree-4 real spherical-harmonics basis (16 values) of a unit direction.
pub fn dir_encode(d: Vec3) -> [f64; SH_DIM] {
    let (x, y, z) = (d.x, d.y, d.z);
    let (x2, y2, z2) = (x * x, y * y, z * z);
    [
        0.28209479177387814,
        -0.48860251190291987 * y,
        0.48860251190291987 * z,
        -0.48860251190291987 * x,
        1.0925484305920792 * x * y,
        -1.0925484305920792 * y * z,
        0.31539156525252005 * (3.0 * z2 - 1.0),
        -1.0925484305920792 * x * z,
        0.5462742152960396 * (x2 - y2),
        -0.5900435899266435 * y * (3.0 * x2 - y2),
        2.890611442640554 * x * y * z,
        -0.4570457994644658 * y * (5.0 * z2 - 1.0),
        0.3731763325901154 * z * (5.0 * z2 - 3.0),
        -0.4570457994644658 * x * (5.0 * z2 - 1.0),
        1.445305721320277 * z * (x2 - y2),
        -0.5900435899266435 * x * (x2 - 3.0 * y2),
    ]
}

#[derive(Debug, Clone)]
pub struct Field {
    pub cfg: FieldConfig,
    pub layout: Layout,
    pub params: Vec<f64>,
}

impl Field {
    /// Seeded initialization: tiny hash features, He-uniform decoder
    /// weights, zero biases.
    pub fn init(cfg: FieldConfig, seed: u64) -> Field {
        let layout = cfg.layout();
        let mut params = vec![0.0; layout.total];
        let mut rng = substream(seed, &[0x11e1d]);
        for p in &mut params[layout.tables..layout.tables + layout.tables_len] {
            *p = (rng.random::<f64>() * 2.0 - 1.0) * 1e-4;
        }
        let feat = cfg.grid.feat_dim();
        let dh = cfg.density_hidden;
        let dout = 1 + cfg.hidden_dim;
        let ch = cfg.color_hidden;
        let cin = cfg.color_in_dim();
        let blocks = [
            (layout.dens_w1, dh * feat, feat),
            (layout.dens_w2, dout * dh, dh),
            (layout.col_w1, ch * cin, cin),
            (layout.col_w2, ch * ch, ch),
            (layout.col_w3, 3 * ch, ch),
        ];
        for (off, len, fan_in) in blocks {
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[off..off + len] {
                *p = (rng.random::<f64>() * 2.0 - 1.0) * limit;
            }
        }
        Field { cfg, layout, params }
    }

    pub fn n_params(&self) -> usize {
        self.layout.total
    }

    pub fn validate(&self) -> Result<()> {
        if self.params.len() != self.layout.total {
            return Err(VoxError::Contract(format!(
                "parameter count {} != layout {}",
                self.params.len(),
                self.layout.total
            )));
        }
        if self.params.iter().any(|p| !p.is_finite()) {
            return Err(VoxError::Numeric("non-finite parameter".into()));
        }
        Ok(())
    }

    fn table_slot(&self, level: usize, cx: u64, cy: u64, cz: u64) -> u32 {
        let mask = (self.cfg.grid.table_size() - 1) as u64;
        let h = cx.wrapping_mul(HASH_PRIMES[0])
            ^ cy.wrapping_mul(HASH_PRIMES[1])
            ^ cz.wrapping_mul(HASH_PRIMES[2]);
        let _ = level;
        (h & mask) as u32
    }

    /// Tri-linearly interpolated features of all levels, concatenated.
    /// Positions outside [0,1]^3 are clamped (flag recorded in the trace).
    pub fn hash_encode(&self, position: Vec3, trace: &mut Trace) {
        let g = &self.cfg.grid;
        let f = g.features_per_level;
        trace.clamped = !(0.0..=1.0).contains(&position.x)
            || !(0.0..=1.0).contains(&position.y)
            || !(0.0..=1.0).contains(&position.z);
        let p = Vec3 {
            x: position.x.clamp(0.0, 1.0),
            y: position.y.clamp(0.0, 1.0),
            z: position.z.clamp(0.0, 1.0),
        };
        trace.slots.resize(g.n_levels, [0; 8]);
        trace.corner_w.resize(g.n_levels, [0.0; 8]);
        trace.features.resize(g.feat_dim(), 0.0);
        let table_stride = g.table_size() * f;
        for level in 0..g.n_levels {
            let res = g.resolution(level) as f64;
            let sx = p.x * res;
            let sy = p.y * res;
            let sz = p.z * res;
            let x0 = sx.floor().min(res);
            let y0 = sy.floor().min(res);
            let z0 = sz.floor().min(res);
            let (fx, fy, fz) = (sx - x0, sy - y0, sz - z0);
            let (x0, y0, z0) = (x0 as u64, y0 as u64, z0 as u64);
            let mut acc = [0.0f64; 8]; // up to features_per_level actually used
            debug_assert!(f <= 8);
            for corner in 0..8usize {
                let dx = (corner & 1) as u64;
                let dy = ((corner >> 1) & 1) as u64;
                let dz = ((corner >> 2) & 1) as u64;
                let w = (if dx == 1 { fx } else { 1.0 - fx })
                    * (if dy == 1 { fy } else { 1.0 - fy })
                    * (if dz == 1 { fz } else { 1.0 - fz });
                let slot = self.table_slot(level, x0 + dx, y0 + dy, z0 + dz);
                trace.slots[level][corner] = slot;
                trace.corner_w[level][corner] = w;
                let base = self.layout.tables + level * table_stride + slot as usize * f;
                for k in 0..f {
                    acc[k] += w * self.params[base + k];
                }
            }
            for k in 0..f {
                trace.features[level * f + k] = acc[k];
            }
        }
    }

    /// Forward evaluation, caching intermediates in `trace`.
    pub fn forward_traced(&self, position: Vec3, dir_enc: &[f64; SH_DIM], trace: &mut Trace) {
        self.hash_encode(position, trace);
        let cfg = &self.cfg;
        let lay = &self.layout;
        let feat = cfg.grid.feat_dim();
        let dh = cfg.density_hidden;
        let dout = 1 + cfg.hidden_dim;
        let ch = cfg.color_hidden;
        let cin = cfg.color_in_dim();

        trace.dens_pre_sig.resize(dh, 0.0);
        trace.dens_act.resize(dh, 0.0);
        trace.dens_out.resize(dout, 0.0);
        trace.color_in.resize(cin, 0.0);
        trace.c1_sig.resize(ch, 0.0);
        trace.c1_act.resize(ch, 0.0);
        trace.c2_sig.resize(ch, 0.0);
        trace.c2_act.resize(ch, 0.0);

        // density decoder: feat -> dh (softplus) -> 1 + hidden_dim (linear)
        for i in 0..dh {
            let row = &self.params[lay.dens_w1 + i * feat..lay.dens_w1 + (i + 1) * feat];
            let pre = dot(row, &trace.features) + self.params[lay.dens_b1 + i];
            trace.dens_pre_sig[i] = sigmoid(pre);
            trace.dens_act[i] = softplus(pre);
        }
        for i in 0..dout {
            let row = &self.params[lay.dens_w2 + i * dh..lay.dens_w2 + (i + 1) * dh];
            trace.dens_out[i] = dot(row, &trace.dens_act) + self.params[lay.dens_b2 + i];
        }
        let raw = trace.dens_out[0];
        trace.dens_raw_sig = sigmoid(raw);
        trace.density = softplus(raw);

        // color decoder: [hidden, sh(d)] -> ch -> ch (softplus) -> 3 (sigmoid)
        trace.color_in[..cfg.hidden_dim].copy_from_slice(&trace.dens_out[1..]);
        trace.color_in[cfg.hidden_dim..].copy_from_slice(dir_enc);
        for i in 0..ch {
            let row = &self.params[lay.col_w1 + i * cin..lay.col_w1 + (i + 1) * cin];
            let pre = dot(row, &trace.color_in) + self.params[lay.col_b1 + i];
            trace.c1_sig[i] = sigmoid(pre);
            trace.c1_act[i] = softplus(pre);
        }
        for i in 0..ch {
            let row = &self.params[lay.col_w2 + i * ch..lay.col_w2 + (i + 1) * ch];
            let pre = dot(row, &trace.c1_act) + self.params[lay.col_b2 + i];
            trace.c2_sig[i] = sigmoid(pre);
            trace.c2_act[i] = softplus(pre);
        }
        for i in 0..3 {
            let row = &self.params[lay.col_w3 + i * ch..lay.col_w3 + (i + 1) * ch];
            let pre = dot(row, &trace.c2_act) + self.params[lay.col_b3 + i];
            trace.color[i] = sigmoid(pre);
        }
    }

    /// Convenience forward returning a [`FieldOutput`].
    pub fn forward(&self, position: Vec3, direction: Vec3) -> FieldOutput {
        let mut trace = Trace::default();
        let enc = dir_encode(direction);
        self.forward_traced(position, &enc, &mut trace);
        FieldOutput {
            density: trace.density,
            color: trace.color,
            hidden: trace.dens_out[1..].to_vec(),
        }
    }

    /// Reverse pass for one sample. Accumulates exact parameter gradients
    /// into `grads` (same layout as `params`).
    pub fn backward_traced(
        &self,
        trace: &Trace,
        d_density: f64,
        d_color: [f64; 3],
        grads: &mut [f64],
    ) {
        debug_assert_eq!(grads.len(), self.layout.total);
        let cfg = &self.cfg;
        let lay = &self.layout;
        let feat = cfg.grid.feat_dim();
        let dh = cfg.density_hidden;
        let dout = 1 + cfg.hidden_dim;
        let ch = cfg.color_hidden;
        let cin = cfg.color_in_dim();
        let f = cfg.grid.features_per_level;

        // output sigmoids
        let mut d_pre3 = [0.0f64; 3];
        for i in 0..3 {
            let s = trace.color[i];
            d_pre3[i] = d_color[i] * s * (1.0 - s);
        }
        let mut d_c2act = vec![0.0f64; ch];
        for i in 0..3 {
            let g = d_pre3[i];
            if g != 0.0 {
                let row_off = lay.col_w3 + i * ch;
                for j in 0..ch {
                    grads[row_off + j] += g * trace.c2_act[j];
                    d_c2act[j] += g * self.params[row_off + j];
                }
            }
            grads[lay.col_b3 + i] += g;
        }

        let mut d_c1act = vec![0.0f64; ch];
        for i in 0..ch {
            let g = d_c2act[i] * trace.c2_sig[i];
            if g != 0.0 {
                let row_off = lay.col_w2 + i * ch;
                for j in 0..ch {
                    grads[row_off + j] += g * trace.c1_act[j];
                    d_c1act[j] += g * self.params[row_off + j];
                }
                grads[lay.col_b2 + i] += g;
            }
        }

        let mut d_color_in = vec![0.0f64; cin];
        for i in 0..ch {
            let g = d_c1act[i] * trace.c1_sig[i];
            if g != 0.0 {
                let row_off = lay.col_w1 + i * cin;
                for j in 0..cin {
                    grads[row_off + j] += g * trace.color_in[j];
                    d_color_in[j] += g * self.params[row_off + j];
                }
                grads[lay.col_b1 + i] += g;
            }
        }

        // density decoder output: raw density through softplus', hidden code
        // from the color branch
        let mut d_dens_out = vec![0.0f64; dout];
        d_dens_out[0] = d_density * trace.dens_raw_sig;
        d_dens_out[1..].copy_from_slice(&d_color_in[..cfg.hidden_dim]);

        let mut d_dens_act = vec![0.0f64; dh];
        for i in 0..dout {
            let g = d_dens_out[i];
            if g != 0.0 {
                let row_off = lay.dens_w2 + i * dh;
                for j in 0..dh {
                    grads[row_off + j] += g * trace.dens_act[j];
                    d_dens_act[j] += g * self.params[row_off + j];
                }
                grads[lay.dens_b2 + i] += g;
            }
        }

        let mut d_features = vec![0.0f64; feat];
        for i in 0..dh {
            let g = d_dens_act[i] * trace.dens_pre_sig[i];
            if g != 0.0 {
                let row_off = lay.dens_w1 + i * feat;
                for j in 0..feat {
                    grads[row_off + j] += g * trace.features[j];
                    d_features[j] += g * self.params[row_off + j];
                }
                grads[lay.dens_b1 + i] += g;
            }
        }

        // hash tables: only the touched corner slots receive gradient
        let table_stride = cfg.grid.table_size() * f;
        for level in 0..cfg.grid.n_levels {
            for corner in 0..8 {
                let w = trace.corner_w[level][corner];
                if w == 0.0 {
                    continue;
                }
                let base = lay.tables
                    + level * table_stride
                    + trace.slots[level][corner] as usize * f;
                for k in 0..f {
                    grads[base + k] += w * d_features[level * f + k];
                }
            }
        }
    }
}
