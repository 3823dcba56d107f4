//! Training losses: photometric color loss, robust two-branch depth loss,
//! multi-scale depth-gradient smoothness, and their weighted total.

use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub beta: f64,
    pub lambda_d: f64,
    pub n_scales: u32,
    pub patch_size: u32,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            beta: 0.1,
            lambda_d: 0.1,
            n_scales: 4,
            patch_size: 8,
        }
    }
}

impl LossConfig {
    /// Cap the scale count so the coarsest level keeps at least 2 px.
    pub fn effective_scales(&self) -> u32 {
        let mut s = 1;
        while s < self.n_scales && (self.patch_size >> s) >= 2 {
            s += 1;
        }
        s
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    pub l_color: f64,
    pub l_depth: f64,
    pub l_reg: f64,
    pub total: f64,
}

/// Mean over rays of the squared L2 color residual.
pub fn color_loss(pred: &[[f64; 3]], gt: &[[f64; 3]]) -> Result<f64> {
    if pred.len() != gt.len() || pred.is_empty() {
        return Err(VoxError::Contract(format!(
            "color batch shape mismatch: {} vs {}",
            pred.len(),
            gt.len()
        )));
    }
    let sum: f64 = pred
        .iter()
        .zip(gt)
        .map(|(p, g)| {
            (p[0] - g[0]).powi(2) + (p[1] - g[1]).powi(2) + (p[2] - g[2]).powi(2)
        })
        .sum();
    Ok(sum / pred.len() as f64)
}

/// Quadratic below beta, logarithmic above; both branches meet at beta^2/2.
pub fn robust_depth_loss(d_pred: f64, d_pseudo: f64, beta: f64) -> f64 {
    let r = (d_pred - d_pseudo).abs();
    if r < beta {
        0.5 * r * r
    } else {
        beta * beta * (0.5 + (r / beta).ln())
    }
}

/// d/dD_pred of [`robust_depth_loss`].
pub fn robust_depth_grad(d_pred: f64, d_pseudo: f64, beta: f64) -> f64 {
    let diff = d_pred - d_pseudo;
    let r = diff.abs();
    if r == 0.0 {
        0.0
    } else if r < beta {
        diff
    } else {
        beta * beta / r * diff.signum()
    }
}

fn downsample(
    depth: &[f64],
    mask: &[bool],
    w: usize,
    h: usize,
) -> (Vec<f64>, Vec<bool>, usize, usize) {
    let nw = w / 2;
    let nh = h / 2;
    let mut d = vec![0.0; nw * nh];
    let mut m = vec![false; nw * nh];
    for y in 0..nh {
        for x in 0..nw {
            let mut s = 0.0;
            let mut all = true;
            for dy in 0..2 {
                for dx in 0..2 {
                    let i = (2 * y + dy) * w + 2 * x + dx;
                    s += depth[i];
                    all &= mask[i];
                }
            }
            d[y * nw + x] = s * 0.25;
            m[y * nw + x] = all;
        }
    }
    (d, m, nw, nh)
}

/// Masked absolute forward differences summed over a pyramid of scales.
/// Each scale is normalized by its valid-pixel count; a difference term
/// requires both endpoints valid.
pub fn smoothness_reg(depth: &[f64], mask: &[bool], w: usize, h: usize, n_scales: u32) -> f64 {
    let mut total = 0.0;
    let mut d = depth.to_vec();
    let mut m = mask.to_vec();
    let (mut cw, mut ch) = (w, h);
    for s in 0..n_scales {
        if s > 0 {
            let (nd, nm, nw, nh) = downsample(&d, &m, cw, ch);
            d = nd;
            m = nm;
            cw = nw;
            ch = nh;
        }
        if cw < 2 || ch < 2 {
            break; // degenerate scale contributes nothing
        }
        let valid = m.iter().filter(|v| **v).count();
        if valid == 0 {
            continue;
        }
        let mut sum = 0.0;
        for y in 0..ch {
            for x in 0..cw {
                let i = y * cw + x;
                if !m[i] {
                    continue;
                }
                if x + 1 < cw && m[i + 1] {
                    sum += (d[i + 1] - d[i]).abs();
                }
                if y + 1 < ch && m[i + cw] {
                    sum += (d[i + cw] - d[i]).abs();
                }
            }
        }
        total += sum / valid as f64;
    }
    total
}

/// Gradient of [`smoothness_reg`] with respect to the full-resolution depths.
pub fn smoothness_reg_grad(
    depth: &[f64],
    mask: &[bool],
    w: usize,
    h: usize,
    n_scales: u32,
) -> Vec<f64> {
    // build the pyramid, then backpropagate scale by scale
    let mut levels: Vec<(Vec<f64>, Vec<bool>, usize, usize)> =
        vec![(depth.to_vec(), mask.to_vec(), w, h)];
    for _ in 1..n_scales {
        let (d, m, cw, ch) = levels.last().unwrap();
        if *cw < 2 || *ch < 2 {
            break;
        }
        levels.push(downsample(d, m, *cw, *ch));
    }
    let mut grad_full = vec![0.0; w * h];
    for (_s, (d, m, cw, ch)) in levels.iter().enumerate() {
        let (cw, ch) = (*cw, *ch);
        if cw < 2 || ch < 2 {
            continue;
        }
        let valid = m.iter().filter(|v| **v).count();
        if valid == 0 {
            continue;
        }
        let scale = 1.0 / valid as f64;
        let mut g = vec![0.0; cw * ch];
        for y in 0..ch {
            for x in 0..cw {
                let i = y * cw + x;
                if !m[i] {
                    continue;
                }
                if x + 1 < cw && m[i + 1] {
                    let s = (d[i + 1] - d[i]).signum();
                    g[i + 1] += s * scale;
                    g[i] -= s * scale;
                }
                if y + 1 < ch && m[i + cw] {
                    let s = (d[i + cw] - d[i]).signum();
                    g[i + cw] += s * scale;
                    g[i] -= s * scale;
                }
            }
        }
        // distribute through the average-pooling chain back to full res
        let mut up = g;
        let (mut uw, mut uh) = (cw, ch);
        for lev in (0.._s).rev() {
            let (_, _, pw, ph) = levels[lev];
            let mut parent = vec![0.0; pw * ph];
            for y in 0..uh {
                for x in 0..uw {
                    let gv = up[y * uw + x] * 0.25;
                    if gv == 0.0 {
                        continue;
                    }
                    for dy in 0..2 {
                        for dx in 0..2 {
                            parent[(2 * y + dy) * pw + 2 * x + dx] += gv;
                        }
                    }
                }
            }
            up = parent;
            uw = pw;
            uh = ph;
        }
        for (a, b) in grad_full.iter_mut().zip(&up) {
            *a += b;
        }
    }
    grad_full
}

/// L = L_c + lambda_d (L_d + L_reg).
pub fn total_loss(l_color: f64, l_depth: f64, l_reg: f64, cfg: &LossConfig) -> LossBreakdown {
    LossBreakdown {
        l_color,
        l_depth,
        l_reg,
        total: l_color + cfg.lambda_d * (l_depth + l_reg),
    }
}

/// One training patch: a P x P block of rays in row-major order.
#[derive(Debug, Clone)]
pub struct PatchData {
    pub size: u32,
    pub pred_colors: Vec<[f64; 3]>,
    pub gt_colors: Vec<[f64; 3]>,
    pub depths: Vec<f64>,
    /// Pseudo-depth from the prior geometry; None where the octree missed.
    pub pseudo: Vec<Option<f64>>,
}

/// Per-ray gradients of the total loss at the render outputs.
#[derive(Debug, Clone)]
pub struct PatchGrads {
    pub d_color: Vec<[f64; 3]>,
    pub d_depth: Vec<f64>,
}

/// Batch loss with exact gradients with respect to each ray's composited
/// color and depth. Color loss averages over all rays; depth loss over rays
/// with valid pseudo-depth; the smoothness term averages over patches.
pub fn batch_loss_and_grads(
    patches: &[PatchData],
    cfg: &LossConfig,
) -> Result<(LossBreakdown, Vec<PatchGrads>)> {
    if patches.is_empty() {
        return Err(VoxError::EmptyInput("loss batch"));
    }
    let n_rays: usize = patches.iter().map(|p| p.pred_colors.len()).sum();
    let n_valid: usize = patches
        .iter()
        .flat_map(|p| &p.pseudo)
        .filter(|d| d.is_some())
        .count();
    let scales = cfg.effective_scales();

    let mut l_color_sum = 0.0;
    let mut l_depth_sum = 0.0;
    let mut l_reg_sum = 0.0;
    let mut grads = Vec::with_capacity(patches.len());

    for patch in patches {
        let p = patch.size as usize;
        if patch.pred_colors.len() != p * p
            || patch.gt_colors.len() != p * p
            || patch.depths.len() != p * p
            || patch.pseudo.len() != p * p
        {
            return Err(VoxError::Contract("patch shape mismatch".into()));
        }
        let mut d_color = vec![[0.0; 3]; p * p];
        let mut d_depth = vec![0.0; p * p];

        for i in 0..p * p {
            let pr = patch.pred_colors[i];
            let gt = patch.gt_colors[i];
            for k in 0..3 {
                let r = pr[k] - gt[k];
                l_color_sum += r * r;
                d_color[i][k] = 2.0 * r / n_rays as f64;
            }
            if let Some(pd) = patch.pseudo[i] {
                l_depth_sum += robust_depth_loss(patch.depths[i], pd, cfg.beta);
                if n_valid > 0 {
                    d_depth[i] += cfg.lambda_d
                        * robust_depth_grad(patch.depths[i], pd, cfg.beta)
                        / n_valid as f64;
                }
            }
        }

        let mask: Vec<bool> = patch.pseudo.iter().map(|d| d.is_some()).collect();
        l_reg_sum += smoothness_reg(&patch.depths, &mask, p, p, scales);
        let rg = smoothness_reg_grad(&patch.depths, &mask, p, p, scales);
        for i in 0..p * p {
            d_depth[i] += cfg.lambda_d * rg[i] / patches.len() as f64;
        }
        grads.push(PatchGrads { d_color, d_depth });
    }

    let l_color = l_color_sum / n_rays as f64;
    let l_depth = if n_valid > 0 {
        l_depth_sum / n_valid as f64
    } else {
        0.0
    };
    let l_reg = l_reg_sum / patches.len() as f64;
    Ok((total_loss(l_color, l_depth, l_reg, cfg), grads))
}
