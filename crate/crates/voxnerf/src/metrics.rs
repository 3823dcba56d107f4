//! Image-quality metrics (PSNR, single-scale SSIM) and split evaluation.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::field::Field;
use crate::image::Image;
use crate::render::{render_image, RenderOptions};
use crate::sampler::SamplerConfig;
use crate::svo::SparseVoxelOctree;
use crate::synth::{Dataset, Split};

pub const PSNR_CAP_DB: f64 = 99.0;

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if a.width != b.width || a.height != b.height {
        return Err(VoxError::Contract(format!(
            "image dimension mismatch: {}x{} vs {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    Ok(())
}

/// 10 log10(1 / MSE) over all channels, capped at [`PSNR_CAP_DB`].
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let n = a.pixels.len() * 3;
    let mse: f64 = a
        .pixels
        .iter()
        .zip(&b.pixels)
        .map(|(pa, pb)| {
            (0..3).map(|k| (pa[k] - pb[k]).powi(2)).sum::<f64>()
        })
        .sum::<f64>()
        / n as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP_DB);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP_DB))
}

fn gaussian_window() -> [f64; SSIM_WINDOW * SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW * SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    let mut sum = 0.0;
    for y in 0..SSIM_WINDOW {
        for x in 0..SSIM_WINDOW {
            let dx = x as f64 - c;
            let dy = y as f64 - c;
            let v = (-(dx * dx + dy * dy) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
            w[y * SSIM_WINDOW + x] = v;
            sum += v;
        }
    }
    for v in &mut w {
        *v /= sum;
    }
    w
}

/// Standard single-scale SSIM on channel-mean grayscale, 11x11 Gaussian
/// window (sigma 1.5), averaged over fully interior window placements.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let (w, h) = (a.width as usize, a.height as usize);
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(VoxError::Contract(format!(
            "image {w}x{h} smaller than the {SSIM_WINDOW}x{SSIM_WINDOW} SSIM window"
        )));
    }
    let ga = a.to_gray();
    let gb = b.to_gray();
    let win = gaussian_window();
    let c1 = SSIM_K1 * SSIM_K1;
    let c2 = SSIM_K2 * SSIM_K2;

    let mut total = 0.0;
    let mut count = 0usize;
    for y0 in 0..=(h - SSIM_WINDOW) {
        for x0 in 0..=(w - SSIM_WINDOW) {
            let (mut mu_a, mut mu_b) = (0.0, 0.0);
            let (mut aa, mut bb, mut ab) = (0.0, 0.0, 0.0);
            for wy in 0..SSIM_WINDOW {
                for wx in 0..SSIM_WINDOW {
                    let wt = win[wy * SSIM_WINDOW + wx];
                    let va = ga[(y0 + wy) * w + x0 + wx];
                    let vb = gb[(y0 + wy) * w + x0 + wx];
                    mu_a += wt * va;
                    mu_b += wt * vb;
                    aa += wt * va * va;
                    bb += wt * vb * vb;
                    ab += wt * va * vb;
                }
            }
            let var_a = aa - mu_a * mu_a;
            let var_b = bb - mu_b * mu_b;
            let cov = ab - mu_a * mu_b;
            total += (2.0 * mu_a * mu_b + c1) * (2.0 * cov + c2)
                / ((mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2));
            count += 1;
        }
    }
    Ok(total / count as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ViewMetrics {
    pub view: usize,
    pub psnr: f64,
    pub ssim: f64,
    /// Mean absolute rendered-depth error against ground truth, over pixels
    /// where both depths are valid; None when no pixel qualifies.
    pub depth_mae: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub split: Split,
    pub views: Vec<ViewMetrics>,
    pub mean_psnr: f64,
    pub mean_ssim: f64,
    pub mean_depth_mae: Option<f64>,
    pub seed: u64,
    pub iteration: u64,
}

/// Render every view of a split and compare with ground truth.
pub fn evaluate(
    field: &Field,
    svo: &SparseVoxelOctree,
    dataset: &Dataset,
    split: Split,
    sampler_cfg: &SamplerConfig,
    opts: &RenderOptions,
    t_near: f64,
    t_far: f64,
    iteration: u64,
) -> Result<EvalReport> {
    let views = dataset.views_in(split);
    if views.is_empty() {
        return Err(VoxError::EmptyInput("evaluation split"));
    }
    let per_view: Vec<Result<ViewMetrics>> = views
        .par_iter()
        .map(|&v| {
            let (img, depth) = render_image(
                field,
                svo,
                &dataset.cameras[v],
                sampler_cfg,
                opts,
                t_near,
                t_far,
                sampler_cfg.seed,
            )?;
            let gt_img = &dataset.images[v];
            let gt_depth = &dataset.depths[v];
            let mut err = 0.0;
            let mut n = 0usize;
            for i in 0..depth.data.len() {
                if depth.valid[i] && gt_depth.valid[i] {
                    err += (depth.data[i] - gt_depth.data[i]).abs();
                    n += 1;
                }
            }
            Ok(ViewMetrics {
                view: v,
                psnr: psnr(&img, gt_img)?,
                ssim: ssim(&img, gt_img)?,
                depth_mae: (n > 0).then(|| err / n as f64),
            })
        })
        .collect();
    let views: Vec<ViewMetrics> = per_view.into_iter().collect::<Result<_>>()?;
    let n = views.len() as f64;
    let mean_psnr = views.iter().map(|v| v.psnr).sum::<f64>() / n;
    let mean_ssim = views.iter().map(|v| v.ssim).sum::<f64>() / n;
    let with_depth: Vec<f64> = views.iter().filter_map(|v| v.depth_mae).collect();
    let mean_depth_mae = if with_depth.is_empty() {
        None
    } else {
        Some(with_depth.iter().sum::<f64>() / with_depth.len() as f64)
    };
    Ok(EvalReport {
        split,
        views,
        mean_psnr,
        mean_ssim,
        mean_depth_mae,
        seed: sampler_cfg.seed,
        iteration,
    })
}
