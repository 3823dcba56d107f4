//! Volume compositing of per-sample densities and colors, plus the whole-ray
//! and whole-frame drivers.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Result, VoxError};
use crate::field::{dir_encode, Field, Trace};
use crate::image::{DepthMap, Image};

use crate::raycast::{first_hit, generate_ray, Camera, Ray};
use crate::rng::substream;
use crate::sampler::{sample_for_strategy, SampleSet, SamplerConfig};
use crate::svo::SparseVoxelOctree;

const WEIGHT_EPS: f64 = 1e-10;
/// Pixels with opacity below this are masked invalid in depth maps.
pub const DEPTH_VALID_OPACITY: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RenderOptions {
    /// Composite this color against residual transmittance when set.
    pub background: Option<[f64; 3]>,
    /// Normalize accumulated depth by accumulated opacity (default) or
    /// report the raw weighted sum.
    pub normalize_depth: bool,
}

impl Default for RenderOptions {
    fn default() -> Self {
        RenderOptions {
            background: None,
            normalize_depth: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RenderResult {
    pub color: [f64; 3],
    pub depth: f64,
    pub weights: Vec<f64>,
    pub opacity: f64,
    pub residual_transmittance: f64,
}

/// Front-to-back compositing per the volume rendering quadrature:
/// alpha_i = 1 - exp(-delta_i sigma_i), T_i = exp(-sum_{j<i} delta_j sigma_j),
/// w_i = T_i alpha_i. Transmittance is accumulated in log space.
pub fn composite(
    sigmas: &[f64],
    colors: &[[f64; 3]],
    deltas: &[f64],
    ts: &[f64],
    opts: &RenderOptions,
) -> Result<RenderResult> {
    let n = sigmas.len();
    if n == 0 || colors.len() != n || deltas.len() != n || ts.len() != n {
        return Err(VoxError::Contract(format!(
            "composite length mismatch: {} {} {} {}",
            n,
            colors.len(),
            deltas.len(),
            ts.len()
        )));
    }
    let mut weights = Vec::with_capacity(n);
    let mut log_t: f64 = 0.0; // log transmittance
    let mut color = [0.0f64; 3];
    let mut depth_sum = 0.0;
    let mut opacity: f64 = 0.0;
    for i in 0..n {
        if sigmas[i] < 0.0 || deltas[i] <= 0.0 {
            return Err(VoxError::Contract(format!(
                "negative density or spacing at sample {i}: sigma {} delta {}",
                sigmas[i], deltas[i]
            )));
        }
        let a = deltas[i] * sigmas[i];
        let t_i = log_t.exp();
        let alpha = -(-a).exp_m1(); // 1 - exp(-a)
        let w = t_i * alpha;
        weights.push(w);
        for k in 0..3 {
            color[k] += w * colors[i][k];
        }
        depth_sum += w * ts[i];
        opacity += w;
        log_t -= a;
    }
    let residual = log_t.exp();
    if let Some(bg) = opts.background {
        for k in 0..3 {
            color[k] += residual * bg[k];
        }
    }
    let depth = if opts.normalize_depth {
        depth_sum / opacity.max(WEIGHT_EPS)
    } else {
        depth_sum
    };
    Ok(RenderResult {
        color,
        depth,
        weights,
        opacity,
        residual_transmittance: residual,
    })
}

/// Reverse pass of [`composite`]: gradients of a scalar loss with respect to
/// per-sample densities and colors, given the loss gradients at the outputs.
pub fn composite_backward(
    sigmas: &[f64],
    colors: &[[f64; 3]],
    deltas: &[f64],
    ts: &[f64],
    result: &RenderResult,
    d_color_out: [f64; 3],
    d_depth: f64,
    opts: &RenderOptions,
    d_sigmas: &mut [f64],
    d_colors: &mut [[f64; 3]],
) {
    let n = sigmas.len();
    debug_assert_eq!(d_sigmas.len(), n);
    debug_assert_eq!(d_colors.len(), n);
    let w_sum = result.opacity;
    let wc = w_sum.max(WEIGHT_EPS);
    let depth_sum: f64 = result
        .weights
        .iter()
        .zip(ts)
        .map(|(w, t)| w * t)
        .sum();

    // dL/dw_j, combining the color and depth heads
    let mut g = vec![0.0f64; n];
    for j in 0..n {
        let mut v = d_color_out[0] * colors[j][0]
            + d_color_out[1] * colors[j][1]
            + d_color_out[2] * colors[j][2];
        if opts.normalize_depth {
            v += d_depth * (ts[j] / wc - if w_sum > WEIGHT_EPS { depth_sum / (wc * wc) } else { 0.0 });
        } else {
            v += d_depth * ts[j];
        }
        g[j] = v;
    }
    let g_res = match opts.background {
        Some(bg) => d_color_out[0] * bg[0] + d_color_out[1] * bg[1] + d_color_out[2] * bg[2],
        None => 0.0,
    };

    // suffix sums of w_j g_j, then
    // dL/dsigma_i = delta_i (T_{i+1} g_i - sum_{j>i} w_j g_j - T_res g_res)
    let mut suffix = vec![0.0f64; n + 1];
    for j in (0..n).rev() {
        suffix[j] = suffix[j + 1] + result.weights[j] * g[j];
    }
    let mut log_t = 0.0;
    for i in 0..n {
        let a = deltas[i] * sigmas[i];
        log_t -= a;
        let t_next = log_t.exp(); // T_{i+1}
        d_sigmas[i] = deltas[i]
            * (t_next * g[i] - suffix[i + 1] - result.residual_transmittance * g_res);
        for k in 0..3 {
            d_colors[i][k] = result.weights[i] * d_color_out[k];
        }
    }
}

/// Single-ray pipeline: first hit, sampling, field evaluation, compositing.
/// Returns the samples alongside the result for loss bookkeeping.
pub fn render_ray(
    field: &Field,
    svo: &SparseVoxelOctree,
    ray: &Ray,
    sampler_cfg: &SamplerConfig,
    opts: &RenderOptions,
    rng: &mut crate::rng::Stream,
) -> Result<(RenderResult, SampleSet)> {
    let hit = first_hit(svo, ray);
    let samples = sample_for_strategy(ray, &hit, svo.leaf_size, sampler_cfg, rng);
    let root = svo.root_bounds;
    let side = root.extent().x;
    let enc = dir_encode(ray.direction);
    let mut trace = Trace::default();
    let n = samples.t.len();
    let mut sigmas = Vec::with_capacity(n);
    let mut colors = Vec::with_capacity(n);
    for &t in &samples.t {
        let p = (ray.at(t) - root.min) / side;
        field.forward_traced(p, &enc, &mut trace);
        sigmas.push(trace.density);
        colors.push(trace.color);
    }
    let result = composite(&sigmas, &colors, &samples.delta, &samples.t, opts)?;
    Ok((result, samples))
}

/// Whole-frame driver. Rays use per-pixel derived substreams, so the result
/// is identical regardless of scheduling or thread count.
pub fn render_image(
    field: &Field,
    svo: &SparseVoxelOctree,
    camera: &Camera,
    sampler_cfg: &SamplerConfig,
    opts: &RenderOptions,
    t_near: f64,
    t_far: f64,
    seed: u64,
) -> Result<(Image, DepthMap)> {
    camera.validate()?;
    let w = camera.width;
    let h = camera.height;
    let results: Vec<(usize, Result<(RenderResult, SampleSet)>)> = (0..(w * h) as usize)
        .into_par_iter()
        .map(|i| {
            let px = (i as u32 % w) as f64;
            let py = (i as u32 / w) as f64;
            let ray = generate_ray(camera, px, py, t_near, t_far);
            let mut rng = substream(seed, &[0x8e6d, i as u64]);
            (i, render_ray(field, svo, &ray, sampler_cfg, opts, &mut rng))
        })
        .collect();
    let mut image = Image::new(w, h);
    let mut depth = DepthMap::new(w, h);
    for (i, r) in results {
        let (res, _) = r?;
        image.pixels[i] = res.color;
        depth.data[i] = res.depth;
        depth.valid[i] = res.opacity >= DEPTH_VALID_OPACITY;
    }
    Ok((image, depth))
}
